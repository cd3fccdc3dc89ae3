"""Catalogue of LC + isomorphism entanglement classes of connected graphs.

A catalogue for order n partitions every connected n-vertex graph (up to
isomorphism) into classes closed under local complementation, assigns
cumulative class ids starting from the 2-vertex graph, and records per-class
representatives, sizes and orbit diameters.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .graphs import (
    Graph,
    SizeGuardError,
    canonical_form,
    encode_upper_triangle,
    format_graph,
    local_complement,
    parse_graph,
)

CATALOGUE_MAX_ORDER = 9
CATALOGUE_FORMAT = "PSGRAPH-CAT v1"


class CatalogueError(ValueError):
    """Corrupt, truncated or incompatible catalogue data."""


@dataclass(frozen=True)
class ClassRecord:
    class_id: int
    representative: Graph
    member_count: int
    orbit_diameter: int


@dataclass(frozen=True)
class Catalogue:
    order: int
    classes: tuple[ClassRecord, ...]
    lookup: dict[str, int]

    def class_count(self) -> int:
        return len(self.classes)

    def class_ids(self) -> list[int]:
        return [c.class_id for c in self.classes]

    def record(self, class_id: int) -> ClassRecord:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(f"no class {class_id} in order-{self.order} catalogue")


# ---------------------------------------------------------------------------
# enumeration of connected graphs up to isomorphism
# ---------------------------------------------------------------------------

def _canon_adj(g: Graph) -> tuple[int, ...]:
    return canonical_form(g)[0].adj


def _children_of(args) -> set[tuple[int, ...]]:
    parent_adj, k = args
    parent = Graph(k - 1, parent_adj)
    out: set[tuple[int, ...]] = set()
    for mask in range(1, 1 << (k - 1)):
        adj = [row | ((mask >> v & 1) << (k - 1)) for v, row in enumerate(parent.adj)]
        adj.append(mask)
        out.add(_canon_adj(Graph(k, tuple(adj))))
    return out


_ENUM_CACHE: dict[int, list[tuple[int, ...]]] = {}


def enumerate_connected_graphs(n: int, jobs: int = 1) -> list[Graph]:
    """All connected order-n graphs up to isomorphism, canonically labelled,
    sorted by (edge count, adjacency encoding).  Built by augmenting the
    order n-1 list with one new vertex joined to every neighbour subset."""
    if not (1 <= n <= CATALOGUE_MAX_ORDER):
        raise SizeGuardError(f"enumeration limited to n <= {CATALOGUE_MAX_ORDER}")
    if n not in _ENUM_CACHE:
        if n == 1:
            _ENUM_CACHE[1] = [(0,)]
        else:
            parents = enumerate_connected_graphs(n - 1)
            tasks = [(p.adj, n) for p in parents]
            found: set[tuple[int, ...]] = set()
            if jobs > 1 and len(tasks) > 64:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    for child_set in pool.map(_children_of, tasks, chunksize=16):
                        found |= child_set
            else:
                for t in tasks:
                    found |= _children_of(t)
            _ENUM_CACHE[n] = sorted(
                found,
                key=lambda adj: (
                    sum(bin(r).count("1") for r in adj) // 2,
                    encode_upper_triangle(Graph(n, adj)),
                ),
            )
    return [Graph(n, adj) for adj in _ENUM_CACHE[n]]


# ---------------------------------------------------------------------------
# LC orbits
# ---------------------------------------------------------------------------

def lc_orbit(g: Graph) -> dict[str, int]:
    """Breadth-first closure of g under local complementation at every
    vertex, deduplicated by canonical form.  Maps each member's canonical
    encoding to its minimal LC-step distance from g."""
    if g.n > CATALOGUE_MAX_ORDER + 1:
        raise SizeGuardError("lc_orbit limited to n <= 10")
    start, _ = canonical_form(g)
    dist = {format_graph(start): 0}
    frontier = [start]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for h in frontier:
            for a in range(h.n):
                img, _ = canonical_form(local_complement(h, a))
                key = format_graph(img)
                if key not in dist:
                    dist[key] = d
                    nxt.append(img)
        frontier = nxt
    return dist


# ---------------------------------------------------------------------------
# catalogue construction
# ---------------------------------------------------------------------------

_CATALOGUE_CACHE: dict[int, Catalogue] = {}


def _representative_key(g: Graph) -> tuple[int, int]:
    return (g.edge_count(), encode_upper_triangle(g))


def build_catalogue(n: int, jobs: int = 1) -> Catalogue:
    """Partition all connected order-n graphs into LC classes.

    Class ids are cumulative: class 1 is the single 2-vertex class, and the
    first order-n class follows the last order-(n-1) class.  Within an
    order, classes are sorted by (representative edge count, representative
    encoding); representatives minimise the same key inside their class.
    """
    if not (2 <= n <= CATALOGUE_MAX_ORDER):
        raise SizeGuardError(f"catalogue limited to 2 <= n <= {CATALOGUE_MAX_ORDER}")
    if n in _CATALOGUE_CACHE:
        return _CATALOGUE_CACHE[n]
    offset = 0
    for k in range(2, n):
        offset += build_catalogue(k, jobs=jobs).class_count()

    graphs = enumerate_connected_graphs(n, jobs=jobs)
    by_encoding = {format_graph(g): g for g in graphs}
    assigned: set[str] = set()
    orbits: list[tuple[Graph, dict[str, int]]] = []
    for g in graphs:
        key = format_graph(g)
        if key in assigned:
            continue
        closure = lc_orbit(g)
        members = [by_encoding[enc] for enc in closure]
        rep = min(members, key=_representative_key)
        distances = lc_orbit(rep) if format_graph(rep) != key else closure
        orbits.append((rep, distances))
        assigned |= set(closure)

    orbits.sort(key=lambda item: _representative_key(item[0]))
    classes = []
    lookup: dict[str, int] = {}
    for i, (rep, distances) in enumerate(orbits):
        cid = offset + i + 1
        classes.append(
            ClassRecord(
                class_id=cid,
                representative=rep,
                member_count=len(distances),
                orbit_diameter=max(distances.values()),
            )
        )
        for enc in distances:
            lookup[enc] = cid
    cat = Catalogue(order=n, classes=tuple(classes), lookup=lookup)
    _CATALOGUE_CACHE[n] = cat
    return cat


def classify(cat: Catalogue, g: Graph) -> int:
    """Class id of a connected graph of the catalogue's order."""
    if g.n != cat.order:
        raise ValueError(f"graph order {g.n} does not match catalogue order {cat.order}")
    if not g.is_connected():
        raise ValueError("classify requires a connected graph")
    enc = format_graph(canonical_form(g)[0])
    try:
        return cat.lookup[enc]
    except KeyError:  # pragma: no cover - lookup is total over connected graphs
        raise CatalogueError(f"encoding {enc} missing from catalogue; file corrupt?")


def max_orbit_diameter(cat: Catalogue) -> int:
    return max(c.orbit_diameter for c in cat.classes)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_catalogue(cat: Catalogue, path) -> None:
    lines = [f"{CATALOGUE_FORMAT} n={cat.order} classes={cat.class_count()}"]
    for c in cat.classes:
        lines.append(
            f"{c.class_id};{format_graph(c.representative)};{c.member_count};{c.orbit_diameter}"
        )
    for enc in sorted(cat.lookup):
        lines.append(f"{enc};{cat.lookup[enc]}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_catalogue(path) -> Catalogue:
    with open(path, encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise CatalogueError(f"{path}: empty catalogue file")
    head = lines[0].split()
    if len(head) != 4 or " ".join(head[:2]) != CATALOGUE_FORMAT:
        raise CatalogueError(f"{path}: bad or unsupported header {lines[0]!r}")
    try:
        order = int(head[2].removeprefix("n="))
        count = int(head[3].removeprefix("classes="))
    except ValueError:
        raise CatalogueError(f"{path}: malformed header fields {lines[0]!r}")
    body = [ln for ln in lines[1:] if ln]
    if len(body) < count:
        raise CatalogueError(f"{path}: truncated class section ({len(body)} < {count})")
    classes = []
    for ln in body[:count]:
        parts = ln.split(";")
        if len(parts) != 5:  # graph text carries one ';' of its own
            raise CatalogueError(f"{path}: malformed class record {ln!r}")
        try:
            rep = parse_graph(parts[1] + ";" + parts[2])
            rec = ClassRecord(int(parts[0]), rep, int(parts[3]), int(parts[4]))
        except ValueError as exc:
            raise CatalogueError(f"{path}: bad class record {ln!r}: {exc}")
        if rep.n != order:
            raise CatalogueError(f"{path}: representative order mismatch in {ln!r}")
        classes.append(rec)
    lookup: dict[str, int] = {}
    valid_ids = {c.class_id for c in classes}
    for ln in body[count:]:
        parts = ln.split(";")
        if len(parts) != 3:
            raise CatalogueError(f"{path}: malformed lookup line {ln!r}")
        enc = parts[0] + ";" + parts[1]
        try:
            cid = int(parts[2])
        except ValueError:
            raise CatalogueError(f"{path}: bad class id in {ln!r}")
        if cid not in valid_ids:
            raise CatalogueError(f"{path}: lookup references unknown class {cid}")
        lookup[enc] = cid
    expected = sum(c.member_count for c in classes)
    if len(lookup) != expected:
        raise CatalogueError(
            f"{path}: truncated lookup section ({len(lookup)} entries, expected {expected})"
        )
    return Catalogue(order=order, classes=tuple(classes), lookup=lookup)


def resolve_catalogue_path(spec: str) -> str:
    """Resolve a --catalogue argument, falling back to PSGRAPH_CATALOGUE_DIR."""
    if os.path.exists(spec):
        return spec
    env = os.environ.get("PSGRAPH_CATALOGUE_DIR")
    if env:
        candidate = os.path.join(env, spec)
        if os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"catalogue file {spec!r} not found")
