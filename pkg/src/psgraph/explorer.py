"""Monte-Carlo exploration of postselectable graph-state experiments.

Samples rule-passing schemes for a photonic resource, interleaves the
entangling rewrites with local complementations, and accumulates the set of
entanglement classes reached together with the best recipe per class.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .classes import Catalogue, classify, max_orbit_diameter
from .graphs import Graph, cz_toggle, format_graph, fuse, is_tree, local_complement, random_labelled_tree
from .scheme import GateEdge, ModellingError, Scheme, SourceEdge, check_nondegenerate, full_verdict

DEFAULT_SEED = 1729
DEFAULT_CONVERGENCE = 5.0 / 6.0
DEFAULT_BATCH = 500
DEFAULT_MIN_ITERATIONS = 20000  # floor before the convergence rule may stop the search
TOPOLOGY_RESAMPLE_CAP = 10000
DEGENERATE_VARIANTS = 50  # kind/LC permutations per verdict-checked topology

CZ_PROBABILITY = 1.0 / 9.0
FUSION_PROBABILITY = 0.5

REPORT_FORMAT = "PSGRAPH-REPORT v1"


@dataclass(frozen=True)
class Resource:
    """Counts of photonic resources; qubit layout is nd-pairs, degenerate
    pairs, Bell pairs, then singles."""

    nd_epp: int = 0
    deg_epp: int = 0
    bell: int = 0
    single: int = 0

    def __post_init__(self):
        if min(self.nd_epp, self.deg_epp, self.bell, self.single) < 0:
            raise ValueError("resource counts must be non-negative")
        if self.n < 2:
            raise ValueError("resource must supply at least two qubits")

    @property
    def pairs(self) -> int:
        return self.nd_epp + self.deg_epp + self.bell

    @property
    def n(self) -> int:
        return 2 * self.pairs + self.single

    def source_edges(self) -> tuple[SourceEdge, ...]:
        out = []
        q = 0
        for count, flavour in (
            (self.nd_epp, "nondegenerate"),
            (self.deg_epp, "degenerate"),
            (self.bell, "bell"),
        ):
            for _ in range(count):
                out.append(SourceEdge(q, q + 1, flavour))
                q += 2
        return tuple(out)

    def single_qubits(self) -> frozenset[int]:
        return frozenset(range(2 * self.pairs, self.n))

    def initial_graph(self) -> Graph:
        return Graph.from_edges(self.n, [(s.a, s.b) for s in self.source_edges()])

    def describe(self) -> str:
        parts = []
        if self.nd_epp:
            parts.append(f"{self.nd_epp}xND-EPP")
        if self.deg_epp:
            parts.append(f"{self.deg_epp}xD-EPP")
        if self.bell:
            parts.append(f"{self.bell}xBELL")
        if self.single:
            parts.append(f"{self.single}xSINGLE")
        return ",".join(parts)


def parse_resource(text: str) -> Resource:
    """Parse a resource string such as "2xND-EPP,1xSINGLE"."""
    counts = {"nd_epp": 0, "deg_epp": 0, "bell": 0, "single": 0}
    names = {
        "ND-EPP": "nd_epp",
        "NDEPP": "nd_epp",
        "D-EPP": "deg_epp",
        "DEG-EPP": "deg_epp",
        "EPP": "deg_epp",
        "BELL": "bell",
        "PAIR": "bell",
        "SINGLE": "single",
        "SPS": "single",
    }
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        count, _, name = item.partition("x")
        key = names.get(name.strip().upper())
        if key is None or not count.strip().isdigit():
            raise ValueError(f"bad resource component {item!r}")
        counts[key] += int(count)
    return Resource(**counts)


@dataclass(frozen=True)
class GateOp:
    kind: str
    i: int
    j: int


@dataclass(frozen=True)
class LCOp:
    a: int


def format_ops(ops) -> str:
    toks = []
    for op in ops:
        if isinstance(op, GateOp):
            toks.append(("cz" if op.kind == "cz" else "f") + f":{op.i}-{op.j}")
        else:
            toks.append(f"lc:{op.a}")
    return " ".join(toks)


def parse_ops(text: str):
    ops = []
    for tok in text.split():
        head, _, rest = tok.partition(":")
        if head == "lc":
            ops.append(LCOp(int(rest)))
        elif head in ("cz", "f"):
            a, _, b = rest.partition("-")
            ops.append(GateOp("cz" if head == "cz" else "fusion", int(a), int(b)))
        else:
            raise ValueError(f"bad recipe token {tok!r}")
    return tuple(ops)


@dataclass(frozen=True)
class Recipe:
    ops: tuple
    success_probability: float
    resulting_class: int | None = None

    def gate_count(self, kind: str) -> int:
        return sum(1 for op in self.ops if isinstance(op, GateOp) and op.kind == kind)


@dataclass
class ExplorationReport:
    resource: Resource
    seed: int
    convergence: float
    catalogue_order: int
    iterations: int = 0
    converged_at: int = 0
    converged: bool = False
    recipes: dict[int, Recipe] = field(default_factory=dict)

    @property
    def accessible(self) -> frozenset[int]:
        return frozenset(self.recipes)


def replay(recipe: Recipe, resource_or_graph) -> Graph:
    """Deterministically apply a recipe's rewrites to the resource graph."""
    if isinstance(resource_or_graph, Resource):
        g = resource_or_graph.initial_graph()
    else:
        g = resource_or_graph
    for op in recipe.ops:
        if isinstance(op, GateOp):
            g = cz_toggle(g, op.i, op.j) if op.kind == "cz" else fuse(g, op.i, op.j)
        else:
            g = local_complement(g, op.a)
    return g


def recipe_scheme(recipe: Recipe, resource: Resource) -> Scheme:
    """The experiment scheme a recipe corresponds to (gates in op order)."""
    gates = []
    t = 0
    for op in recipe.ops:
        if isinstance(op, GateOp):
            gates.append(GateEdge(t, op.kind, op.i, op.j))
            t += 1
    return Scheme(
        n=resource.n,
        sources=resource.source_edges(),
        singles=resource.single_qubits(),
        gates=tuple(gates),
    )


# ---------------------------------------------------------------------------
# topology sampling
# ---------------------------------------------------------------------------

def _random_connected_subset(resource: Resource, tree: Graph, rng: random.Random):
    """Random gate count L in [n-1-|E(R)|, n-1] and a size-L subset of the
    tree's edges keeping R plus the subset connected."""
    n = resource.n
    r_edges = resource.pairs
    lo = max(0, n - 1 - r_edges)
    hi = n - 1
    tree_edges = tree.edges()
    for _ in range(200):
        L = rng.randint(lo, hi)
        subset = rng.sample(tree_edges, L)
        g = resource.initial_graph()
        for i, j in subset:
            if not g.has_edge(i, j):
                g = cz_toggle(g, i, j)
        if g.is_connected():
            return subset
    return None


def _order_and_kinds(edges, rng: random.Random) -> list[GateEdge]:
    order = list(range(len(edges)))
    rng.shuffle(order)
    gates = []
    for t, k in enumerate(order):
        i, j = edges[k]
        kind = "cz" if rng.random() < 0.5 else "fusion"
        gates.append(GateEdge(t, kind, i, j))
    return gates


def sample_topology(resource: Resource, rng: random.Random) -> Scheme:
    """Random rule-passing scheme for the resource.

    Heralded resources draw a labelled tree on the qubits and a connected
    edge subset; non-degenerate pairs draw a tree over the sources (and any
    heralded units) expanded to exactly one gate per tree edge; degenerate
    resources rejection-sample candidates through the full verdict.
    """
    if resource.deg_epp > 0:
        for _ in range(TOPOLOGY_RESAMPLE_CAP):
            scheme = _sample_heralded_like(resource, rng)
            if scheme is None:
                continue
            try:
                if full_verdict(scheme).passed:
                    return scheme
            except ModellingError:
                continue
        raise RuntimeError("could not sample a rule-passing degenerate scheme")
    if resource.nd_epp > 0:
        return _sample_supernode_tree(resource, rng)
    scheme = None
    while scheme is None:
        scheme = _sample_heralded_like(resource, rng)
    return scheme


def _sample_heralded_like(resource: Resource, rng: random.Random) -> Scheme | None:
    tree = random_labelled_tree(resource.n, rng)
    subset = _random_connected_subset(resource, tree, rng)
    if subset is None:
        return None
    gates = _order_and_kinds(subset, rng)
    return Scheme(
        n=resource.n,
        sources=resource.source_edges(),
        singles=resource.single_qubits(),
        gates=tuple(gates),
    )


def _sample_supernode_tree(resource: Resource, rng: random.Random) -> Scheme:
    """Tree over sources and heralded units, one colour-consistent gate per
    tree edge (non-degenerate resources need exactly that many)."""
    units: list[tuple[int, ...]] = []
    for s in resource.source_edges():
        units.append((s.a, s.b))
    for q in sorted(resource.single_qubits()):
        units.append((q,))
    m = len(units)
    if m == 1:
        edges = []
    else:
        tree = random_labelled_tree(m, rng)
        edges = tree.edges()
    gate_edges = []
    for u, v in edges:
        gate_edges.append((rng.choice(units[u]), rng.choice(units[v])))
    gates = _order_and_kinds(gate_edges, rng)
    return Scheme(
        n=resource.n,
        sources=resource.source_edges(),
        singles=resource.single_qubits(),
        gates=tuple(gates),
    )


# ---------------------------------------------------------------------------
# executing a scheme as graph rewrites with interleaved LCs
# ---------------------------------------------------------------------------

def execute_scheme(scheme: Scheme, start: Graph, rng: random.Random,
                   fusion_lc_budget: int) -> tuple[Graph, tuple, float]:
    """Apply the scheme's gates in time order to the evolving graph.

    After a CZ, up to 5 alternating local complementations on its endpoints
    (starting at the second); after a fusion, up to ``fusion_lc_budget``
    local complementations on vertices drawn from the union of the
    endpoints' neighbourhoods (taken before the fusion) plus the endpoints.
    """
    g = start
    ops: list = []
    p = 1.0
    for gate in scheme.gates_in_time_order():
        i, j = gate.i, gate.j
        if gate.kind == "cz":
            g = cz_toggle(g, i, j)
            ops.append(GateOp("cz", i, j))
            p *= CZ_PROBABILITY
            for k in range(rng.randint(0, 5)):
                a = j if k % 2 == 0 else i
                g = local_complement(g, a)
                ops.append(LCOp(a))
        else:
            candidates = sorted(
                set(g.neighbour_list(i)) | set(g.neighbour_list(j)) | {i, j}
            )
            g = fuse(g, i, j)
            ops.append(GateOp("fusion", i, j))
            p *= FUSION_PROBABILITY
            for _ in range(rng.randint(0, fusion_lc_budget)):
                a = rng.choice(candidates)
                g = local_complement(g, a)
                ops.append(LCOp(a))
    return g, tuple(ops), p


# ---------------------------------------------------------------------------
# the main search
# ---------------------------------------------------------------------------

def _recipe_order_key(recipe: Recipe) -> tuple:
    return (-recipe.success_probability, len(recipe.ops), format_ops(recipe.ops))


def _run_batch(resource: Resource, cat: Catalogue, seed: int, batch_index: int,
               batch_size: int) -> list[tuple[int | None, tuple, float]]:
    """One deterministic batch of iterations; independent of other batches."""
    rng = random.Random(f"{seed}:{batch_index}")
    budget = max_orbit_diameter(cat)
    start = resource.initial_graph()
    out: list[tuple[int | None, tuple, float]] = []
    degenerate = resource.deg_epp > 0
    while len(out) < batch_size:
        scheme = sample_topology(resource, rng)
        variants = DEGENERATE_VARIANTS if degenerate else 1
        for _ in range(min(variants, batch_size - len(out))):
            varied = _requested_kinds(scheme, rng) if degenerate else scheme
            g, ops, p = execute_scheme(varied, start, rng, budget)
            if g.is_connected():
                out.append((classify(cat, g), ops, p))
            else:
                out.append((None, ops, p))
    return out


def _requested_kinds(scheme: Scheme, rng: random.Random) -> Scheme:
    """Re-roll the gate kinds on a fixed, already-verdict-checked ordered
    topology (kind choice never affects the verdict)."""
    gates = tuple(
        GateEdge(g.time, "cz" if rng.random() < 0.5 else "fusion", g.i, g.j)
        for g in scheme.gates
    )
    return Scheme(n=scheme.n, sources=scheme.sources, singles=scheme.singles, gates=gates)


def find_accessible_classes(resource: Resource, cat: Catalogue,
                            d: float = DEFAULT_CONVERGENCE,
                            seed: int = DEFAULT_SEED,
                            max_iterations: int = 1_000_000,
                            batch_size: int = DEFAULT_BATCH,
                            min_iterations: int | None = None,
                            jobs: int = 1) -> ExplorationReport:
    """Monte-Carlo accession search; stops once the last novel class lies
    before a (1-d) fraction of all iterations.  Identical seeds give
    identical reports for any job count (batches merge in index order)."""
    if not (0.0 < d < 1.0):
        raise ValueError("convergence fraction d must be in (0, 1)")
    if cat.order != resource.n:
        raise ValueError(
            f"catalogue order {cat.order} does not match resource qubits {resource.n}"
        )
    if min_iterations is None:
        min_iterations = DEFAULT_MIN_ITERATIONS
    report = ExplorationReport(
        resource=resource, seed=seed, convergence=d, catalogue_order=cat.order
    )

    def absorb(batch: list[tuple[int | None, tuple, float]]) -> None:
        for cid, ops, p in batch:
            report.iterations += 1
            if cid is None:
                continue
            recipe = Recipe(ops=ops, success_probability=p, resulting_class=cid)
            held = report.recipes.get(cid)
            if held is None:
                report.recipes[cid] = recipe
                report.converged_at = report.iterations
            elif _recipe_order_key(recipe) < _recipe_order_key(held):
                report.recipes[cid] = recipe

    def converged() -> bool:
        if report.iterations < min_iterations:
            return False
        return report.converged_at < (1.0 - d) * report.iterations

    batch_index = 0
    if jobs <= 1:
        while report.iterations < max_iterations and not converged():
            absorb(_run_batch(resource, cat, seed, batch_index, batch_size))
            batch_index += 1
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            while report.iterations < max_iterations and not converged():
                idxs = list(range(batch_index, batch_index + jobs))
                for batch in pool.map(
                    _run_batch,
                    [resource] * len(idxs), [cat] * len(idxs),
                    [seed] * len(idxs), idxs, [batch_size] * len(idxs),
                ):
                    absorb(batch)
                batch_index += len(idxs)
    report.converged = converged()
    verify_report(report)
    return report


def verify_report(report: ExplorationReport) -> None:
    """Soundness: every reported class must have a rule-passing scheme whose
    replay classifies back to it."""
    from .classes import build_catalogue

    cat = build_catalogue(report.catalogue_order)
    for cid, recipe in report.recipes.items():
        scheme = recipe_scheme(recipe, report.resource)
        verdict = full_verdict(scheme)
        if not verdict.passed:
            raise AssertionError(f"recipe for class {cid} fails {verdict.rule}")
        g = replay(recipe, report.resource)
        if not g.is_connected() or classify(cat, g) != cid:
            raise AssertionError(f"recipe for class {cid} does not replay to it")


# ---------------------------------------------------------------------------
# constructive tree recipes
# ---------------------------------------------------------------------------

def tree_recipe(target: Graph) -> tuple[Recipe, Scheme, Graph]:
    """Constructive recipe preparing a tree from postselected pairs.

    Even orders use n/2 non-degenerate pairs; odd orders use (n-1)/2 pairs
    plus one heralded single.  Returns (recipe, scheme, resource graph); the
    recipe replays on the resource graph to exactly the target.
    """
    if not is_tree(target):
        raise ValueError("tree_recipe requires a tree")
    adj = {v: set(target.neighbour_list(v)) for v in range(target.n)}
    vertices = set(range(target.n))
    pairs: list[tuple[int, int]] = []
    single: int | None = None
    ops: list = []

    def peel(verts: set[int]) -> None:
        nonlocal single
        if len(verts) == 1:
            single = next(iter(verts))
            return
        if len(verts) == 2:
            u, v = sorted(verts)
            pairs.append((u, v))
            return
        # Feature 1: pendant path y-x-w with deg(x) = 2
        for y in sorted(verts):
            if len(adj[y]) != 1:
                continue
            x = next(iter(adj[y]))
            if len(adj[x]) != 2:
                continue
            w = next(iter(adj[x] - {y}))
            adj[w].discard(x)
            saved = (adj.pop(x), adj.pop(y))
            peel(verts - {x, y})
            adj[x], adj[y] = saved
            adj[w].add(x)
            pairs.append((min(x, y), max(x, y)))
            ops.append(GateOp("cz", w, x))
            return
        # Feature 2: sibling leaves l1, l2 on w; predecessor contracts w into l1
        for w in sorted(verts):
            leaves = sorted(u for u in adj[w] if len(adj[u]) == 1)
            if len(leaves) < 2:
                continue
            l1, l2 = leaves[0], leaves[1]
            rest = adj[w] - {l1, l2}
            saved_w = adj.pop(w)
            adj.pop(l2)
            adj[l1] = set(rest)
            for u in rest:
                adj[u].discard(w)
                adj[u].add(l1)
            peel(verts - {w, l2})
            for u in rest:
                adj[u].discard(l1)
                adj[u].add(w)
            adj[l1] = {w}
            adj[l2] = {w}
            adj[w] = saved_w
            pairs.append((min(w, l2), max(w, l2)))
            ops.append(GateOp("fusion", l1, w))
            return
        raise AssertionError("every tree has a pendant path or sibling leaves")

    peel(vertices)
    probability = 1.0
    for op in ops:
        probability *= CZ_PROBABILITY if op.kind == "cz" else FUSION_PROBABILITY
    recipe = Recipe(ops=tuple(ops), success_probability=probability)
    sources = tuple(SourceEdge(a, b, "nondegenerate") for a, b in sorted(pairs))
    singles = frozenset({single} if single is not None else set())
    gates = tuple(GateEdge(t, op.kind, op.i, op.j) for t, op in enumerate(ops))
    scheme = Scheme(n=target.n, sources=sources, singles=singles, gates=gates)
    start = Graph.from_edges(target.n, sorted(pairs))
    return recipe, scheme, start


# ---------------------------------------------------------------------------
# fixed-interferometer scans
# ---------------------------------------------------------------------------

def fixed_interferometer_scan(topology: Scheme, cat: Catalogue,
                              rng: random.Random,
                              variants: int = DEGENERATE_VARIANTS) -> set[int]:
    """Classes reachable by one gate arrangement: permute kinds, time order
    and LC insertions over the fixed connectivity."""
    if not full_verdict(topology).passed:
        raise ValueError("topology must pass the postselection rules")
    has_degenerate = any(s.flavour == "degenerate" for s in topology.sources)
    budget = max_orbit_diameter(cat)
    start = Graph.from_edges(
        topology.n, [(s.a, s.b) for s in topology.sources]
    )
    reached: set[int] = set()
    base_edges = [(g.i, g.j) for g in topology.gates]
    for _ in range(variants):
        gates = _order_and_kinds(base_edges, rng)
        scheme = Scheme(n=topology.n, sources=topology.sources,
                        singles=topology.singles, gates=tuple(gates))
        if has_degenerate and not full_verdict(scheme).passed:
            continue  # re-ordering can break degenerate postselection
        g, _, _ = execute_scheme(scheme, start, rng, budget)
        if g.is_connected():
            reached.add(classify(cat, g))
    return reached


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def format_report(report: ExplorationReport) -> str:
    lines = [
        REPORT_FORMAT,
        f"resource={report.resource.describe()}",
        f"n={report.resource.n}",
        f"seed={report.seed}",
        f"d={report.convergence!r}",
        f"iterations={report.iterations}",
        f"converged_at={report.converged_at}",
        f"converged={int(report.converged)}",
        f"accessible={len(report.recipes)}",
    ]
    for cid in sorted(report.recipes):
        r = report.recipes[cid]
        lines.append(f"{cid};{r.success_probability!r};{format_ops(r.ops)}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> ExplorationReport:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != REPORT_FORMAT:
        raise ValueError("bad report header")
    meta: dict[str, str] = {}
    body: list[str] = []
    for ln in lines[1:]:
        if "=" in ln and ";" not in ln:
            k, _, v = ln.partition("=")
            meta[k] = v
        else:
            body.append(ln)
    report = ExplorationReport(
        resource=parse_resource(meta["resource"]),
        seed=int(meta["seed"]),
        convergence=float(meta["d"]),
        catalogue_order=int(meta["n"]),
        iterations=int(meta["iterations"]),
        converged_at=int(meta["converged_at"]),
        converged=bool(int(meta.get("converged", "0"))),
    )
    for ln in body:
        cid, _, rest = ln.partition(";")
        prob, _, opstext = rest.partition(";")
        report.recipes[int(cid)] = Recipe(
            ops=parse_ops(opstext),
            success_probability=float(prob),
            resulting_class=int(cid),
        )
    return report
