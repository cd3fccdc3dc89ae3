"""Experiment schemes and postselectability verdicts.

A scheme is the experiment drawn as a multigraph: qubits are vertices,
entangling gates are one kind of edge (time-ordered, CZ or fusion) and
photon-pair sources are another.  Heralded Bell pairs and heralded singles
carry no junk terms, so they enter the rules only through gate connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement

GATE_KINDS = ("cz", "fusion")
SOURCE_FLAVOURS = ("degenerate", "nondegenerate", "bell")
EPP_FLAVOURS = ("degenerate", "nondegenerate")

ORACLE_MAX_SOURCES = 5
ORACLE_MAX_GATES = 12
ORACLE_FALLBACK_TRIALS = 20000
RULE_MAX_VERTICES = 16

FAILS = "fails"
PASSES_NECESSARY = "passes-necessary"
PASSES_SUFFICIENT = "passes-sufficient"


class ModellingError(ValueError):
    """The scheme itself is inconsistent (not a postselection verdict)."""


@dataclass(frozen=True)
class GateEdge:
    time: int
    kind: str
    i: int
    j: int

    def endpoints(self) -> tuple[int, int]:
        return (self.i, self.j)


@dataclass(frozen=True)
class SourceEdge:
    a: int
    b: int
    flavour: str


@dataclass(frozen=True)
class Scheme:
    n: int
    sources: tuple[SourceEdge, ...]
    singles: frozenset[int]
    gates: tuple[GateEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(sorted(self.gates, key=lambda g: g.time)))
        covered: dict[int, str] = {}
        for s in self.sources:
            if s.flavour not in SOURCE_FLAVOURS:
                raise ModellingError(f"unknown source flavour {s.flavour!r}")
            for q in (s.a, s.b):
                if not 0 <= q < self.n:
                    raise ModellingError(f"source qubit {q} out of range")
                if q in covered:
                    raise ModellingError(f"qubit {q} fed twice")
                covered[q] = s.flavour
            if s.a == s.b:
                raise ModellingError("source endpoints must differ")
        for q in self.singles:
            if not 0 <= q < self.n:
                raise ModellingError(f"single qubit {q} out of range")
            if q in covered:
                raise ModellingError(f"qubit {q} fed twice")
            covered[q] = "single"
        if len(covered) != self.n:
            missing = sorted(set(range(self.n)) - set(covered))
            raise ModellingError(f"qubits without a photon source: {missing}")
        times = sorted(g.time for g in self.gates)
        if times != list(range(len(self.gates))):
            raise ModellingError("gate time indices must be a permutation of 0..k-1")
        for g in self.gates:
            if g.kind not in GATE_KINDS:
                raise ModellingError(f"unknown gate kind {g.kind!r}")
            if g.i == g.j or not (0 <= g.i < self.n and 0 <= g.j < self.n):
                raise ModellingError(f"bad gate endpoints ({g.i},{g.j})")

    def epp_sources(self) -> tuple[SourceEdge, ...]:
        return tuple(s for s in self.sources if s.flavour in EPP_FLAVOURS)

    def gates_in_time_order(self) -> tuple[GateEdge, ...]:
        return self.gates


@dataclass(frozen=True)
class Verdict:
    status: str
    rule: str
    witnesses: tuple = ()
    note: str = ""

    def __post_init__(self):
        if self.status == FAILS and not self.witnesses:
            raise ValueError("failing verdicts must carry a witness")

    @property
    def passed(self) -> bool:
        return self.status != FAILS


# ---------------------------------------------------------------------------
# multigraph cycle machinery
# ---------------------------------------------------------------------------

def _multigraph_cycles(n: int, edges: list[tuple[int, int]]) -> list[list[int]]:
    """All vertex-simple cycles of an undirected multigraph, as lists of
    edge indices.  Parallel edge pairs count as 2-cycles."""
    if n > RULE_MAX_VERTICES:
        raise ModellingError(f"cycle enumeration limited to {RULE_MAX_VERTICES} vertices")
    cycles: list[list[int]] = []
    groups: dict[tuple[int, int], list[int]] = {}
    for idx, (u, v) in enumerate(edges):
        groups.setdefault((min(u, v), max(u, v)), []).append(idx)
    for pair_edges in groups.values():
        for e1, e2 in combinations(pair_edges, 2):
            cycles.append([e1, e2])
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in range(n)}
    for idx, (u, v) in enumerate(edges):
        adj[u].append((v, idx))
        adj[v].append((u, idx))
    for root in range(n):
        stack = [(root, (root,), (), 1 << root)]
        while stack:
            v, path, used, visited = stack.pop()
            for u, eidx in adj[v]:
                if u == root and len(path) >= 3:
                    if path[1] < path[-1]:
                        cycles.append(list(used) + [eidx])
                elif u > root and not (visited >> u) & 1:
                    stack.append((u, path + (u,), used + (eidx,), visited | (1 << u)))
    return cycles


def _rule_edges(s: Scheme) -> tuple[list[tuple[int, int]], list[str]]:
    """Edges of the rule multigraph: gates plus EPP source edges."""
    edges = []
    kinds = []
    for g in s.gates:
        edges.append((g.i, g.j))
        kinds.append("gate")
    for src in s.epp_sources():
        edges.append((src.a, src.b))
        kinds.append("source")
    return edges, kinds


def _render_cycle(edges, kinds, cycle) -> tuple:
    return tuple(
        (edges[e][0], edges[e][1], kinds[e]) for e in sorted(cycle)
    )


# ---------------------------------------------------------------------------
# the three rules
# ---------------------------------------------------------------------------

def check_gate_cycles(s: Scheme) -> Verdict:
    """Gate cycles rule: any cycle in the gate multigraph masks failure."""
    parent = list(range(s.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for g in s.gates:
        ri, rj = find(g.i), find(g.j)
        if ri == rj:
            cycle = _gate_cycle_witness(s, g)
            return Verdict(FAILS, "gate-cycles", (cycle,))
        parent[ri] = rj
    return Verdict(PASSES_NECESSARY, "gate-cycles")


def _gate_cycle_witness(s: Scheme, closing: GateEdge) -> tuple:
    """Path between the closing gate's endpoints through earlier gates."""
    adj: dict[int, list[tuple[int, GateEdge]]] = {v: [] for v in range(s.n)}
    for g in s.gates:
        if g is closing:
            continue
        adj[g.i].append((g.j, g))
        adj[g.j].append((g.i, g))
    prev: dict[int, tuple[int, GateEdge]] = {closing.i: (-1, closing)}
    frontier = [closing.i]
    while frontier and closing.j not in prev:
        nxt = []
        for v in frontier:
            for u, g in adj[v]:
                if u not in prev:
                    prev[u] = (v, g)
                    nxt.append(u)
        frontier = nxt
    path = []
    v = closing.j
    while v != closing.i:
        pv, g = prev[v]
        path.append((g.i, g.j, "gate"))
        v = pv
    path.append((closing.i, closing.j, "gate"))
    return tuple(path)


def check_paths_rule(s: Scheme) -> Verdict:
    """Paths rule: two EPP sources joined by edge-disjoint gate paths that
    pair up their qubits are not postselectable.  Decided by unit-capacity
    max-flow; paths may share vertices but not gate edges."""
    sources = s.epp_sources()
    for s1, s2 in combinations(sources, 2):
        paths = _edge_disjoint_paths(s, (s1.a, s1.b), (s2.a, s2.b))
        if paths is not None:
            return Verdict(FAILS, "paths", (tuple(tuple(p) for p in paths),))
    return Verdict(PASSES_NECESSARY, "paths")


class _FlowNet:
    """Minimal augmenting-path max-flow (unit capacities, tiny graphs)."""

    def __init__(self, nodes: int):
        self.adj: list[list[int]] = [[] for _ in range(nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.tag: list = []

    def add(self, u: int, v: int, cap: int, tag=None) -> None:
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(cap)
        self.tag.append(tag)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)
        self.tag.append(None)

    def augment(self, s: int, t: int) -> bool:
        prev: dict[int, int] = {s: -1}
        frontier = [s]
        while frontier and t not in prev:
            nxt = []
            for u in frontier:
                for a in self.adj[u]:
                    v = self.to[a]
                    if self.cap[a] > 0 and v not in prev:
                        prev[v] = a
                        nxt.append(v)
            frontier = nxt
        if t not in prev:
            return False
        v = t
        while v != s:
            a = prev[v]
            self.cap[a] -= 1
            self.cap[a ^ 1] += 1
            v = self.to[a ^ 1]
        return True


def _edge_disjoint_paths(s: Scheme, left: tuple[int, int], right: tuple[int, int]):
    """Two edge-disjoint gate paths pairing {left} onto {right}, or None.

    Each undirected gate edge becomes a forward and a backward unit arc; a
    supersource feeds left's qubits and a supersink drains right's, one unit
    each, so flow 2 means one path from each left qubit onto each right one.
    """
    S, T = s.n, s.n + 1
    net = _FlowNet(s.n + 2)
    for idx, g in enumerate(s.gates):
        net.add(g.i, g.j, 1, ("gate", idx))
        net.add(g.j, g.i, 1, ("gate", idx))
    for q in left:
        net.add(S, q, 1, ("src", q))
    sink_arcs = {}
    for q in right:
        sink_arcs[q] = len(net.to)
        net.add(q, T, 1, ("snk", q))
    if not (net.augment(S, T) and net.augment(S, T)):
        return None
    # net flow per gate edge: +1 means used i->j, -1 means j->i, 0 unused
    # (antiparallel unit flows cancel); arcs for gate idx sit at 4*idx..4*idx+3
    step: dict[int, list[tuple[int, int]]] = {v: [] for v in range(s.n)}
    for idx, g in enumerate(s.gates):
        f_ij = 1 - net.cap[4 * idx]
        f_ji = 1 - net.cap[4 * idx + 2]
        if f_ij - f_ji > 0:
            step[g.i].append((g.j, idx))
        elif f_ji - f_ij > 0:
            step[g.j].append((g.i, idx))
    sink_credit = {q: 1 - net.cap[a] for q, a in sink_arcs.items()}
    paths = []
    for q in left:
        path = [q]
        v = q
        while not sink_credit.get(v):
            v, _ = step[v].pop()
            path.append(v)
        sink_credit[v] -= 1
        paths.append(path)
    return paths


def check_source_cycle_parity(s: Scheme) -> Verdict:
    """Source cycle parity rule: a closed edge-simple walk with an even
    number of EPP source edges (zero included) masks failure.  Equivalent to
    an even simple cycle, or two odd simple cycles sharing a vertex."""
    edges, kinds = _rule_edges(s)
    cycles = _multigraph_cycles(s.n, edges)
    odd: list[tuple[list[int], frozenset[int]]] = []
    for cyc in cycles:
        n_src = sum(1 for e in cyc if kinds[e] == "source")
        verts = frozenset(v for e in cyc for v in edges[e])
        if n_src % 2 == 0:
            return Verdict(FAILS, "source-cycle-parity", (_render_cycle(edges, kinds, cyc),))
        odd.append((cyc, verts))
    for (c1, v1), (c2, v2) in combinations(odd, 2):
        if v1 & v2:
            witness = (_render_cycle(edges, kinds, c1), _render_cycle(edges, kinds, c2))
            return Verdict(FAILS, "source-cycle-parity", (witness,))
    return Verdict(PASSES_NECESSARY, "source-cycle-parity")


# ---------------------------------------------------------------------------
# colour propagation (non-degenerate photons)
# ---------------------------------------------------------------------------

def colour_assignment(s: Scheme) -> dict[int, int] | None:
    """Two-colouring of qubits: non-degenerate sources force opposite
    colours, degenerate sources and gates force equal colours.  Returns a
    witness assignment, or raises ModellingError when inconsistent.  None
    when no non-degenerate source constrains anything."""
    if not any(src.flavour == "nondegenerate" for src in s.sources):
        return None
    constraints: dict[int, list[tuple[int, int, str]]] = {q: [] for q in range(s.n)}

    def bind(x, y, rel, what):
        constraints[x].append((y, rel, what))
        constraints[y].append((x, rel, what))

    for src in s.sources:
        if src.flavour == "nondegenerate":
            bind(src.a, src.b, 1, "source")
        elif src.flavour == "degenerate":
            bind(src.a, src.b, 0, "source")
    for g in s.gates:
        bind(g.i, g.j, 0, f"{g.kind} gate")

    colours: dict[int, int] = {}
    for start in range(s.n):
        if start in colours:
            continue
        colours[start] = 0
        frontier = [start]
        while frontier:
            v = frontier.pop()
            for u, rel, what in constraints[v]:
                want = colours[v] ^ rel
                if u not in colours:
                    colours[u] = want
                    frontier.append(u)
                elif colours[u] != want:
                    raise ModellingError(
                        f"colour-inconsistent {what} between qubits {v} and {u}"
                    )
    return colours


def check_nondegenerate(s: Scheme) -> Verdict:
    """Sufficient rule for non-degenerate EPP sources: colour-consistent
    schemes postselect iff the rule multigraph is acyclic."""
    if any(src.flavour == "degenerate" for src in s.sources):
        raise ModellingError("check_nondegenerate requires non-degenerate sources only")
    colour_assignment(s)  # raises on colour-inconsistent gates
    edges, kinds = _rule_edges(s)
    parent = list(range(s.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for idx, (u, v) in enumerate(edges):
        ru, rv = find(u), find(v)
        if ru == rv:
            cycles = _multigraph_cycles(s.n, edges)
            witness = _render_cycle(edges, kinds, cycles[0]) if cycles else ((u, v, kinds[idx]),)
            return Verdict(FAILS, "nondegenerate", (witness,))
        parent[ru] = rv
    return Verdict(PASSES_SUFFICIENT, "nondegenerate")


# ---------------------------------------------------------------------------
# exhaustive degenerate oracle
# ---------------------------------------------------------------------------

def _oracle_initial(s: Scheme, pattern: tuple[int, ...]) -> tuple[int, ...]:
    counts = [0] * s.n
    for src, k in zip(s.epp_sources(), pattern):
        counts[src.a] = k
        counts[src.b] = k
    for src in s.sources:
        if src.flavour == "bell":
            counts[src.a] = 1
            counts[src.b] = 1
    for q in s.singles:
        counts[q] = 1
    return tuple(counts)


def _firing_patterns(m: int) -> list[tuple[int, ...]]:
    out = []
    for combo in combinations_with_replacement(range(m), m):
        pat = [0] * m
        for c in combo:
            pat[c] += 1
        out.append(tuple(pat))
    return sorted(out, reverse=True)


def degenerate_oracle(s: Scheme, rng=None) -> Verdict:
    """Exhaustive photon-redistribution search.

    Every firing pattern of the EPP sources (total pairs = source count)
    seeds per-qubit photon counts; gates branch over all redistributions of
    the photons on their endpoints.  The scheme fails iff some branch ends
    with one photon per qubit after deviating from the nominal one-per-qubit
    history (junk masked as success).  Witness: the pattern plus the
    per-gate splits of one failing trace.
    """
    sources = s.epp_sources()
    m = len(sources)
    gates = s.gates_in_time_order()
    if m > ORACLE_MAX_SOURCES or len(gates) > ORACLE_MAX_GATES:
        return _oracle_fallback(s, rng)
    all_ones = tuple([1] * m)
    target = tuple([1] * s.n)
    patterns = _firing_patterns(m) if m else [()]
    for pattern in patterns:
        start = _oracle_initial(s, pattern)
        if sum(start) != s.n:
            continue
        deviated0 = pattern != all_ones
        seen: set[tuple[int, tuple[int, ...], bool]] = set()

        def dfs(idx: int, counts: tuple[int, ...], deviated: bool, trace):
            if idx == len(gates):
                return trace if deviated and counts == target else None
            key = (idx, counts, deviated)
            if key in seen:
                return None
            seen.add(key)
            g = gates[idx]
            total = counts[g.i] + counts[g.j]
            for x in range(total + 1):
                nxt = list(counts)
                nxt[g.i] = x
                nxt[g.j] = total - x
                hit = dfs(
                    idx + 1,
                    tuple(nxt),
                    deviated or x != counts[g.i],
                    trace + ((g.time, g.i, x, g.j, total - x),),
                )
                if hit is not None:
                    return hit
            return None

        witness = dfs(0, start, deviated0, ())
        if witness is not None:
            return Verdict(FAILS, "degenerate-oracle", ((pattern, witness),))
    return Verdict(PASSES_SUFFICIENT, "degenerate-oracle")


def _oracle_fallback(s: Scheme, rng=None) -> Verdict:
    """Randomised sampling above the exhaustive guard; a pass is only a
    necessary-condition verdict, reported with the trial budget."""
    import random as _random

    rng = rng or _random.Random(0)
    sources = s.epp_sources()
    m = len(sources)
    gates = s.gates_in_time_order()
    all_ones = tuple([1] * m)
    target = tuple([1] * s.n)
    for _ in range(ORACLE_FALLBACK_TRIALS):
        pattern = tuple(rng.choice(range(m)) for _ in range(m))
        pat = [0] * m
        for c in pattern:
            pat[c] += 1
        pattern = tuple(pat)
        counts = list(_oracle_initial(s, pattern))
        if sum(counts) != s.n:
            continue
        deviated = pattern != all_ones
        trace = []
        for g in gates:
            total = counts[g.i] + counts[g.j]
            x = rng.randint(0, total)
            deviated = deviated or x != counts[g.i]
            counts[g.i], counts[g.j] = x, total - x
            trace.append((g.time, g.i, x, g.j, total - x))
        if deviated and tuple(counts) == target:
            return Verdict(FAILS, "degenerate-oracle", ((pattern, tuple(trace)),),
                           note="randomised fallback")
    return Verdict(PASSES_NECESSARY, "degenerate-oracle",
                   note=f"randomised fallback, {ORACLE_FALLBACK_TRIALS} trials")


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def full_verdict(s: Scheme, rng=None) -> Verdict:
    """Resource-aware dispatch: heralded-only schemes need the gate cycles
    rule (sufficient); non-degenerate EPPs get the acyclicity rule
    (sufficient); any degenerate source gets the parity prefilter and then
    the exhaustive oracle."""
    flavours = {src.flavour for src in s.sources}
    if "degenerate" in flavours:
        if "nondegenerate" in flavours:
            colour_assignment(s)
        parity = check_source_cycle_parity(s)
        if not parity.passed:
            return parity
        return degenerate_oracle(s, rng)
    if "nondegenerate" in flavours:
        return check_nondegenerate(s)
    gates = check_gate_cycles(s)
    if gates.passed:
        return Verdict(PASSES_SUFFICIENT, "gate-cycles", note="heralded resource")
    return gates


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def format_scheme(s: Scheme) -> str:
    lines = [f"qubits {s.n}"]
    for src in s.sources:
        lines.append(f"source {src.a} {src.b} {src.flavour}")
    for q in sorted(s.singles):
        lines.append(f"single {q}")
    for g in s.gates:
        lines.append(f"gate {g.time} {g.kind} {g.i} {g.j}")
    return "\n".join(lines) + "\n"


def parse_scheme(text: str) -> Scheme:
    n = None
    sources: list[SourceEdge] = []
    singles: set[int] = set()
    gates: list[GateEdge] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "qubits" and len(parts) == 2:
                n = int(parts[1])
            elif parts[0] == "source" and len(parts) == 4:
                if parts[3] not in SOURCE_FLAVOURS:
                    raise ValueError(f"unknown flavour {parts[3]!r}")
                sources.append(SourceEdge(int(parts[1]), int(parts[2]), parts[3]))
            elif parts[0] == "single" and len(parts) == 2:
                singles.add(int(parts[1]))
            elif parts[0] == "gate" and len(parts) == 5:
                if parts[2] not in GATE_KINDS:
                    raise ValueError(f"unknown gate kind {parts[2]!r}")
                gates.append(GateEdge(int(parts[1]), parts[2], int(parts[3]), int(parts[4])))
            else:
                raise ValueError(f"unrecognised directive {parts[0]!r}")
        except ValueError as exc:
            raise ModellingError(f"scheme line {lineno}: {exc}")
    if n is None:
        raise ModellingError("scheme missing 'qubits' header")
    return Scheme(n=n, sources=tuple(sources), singles=frozenset(singles), gates=tuple(gates))
