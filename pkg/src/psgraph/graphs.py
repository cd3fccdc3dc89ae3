"""Core graph-state representation and rewrites.

Graphs are immutable: ``n`` vertices and one adjacency bitmask per vertex.
The three state rewrites (local complementation, CZ toggle, fusion) all
return new graphs.  A small exact state-vector oracle backs the rewrites at
the amplitude level for n <= 14.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

STATEVECTOR_MAX_QUBITS = 14
CANONICAL_MAX_VERTICES = 10
CYCLE_MAX_VERTICES = 16


class SizeGuardError(ValueError):
    """An operation was asked to exceed its desk-scale resource guard."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices 0..n-1, adjacency as bitmasks."""

    n: int
    adj: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph order must be >= 1")
        if len(self.adj) != self.n:
            raise ValueError("adjacency length mismatch")
        for i, row in enumerate(self.adj):
            if row >> self.n:
                raise ValueError("adjacency bits out of range")
            if row & (1 << i):
                raise ValueError(f"self-loop at vertex {i}")
            for j in range(self.n):
                if (row >> j) & 1 and not (self.adj[j] >> i) & 1:
                    raise ValueError("adjacency not symmetric")

    @staticmethod
    def empty(n: int) -> "Graph":
        return Graph(n, (0,) * n)

    @staticmethod
    def from_edges(n: int, edges) -> "Graph":
        adj = [0] * n
        for i, j in edges:
            if i == j:
                raise ValueError("self-loops not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i},{j}) out of range for n={n}")
            adj[i] |= 1 << j
            adj[j] |= 1 << i
        return Graph(n, tuple(adj))

    def has_edge(self, i: int, j: int) -> bool:
        return bool((self.adj[i] >> j) & 1)

    def neighbours(self, v: int) -> int:
        """Neighbourhood of v as a bitmask."""
        return self.adj[v]

    def neighbour_list(self, v: int) -> list[int]:
        return mask_to_list(self.adj[v])

    def degree(self, v: int) -> int:
        return bin(self.adj[v]).count("1")

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for i in range(self.n):
            row = self.adj[i] >> (i + 1)
            j = i + 1
            while row:
                if row & 1:
                    out.append((i, j))
                row >>= 1
                j += 1
        return out

    def edge_count(self) -> int:
        return sum(self.degree(v) for v in range(self.n)) // 2

    def is_connected(self) -> bool:
        seen = 1
        frontier = 1
        while frontier:
            nxt = 0
            v = 0
            f = frontier
            while f:
                if f & 1:
                    nxt |= self.adj[v]
                f >>= 1
                v += 1
            frontier = nxt & ~seen
            seen |= frontier
        return seen == (1 << self.n) - 1


def mask_to_list(mask: int) -> list[int]:
    out = []
    v = 0
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return out


# ---------------------------------------------------------------------------
# text format: "n;i-j,i-j,..." with edges sorted ascending by (min,max)
# ---------------------------------------------------------------------------

def format_graph(g: Graph) -> str:
    return f"{g.n};" + ",".join(f"{i}-{j}" for i, j in g.edges())


def parse_graph(text: str) -> Graph:
    text = text.strip()
    if ";" not in text:
        raise ValueError(f"bad graph text {text!r}: missing ';'")
    head, _, body = text.partition(";")
    n = int(head)
    edges = []
    if body:
        for item in body.split(","):
            a, _, b = item.partition("-")
            edges.append((int(a), int(b)))
    return Graph.from_edges(n, edges)


# ---------------------------------------------------------------------------
# rewrites
# ---------------------------------------------------------------------------

def local_complement(g: Graph, a: int) -> Graph:
    """Complement the subgraph induced by the neighbourhood of vertex a."""
    if not (0 <= a < g.n):
        raise ValueError(f"vertex {a} out of range")
    nb = g.adj[a]
    adj = list(g.adj)
    m = nb
    v = 0
    while m:
        if m & 1:
            adj[v] ^= nb & ~(1 << v)
        m >>= 1
        v += 1
    return Graph(g.n, tuple(adj))


def cz_toggle(g: Graph, i: int, j: int) -> Graph:
    """Toggle edge (i,j); CZ is an involution so toggle, not add."""
    if i == j:
        raise ValueError("CZ endpoints must differ")
    if not (0 <= i < g.n and 0 <= j < g.n):
        raise ValueError("CZ endpoint out of range")
    adj = list(g.adj)
    adj[i] ^= 1 << j
    adj[j] ^= 1 << i
    return Graph(g.n, tuple(adj))


def fuse(g: Graph, i: int, j: int) -> Graph:
    """Postselected fusion: j absorbs the merge, i becomes a leaf on j.

    With A = N(i)\\{j} and B = N(j)\\{i} the new neighbourhood of j is
    (A xor B) | {i} and the new neighbourhood of i is {j}.  Edges not
    incident on i or j are untouched.
    """
    if i == j:
        raise ValueError("fusion endpoints must differ")
    if not (0 <= i < g.n and 0 <= j < g.n):
        raise ValueError("fusion endpoint out of range")
    a_mask = g.adj[i] & ~(1 << j)
    b_mask = g.adj[j] & ~(1 << i)
    new_j = (a_mask ^ b_mask) | (1 << i)
    adj = list(g.adj)
    for v in range(g.n):
        if v in (i, j):
            continue
        adj[v] &= ~((1 << i) | (1 << j))
        if (new_j >> v) & 1:
            adj[v] |= 1 << j
    adj[i] = 1 << j
    adj[j] = new_j
    return Graph(g.n, tuple(adj))


# ---------------------------------------------------------------------------
# state-vector oracle
# ---------------------------------------------------------------------------
# Basis convention: index x encodes qubit q as bit (n-1-q), i.e. qubit 0 is
# the most significant bit of the basis string.

def statevector(g: Graph) -> np.ndarray:
    """Exact amplitudes of the graph state; sign of basis string x is
    (-1)^(number of edges with both endpoints set in x)."""
    n = g.n
    if n > STATEVECTOR_MAX_QUBITS:
        raise SizeGuardError(f"statevector limited to n <= {STATEVECTOR_MAX_QUBITS}")
    idx = np.arange(1 << n, dtype=np.int64)
    flips = np.zeros(1 << n, dtype=np.int64)
    for i, j in g.edges():
        bi = (idx >> (n - 1 - i)) & 1
        bj = (idx >> (n - 1 - j)) & 1
        flips ^= bi & bj
    amps = np.where(flips == 1, -1.0, 1.0) / np.sqrt(2.0) ** n
    return amps.astype(complex)


def apply_qubit_operator(state: np.ndarray, op: np.ndarray, i: int, j: int) -> np.ndarray:
    """Apply a 4x4 operator on qubits (i, j), identity elsewhere.

    No renormalisation: postselected operators are subnormalised.
    """
    dim = state.shape[0]
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise ValueError("state length is not a power of two")
    if op.shape != (4, 4):
        raise ValueError("operator must be 4x4")
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ValueError("bad qubit indices")
    arr = state.reshape([2] * n)
    arr = np.moveaxis(arr, (i, j), (0, 1))
    shp = arr.shape
    arr = arr.reshape(4, -1)
    arr = np.asarray(op, dtype=complex) @ arr
    arr = arr.reshape(shp)
    arr = np.moveaxis(arr, (0, 1), (i, j))
    return arr.reshape(dim)


def apply_single_qubit_operator(state: np.ndarray, op: np.ndarray, q: int) -> np.ndarray:
    dim = state.shape[0]
    n = dim.bit_length() - 1
    arr = state.reshape([2] * n)
    arr = np.moveaxis(arr, q, 0)
    shp = arr.shape
    arr = arr.reshape(2, -1)
    arr = np.asarray(op, dtype=complex) @ arr
    arr = arr.reshape(shp)
    arr = np.moveaxis(arr, 0, q)
    return arr.reshape(dim)


CZ_OPERATOR = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)

# |+0><00| + |-1><11| on the two-qubit basis (|00>,|01>,|10>,|11>)
_SQ = 1.0 / np.sqrt(2.0)
FUSION_OPERATOR = np.zeros((4, 4), dtype=complex)
FUSION_OPERATOR[0, 0] = _SQ   # |00> component of |+0>
FUSION_OPERATOR[2, 0] = _SQ   # |10> component of |+0>
FUSION_OPERATOR[1, 3] = _SQ   # |01> component of |-1>
FUSION_OPERATOR[3, 3] = -_SQ  # |11> component of |-1>

SQRT_MINUS_IX = np.array([[1.0, -1.0j], [-1.0j, 1.0]], dtype=complex) / np.sqrt(2.0)
SQRT_IZ = np.diag([np.exp(1.0j * np.pi / 4.0), np.exp(-1.0j * np.pi / 4.0)])  # branch of sqrt(iZ) that leaves no residual Pauli


def lc_unitary_statevector(state: np.ndarray, a: int, neighbours) -> np.ndarray:
    """State-level local complementation: sqrt(-iX) on a, sqrt(iZ) on N(a)."""
    out = apply_single_qubit_operator(state, SQRT_MINUS_IX, a)
    for v in neighbours:
        out = apply_single_qubit_operator(out, SQRT_IZ, v)
    return out


# ---------------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------------

def encode_upper_triangle(g: Graph) -> int:
    """Row-major upper-triangle bitstring as an integer; bit (0,1) is the
    most significant.  Fixes the total order used for representatives."""
    bits = 0
    for i in range(g.n):
        for j in range(i + 1, g.n):
            bits = (bits << 1) | ((g.adj[i] >> j) & 1)
    return bits


def _wl_blocks(n: int, adj: tuple[int, ...]) -> list[list[int]]:
    """Stable neighbour-degree refinement: vertices grouped into blocks whose
    order and membership are isomorphism-invariant (colours are interned by
    sorted signature, never hashed)."""
    colour = [bin(adj[v]).count("1") for v in range(n)]
    while True:
        sigs = []
        for v in range(n):
            nb = sorted(colour[u] for u in mask_to_list(adj[v]))
            sigs.append((colour[v], tuple(nb)))
        order = {s: i for i, s in enumerate(sorted(set(sigs)))}
        new = [order[s] for s in sigs]
        if len(set(new)) == len(set(colour)) and new == colour:
            break
        colour = new
    blocks: dict[int, list[int]] = {}
    for v in range(n):
        blocks.setdefault(colour[v], []).append(v)
    return [blocks[c] for c in sorted(blocks)]


def _canonical_search(n: int, adj: tuple[int, ...]) -> tuple[int, ...]:
    """Vertex order minimising the incremental adjacency bit sequence among
    orders compatible with the stable refinement blocks.  Branch and bound
    within blocks, collapsing twin vertices; the minimiser fixes the
    canonical graph uniquely."""
    blocks = _wl_blocks(n, adj)
    block_of = [0] * n
    for b, members in enumerate(blocks):
        for v in members:
            block_of[v] = b
    # twin keys: swapping vertices with equal open or closed neighbourhood
    # (ignoring each other) is an automorphism
    open_keys = [adj[v] for v in range(n)]
    closed_keys = [adj[v] | (1 << v) for v in range(n)]

    best_codes: list[int] | None = None
    best_seq: list[int] | None = None
    # code[v]: adjacency bits of v against the chosen prefix (incremental)
    code = [0] * n

    def dfs(seq: list[int], rem_blocks: list[list[int]], codes: list[int]):
        nonlocal best_codes, best_seq
        p = len(seq)
        if p == n:
            if best_codes is None or codes < best_codes:
                best_codes = codes.copy()
                best_seq = seq.copy()
            return
        block = next(b for b in rem_blocks if b)
        cands = sorted((code[v], v) for v in block)
        seen: set[tuple[int, int]] = set()
        for c, v in cands:
            codes.append(c)
            if best_codes is not None and codes > best_codes[: p + 1]:
                codes.pop()
                break  # sorted ascending: the rest are worse still
            if (c, open_keys[v]) in seen or (c, closed_keys[v]) in seen:
                codes.pop()
                continue  # twin of an already-tried candidate
            seen.add((c, open_keys[v]))
            seen.add((c, closed_keys[v]))
            seq.append(v)
            nxt = [[u for u in b if u != v] for b in rem_blocks]
            saved = []
            for b in nxt:
                for u in b:
                    saved.append((u, code[u]))
                    code[u] = (code[u] << 1) | ((adj[u] >> v) & 1)
            dfs(seq, nxt, codes)
            for u, old in saved:
                code[u] = old
            codes.pop()
            seq.pop()

    dfs([], blocks, [])
    assert best_seq is not None
    return tuple(best_seq)


@lru_cache(maxsize=1 << 18)
def _canonical_cached(n: int, adj: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    order = _canonical_search(n, adj)
    # relabel: vertex order[k] -> position k
    pos = [0] * n
    for k, v in enumerate(order):
        pos[v] = k
    new_adj = [0] * n
    for v in range(n):
        row = adj[v]
        nb = 0
        u = 0
        while row:
            if row & 1:
                nb |= 1 << pos[u]
            row >>= 1
            u += 1
        new_adj[pos[v]] = nb
    return tuple(new_adj), tuple(pos)


def canonical_form(g: Graph) -> tuple[Graph, tuple[int, ...]]:
    """Deterministic canonical representative plus the relabelling map
    (old vertex -> new position).  Isomorphic graphs and only isomorphic
    graphs share a canonical representative."""
    if g.n > CANONICAL_MAX_VERTICES:
        raise SizeGuardError(f"canonical form limited to n <= {CANONICAL_MAX_VERTICES}")
    adj, pos = _canonical_cached(g.n, g.adj)
    return Graph(g.n, adj), pos


def canonical_encoding(g: Graph) -> str:
    """Text encoding of the canonical representative; equal iff isomorphic."""
    cg, _ = canonical_form(g)
    return format_graph(cg)


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------

def prufer_to_tree(seq, n: int) -> Graph:
    """Decode a Pruefer sequence of length n-2 into its labelled tree."""
    if n < 2:
        raise ValueError("trees need n >= 2")
    if len(seq) != n - 2:
        raise ValueError("sequence length must be n-2")
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    edges = []
    import heapq

    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, v))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    u = heapq.heappop(leaves)
    w = heapq.heappop(leaves)
    edges.append((u, w))
    return Graph.from_edges(n, edges)


def random_labelled_tree(n: int, rng: random.Random) -> Graph:
    """Uniform over the n^(n-2) labelled trees via a random Pruefer sequence."""
    if n < 2:
        raise ValueError("trees need n >= 2")
    if n == 2:
        return Graph.from_edges(2, [(0, 1)])
    seq = [rng.randrange(n) for _ in range(n - 2)]
    return prufer_to_tree(seq, n)


def is_tree(g: Graph) -> bool:
    return g.is_connected() and g.edge_count() == g.n - 1


def _tree_ahu_key(g: Graph) -> tuple:
    """Canonical key for a tree (AHU encoding rooted at the centre)."""
    n = g.n
    if n == 1:
        return ("T", 1)
    # find centre(s) by repeated leaf stripping
    deg = [g.degree(v) for v in range(n)]
    alive = set(range(n))
    layer = [v for v in alive if deg[v] <= 1]
    while len(alive) > 2:
        nxt = []
        for v in layer:
            alive.discard(v)
            for u in g.neighbour_list(v):
                if u in alive:
                    deg[u] -= 1
                    if deg[u] == 1:
                        nxt.append(u)
        layer = nxt
    centres = sorted(alive)

    def encode(root: int, parent: int) -> tuple:
        kids = sorted(
            encode(u, root) for u in g.neighbour_list(root) if u != parent
        )
        return tuple(kids)

    return ("T", n, min(encode(c, -1) for c in centres))


def enumerate_unlabelled_trees(n: int) -> list[Graph]:
    """All unlabelled trees on n vertices (one labelled member each)."""
    if n == 1:
        return [Graph.empty(1)]
    if n == 2:
        return [Graph.from_edges(2, [(0, 1)])]
    seen: dict[tuple, Graph] = {}
    from itertools import product

    for seq in product(range(n), repeat=n - 2):
        t = prufer_to_tree(list(seq), n)
        key = _tree_ahu_key(t)
        if key not in seen:
            seen[key] = t
    return [seen[k] for k in sorted(seen)]


# ---------------------------------------------------------------------------
# simple cycles
# ---------------------------------------------------------------------------

def enumerate_simple_cycles(g: Graph) -> list[frozenset[tuple[int, int]]]:
    """Every vertex-simple cycle exactly once, as a frozenset of edges."""
    if g.n > CYCLE_MAX_VERTICES:
        raise SizeGuardError(f"cycle enumeration limited to n <= {CYCLE_MAX_VERTICES}")
    cycles = []
    n = g.n
    for root in range(n):
        # paths from root visiting only vertices > root
        stack = [(root, [root], 1 << root)]
        while stack:
            v, path, visited = stack.pop()
            for u in g.neighbour_list(v):
                if u == root and len(path) >= 3:
                    if path[1] < path[-1]:  # each cycle found in one direction
                        edges = frozenset(
                            (min(a, b), max(a, b))
                            for a, b in zip(path, path[1:] + [root])
                        )
                        cycles.append(edges)
                elif u > root and not (visited >> u) & 1:
                    stack.append((u, path + [u], visited | (1 << u)))
    return cycles
