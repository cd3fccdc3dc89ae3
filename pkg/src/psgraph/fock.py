"""Exact sparse dual-rail Fock simulator.

Modes are indexed globally; a dual-rail qubit q occupies the mode pair
(2q, 2q+1), with logical |1> = photon in the first mode of the pair and
logical |0> = photon in the second.  Transfers act on a subset of modes via
the permanent rule; subunitary transfers are allowed, in which case branches
that lose photons are dropped (coincidence projection can never accept
them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .graphs import Graph, SizeGuardError

PERMANENT_MAX_SIZE = 12
PHOTON_GUARD = 8
MODE_GUARD = 16
PRUNE_EPS = 1e-12

SQRT3 = math.sqrt(3.0)
T13 = 1.0 / SQRT3          # 1/3-splitter transmission amplitude
R13 = math.sqrt(2.0 / 3.0)  # matching reflection amplitude


def permanent(m: np.ndarray) -> complex:
    """Exact permanent by Ryser inclusion-exclusion with Gray-code updates."""
    a = np.asarray(m, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("permanent needs a square matrix")
    if n > PERMANENT_MAX_SIZE:
        raise SizeGuardError(f"permanent limited to size {PERMANENT_MAX_SIZE}")
    if n == 0:
        return 1.0 + 0.0j
    if n == 1:
        return complex(a[0, 0])
    if n == 2:
        return complex(a[0, 0] * a[1, 1] + a[0, 1] * a[1, 0])
    rows = [0.0 + 0.0j] * n
    total = 0.0 + 0.0j
    prev_gray = 0
    sign = 1
    for k in range(1, 1 << n):
        gray = k ^ (k >> 1)
        j = (gray ^ prev_gray).bit_length() - 1
        add = gray > prev_gray
        col = a[:, j]
        for i in range(n):
            rows[i] = rows[i] + col[i] if add else rows[i] - col[i]
        prev_gray = gray
        sign = -sign
        prod = 1.0 + 0.0j
        for r in rows:
            prod *= r
        total += sign * prod
    if n % 2 == 1:
        total = -total
    return complex(total)


@dataclass
class FockVector:
    """Sparse complex amplitudes over photon-occupation lists."""

    modes: int
    terms: dict[tuple[int, ...], complex] = field(default_factory=dict)

    def copy(self) -> "FockVector":
        return FockVector(self.modes, dict(self.terms))

    def add(self, occ: tuple[int, ...], amp: complex) -> None:
        if len(occ) != self.modes:
            raise ValueError("occupation length mismatch")
        new = self.terms.get(occ, 0.0) + amp
        if abs(new) <= PRUNE_EPS:
            self.terms.pop(occ, None)
        else:
            self.terms[occ] = new

    def scale(self, factor: complex) -> "FockVector":
        return FockVector(
            self.modes, {k: v * factor for k, v in self.terms.items()}
        )

    def norm_squared(self) -> float:
        return float(sum(abs(v) ** 2 for v in self.terms.values()))

    def prune(self) -> "FockVector":
        self.terms = {k: v for k, v in self.terms.items() if abs(v) > PRUNE_EPS}
        return self

    def photon_numbers(self) -> set[int]:
        return {sum(occ) for occ in self.terms}


@dataclass
class ModeTransfer:
    """Linear mode transformation on a subset of the global modes.

    ``matrix[j, i]`` is the amplitude for input mode ``acted_modes[i]`` to
    output mode ``acted_modes[j]``; singular values must not exceed one.
    """

    matrix: np.ndarray
    acted_modes: tuple[int, ...]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        k = len(self.acted_modes)
        if self.matrix.shape != (k, k):
            raise ValueError("matrix shape must match acted mode count")
        if len(set(self.acted_modes)) != k:
            raise ValueError("acted modes must be distinct")
        top = np.linalg.svd(self.matrix, compute_uv=False)
        if top.size and top[0] > 1.0 + 1e-12:
            raise ValueError(f"transfer amplifies: top singular value {top[0]}")

    def is_unitary(self, tol: float = 1e-10) -> bool:
        k = self.matrix.shape[0]
        return bool(np.allclose(self.matrix @ self.matrix.conj().T, np.eye(k), atol=tol))


@dataclass(frozen=True)
class QubitLayout:
    """Dual-rail mode pairs per qubit plus auxiliary (must-be-empty) modes."""

    pairs: tuple[tuple[int, int], ...]
    aux: tuple[int, ...] = ()

    def __post_init__(self):
        used = [m for p in self.pairs for m in p] + list(self.aux)
        if len(set(used)) != len(used):
            raise ValueError("layout modes must be disjoint")

    @staticmethod
    def standard(n_qubits: int, aux: tuple[int, ...] = ()) -> "QubitLayout":
        return QubitLayout(tuple((2 * q, 2 * q + 1) for q in range(n_qubits)), aux)

    def mode_count(self) -> int:
        used = [m for p in self.pairs for m in p] + list(self.aux)
        return max(used) + 1 if used else 0


def _compositions(total: int, k: int):
    for combo in combinations_with_replacement(range(k), total):
        out = [0] * k
        for c in combo:
            out[c] += 1
        yield tuple(out)


_FACT = [math.factorial(i) for i in range(PHOTON_GUARD + 5)]


def _single_input_outputs(matrix_key, matrix: np.ndarray, sub_in: tuple[int, ...],
                          cache: dict) -> list[tuple[tuple[int, ...], complex]]:
    key = (matrix_key, sub_in)
    hit = cache.get(key)
    if hit is not None:
        return hit
    k = len(sub_in)
    p = sum(sub_in)
    cols = [i for i in range(k) for _ in range(sub_in[i])]
    norm_in = 1.0
    for c in sub_in:
        norm_in *= _FACT[c]
    out = []
    for sub_out in _compositions(p, k):
        rows = [j for j in range(k) for _ in range(sub_out[j])]
        a = matrix[np.ix_(rows, cols)]
        val = permanent(a)
        if abs(val) <= PRUNE_EPS:
            continue
        norm_out = 1.0
        for c in sub_out:
            norm_out *= _FACT[c]
        out.append((sub_out, val / math.sqrt(norm_in * norm_out)))
    cache[key] = out
    return out


def apply_transfer(state: FockVector, transfer: ModeTransfer,
                   _cache: dict | None = None) -> FockVector:
    """Evolve a Fock vector through a mode transfer (linear in the state)."""
    modes = transfer.acted_modes
    if any(m >= state.modes or m < 0 for m in modes):
        raise ValueError("acted mode out of range")
    out = FockVector(state.modes)
    cache = _cache if _cache is not None else {}
    mkey = id(transfer)
    for occ, amp in sorted(state.terms.items()):
        p = sum(occ[m] for m in modes)
        if p > PHOTON_GUARD:
            raise SizeGuardError(f"photon guard exceeded: {p} > {PHOTON_GUARD}")
        if p == 0:
            out.add(occ, amp)
            continue
        sub_in = tuple(occ[m] for m in modes)
        for sub_out, val in _single_input_outputs(mkey, transfer.matrix, sub_in, cache):
            new = list(occ)
            for idx, m in enumerate(modes):
                new[m] = sub_out[idx]
            out.add(tuple(new), amp * val)
    return out.prune()


def project_qubit_subspace(state: FockVector, layout: QubitLayout) -> FockVector:
    """Keep exactly the terms with one photon per qubit pair and empty
    auxiliaries; no renormalisation."""
    out = FockVector(state.modes)
    for occ, amp in state.terms.items():
        if any(occ[m] != 0 for m in layout.aux):
            continue
        ok = True
        for a, b in layout.pairs:
            if occ[a] + occ[b] != 1:
                ok = False
                break
        if ok:
            out.add(occ, amp)
    return out.prune()


# ---------------------------------------------------------------------------
# gate transfers
# ---------------------------------------------------------------------------
# Postselected CZ wiring (qubits i then j, rails ordered r1_i r0_i r1_j r0_j):
#   - 1/3 splitter from r1_i to an auxiliary dump,
#   - reflection coupler [[t, r], [r, -t]] between r0_i and r1_j,
#   - 1/3 splitter from r0_j to a second dump.
# Restricted to the qubit subspace this is exactly (1/3)*CZ.

def cz_lo_unitary() -> np.ndarray:
    """6-mode unitary; mode order (r1_i, r0_i, r1_j, r0_j, aux_a, aux_b)."""
    u = np.eye(6)
    u[0, 0] = T13
    u[4, 0] = R13
    u[0, 4] = -R13
    u[4, 4] = T13
    u[1, 1] = T13
    u[2, 1] = R13
    u[1, 2] = R13
    u[2, 2] = -T13
    u[3, 3] = T13
    u[5, 3] = R13
    u[3, 5] = -R13
    u[5, 5] = T13
    return u


def cz_lo_transfer(i_modes: tuple[int, int], j_modes: tuple[int, int],
                   aux_modes: tuple[int, int]) -> ModeTransfer:
    """Full 6-mode postselected CZ on two dual-rail qubits plus two
    auxiliary vacuum modes."""
    acted = (i_modes[0], i_modes[1], j_modes[0], j_modes[1], aux_modes[0], aux_modes[1])
    return ModeTransfer(cz_lo_unitary(), acted)


def cz_lo_transfer_compact(i_modes: tuple[int, int], j_modes: tuple[int, int]) -> ModeTransfer:
    """Subunitary 4-mode form of the postselected CZ (dump ports dropped);
    agrees with the 6-mode form after projection."""
    m = cz_lo_unitary()[:4, :4]
    acted = (i_modes[0], i_modes[1], j_modes[0], j_modes[1])
    return ModeTransfer(m, acted)


def fusion_transfer(i_modes: tuple[int, int], j_modes: tuple[int, int]) -> ModeTransfer:
    """Postselected fusion: swap the |1> rails, then a 50:50 splitter across
    qubit i's rails (dual-rail Hadamard on i)."""
    swap = np.eye(4)
    swap[[0, 2]] = swap[[2, 0]]
    had = np.eye(4, dtype=complex)
    s = 1.0 / math.sqrt(2.0)
    had[0, 0] = -s
    had[0, 1] = s
    had[1, 0] = s
    had[1, 1] = s
    acted = (i_modes[0], i_modes[1], j_modes[0], j_modes[1])
    return ModeTransfer(had @ swap, acted)


def _logical_to_rail(u: np.ndarray) -> np.ndarray:
    """Rewrite a single-qubit unitary (basis |0>,|1>) as a transfer on the
    (|1>-rail, |0>-rail) mode pair."""
    return np.array([[u[1, 1], u[1, 0]], [u[0, 1], u[0, 0]]], dtype=complex)


_SQRT_MINUS_IX = np.array([[1.0, -1.0j], [-1.0j, 1.0]], dtype=complex) / math.sqrt(2.0)
_SQRT_IZ = np.diag([np.exp(1.0j * np.pi / 4.0), np.exp(-1.0j * np.pi / 4.0)])


def lc_transfer(a_modes: tuple[int, int], neighbour_modes) -> list[ModeTransfer]:
    """Mode-level local complementation: sqrt(-iX) on the complemented
    vertex, sqrt(iZ) on each of its current neighbours."""
    out = [ModeTransfer(_logical_to_rail(_SQRT_MINUS_IX), tuple(a_modes))]
    for pair in neighbour_modes:
        out.append(ModeTransfer(_logical_to_rail(_SQRT_IZ), tuple(pair)))
    return out


def hadamard_transfer(q_modes: tuple[int, int]) -> ModeTransfer:
    h = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)
    return ModeTransfer(_logical_to_rail(h), tuple(q_modes))


# ---------------------------------------------------------------------------
# source states
# ---------------------------------------------------------------------------

def _pair_term(k: int) -> list[tuple[tuple[int, int, int, int], float]]:
    """k-pair emission of one two-qubit pair source over its four modes
    (r1_a, r0_a, r1_b, r0_b): the equal-weight sum of |j,k-j,j,k-j>."""
    return [((j, k - j, j, k - j), 1.0) for j in range(k + 1)]


def firing_patterns(sources: int, total_pairs: int) -> list[tuple[int, ...]]:
    """All ways total_pairs pair emissions distribute over the sources."""
    return list(_compositions(total_pairs, sources))


def epp_source_state(sources: int, total_pairs: int, degenerate: bool = True) -> FockVector:
    """Joint postselected-pair state of coherently pumped sources, truncated
    to the fixed total-pair sector.

    Every Fock term carries the same amplitude; the normalisation puts the
    in-subspace firing pattern (one pair per source, requires
    total_pairs == sources) at unit norm.  Degenerate and non-degenerate
    sources share this mode structure; distinguishability only constrains
    which gates may follow.
    """
    if sources < 1:
        raise ValueError("need at least one source")
    if 2 * total_pairs > PHOTON_GUARD:
        raise SizeGuardError(f"photon guard: {2 * total_pairs} photons")
    modes = 4 * sources
    state = FockVector(modes)
    amp = 2.0 ** (-sources / 2.0)
    for pattern in firing_patterns(sources, total_pairs):
        partials: list[tuple[tuple[int, ...], float]] = [((), 1.0)]
        for s, k in enumerate(pattern):
            nxt = []
            for occ, a in partials:
                for sub, val in _pair_term(k):
                    nxt.append((occ + sub, a * val))
            partials = nxt
        for occ, a in partials:
            state.add(tuple(occ), a * amp)
    return state


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_experiment(initial: FockVector, gates, layout: QubitLayout
                   ) -> tuple[FockVector, float]:
    """Apply transfers in order, project onto the qubit subspace, and report
    the postselection probability (squared norm of the projected state)."""
    if initial.modes > MODE_GUARD:
        raise SizeGuardError(f"mode guard: {initial.modes} > {MODE_GUARD}")
    if any(p > PHOTON_GUARD for p in initial.photon_numbers()):
        raise SizeGuardError("photon guard exceeded in initial state")
    state = initial.copy()
    for gate in gates:
        state = apply_transfer(state, gate)
    projected = project_qubit_subspace(state, layout)
    return projected, projected.norm_squared()


def statevector_to_fock(sv: np.ndarray, n_qubits: int, modes: int | None = None) -> FockVector:
    """Lift an n-qubit state vector into dual-rail occupation terms."""
    if modes is None:
        modes = 2 * n_qubits
    out = FockVector(modes)
    for x, amp in enumerate(sv):
        if abs(amp) <= PRUNE_EPS:
            continue
        occ = [0] * modes
        for q in range(n_qubits):
            bit = (x >> (n_qubits - 1 - q)) & 1
            occ[2 * q if bit else 2 * q + 1] = 1
        out.add(tuple(occ), complex(amp))
    return out


def fock_to_statevector(state: FockVector, layout: QubitLayout) -> np.ndarray:
    """Read a qubit-subspace Fock vector back into amplitudes (terms outside
    the subspace are an error)."""
    n = len(layout.pairs)
    sv = np.zeros(1 << n, dtype=complex)
    for occ, amp in state.terms.items():
        x = 0
        for q, (a, b) in enumerate(layout.pairs):
            if occ[a] + occ[b] != 1:
                raise ValueError("term outside the qubit subspace")
            if occ[a] == 1:
                x |= 1 << (n - 1 - q)
        if any(occ[m] for m in layout.aux):
            raise ValueError("auxiliary mode occupied")
        sv[x] += amp
    return sv


def graph_state_fock(g: Graph) -> FockVector:
    """Dual-rail Fock form of a graph state (exact, via the state oracle)."""
    from .graphs import statevector

    return statevector_to_fock(statevector(g), g.n)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>|^2 for normalised copies of a and b."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(abs(np.vdot(a, b)) ** 2 / (na * nb) ** 2)


# ---------------------------------------------------------------------------
# scheme experiments
# ---------------------------------------------------------------------------

def _place_terms(state: FockVector, sub_terms, modes: tuple[int, ...]) -> FockVector:
    """Tensor sub-system terms (over ``modes``) onto every existing term."""
    out = FockVector(state.modes)
    for occ, amp in state.terms.items():
        for sub, val in sub_terms:
            new = list(occ)
            for idx, m in enumerate(modes):
                new[m] += sub[idx]
            out.add(tuple(new), amp * val)
    return out


def scheme_initial_state(scheme) -> FockVector:
    """Dual-rail source state of a scheme, junk terms included.

    EPP sources share one fixed-total-pair sector (junk-laden, the nominal
    component normalised); Bell pairs and heralded singles enter clean.
    Each pair's nominal component is prepared as the 2-vertex graph state.
    """
    n = scheme.n
    state = FockVector(2 * n, {tuple([0] * (2 * n)): 1.0})
    epps = scheme.epp_sources()
    m = len(epps)
    if m:
        modes = tuple(
            mm for src in epps for mm in (2 * src.a, 2 * src.a + 1, 2 * src.b, 2 * src.b + 1)
        )
        joint: list[tuple[tuple[int, ...], float]] = []
        amp = 2.0 ** (-m / 2.0)
        for pattern in firing_patterns(m, m):
            partials: list[tuple[tuple[int, ...], float]] = [((), 1.0)]
            for k in pattern:
                partials = [
                    (occ + sub, a * val)
                    for occ, a in partials
                    for sub, val in _pair_term(k)
                ]
            joint.extend((occ, a * amp) for occ, a in partials)
        state = _place_terms(state, joint, modes)
    s2 = 1.0 / math.sqrt(2.0)
    for src in scheme.sources:
        if src.flavour != "bell":
            continue
        qa, qb = src.a, src.b
        pair_terms = []
        for bit_a in (0, 1):
            for bit_b in (0, 1):
                occ = [0, 0, 0, 0]
                occ[0 if bit_a else 1] = 1
                occ[2 if bit_b else 3] = 1
                sign = -0.5 if bit_a and bit_b else 0.5
                pair_terms.append((tuple(occ), sign))
        state = _place_terms(state, pair_terms, (2 * qa, 2 * qa + 1, 2 * qb, 2 * qb + 1))
    for q in sorted(scheme.singles):
        state = _place_terms(state, [((1, 0), s2), ((0, 1), s2)], (2 * q, 2 * q + 1))
    # rotate each EPP's nominal component onto the 2-vertex graph state
    for src in epps:
        state = apply_transfer(state, hadamard_transfer((2 * src.a, 2 * src.a + 1)))
    return state


def scheme_gate_transfers(scheme) -> list[ModeTransfer]:
    """Compact transfers for a scheme's gates, in time order."""
    out = []
    for g in scheme.gates_in_time_order():
        im, jm = (2 * g.i, 2 * g.i + 1), (2 * g.j, 2 * g.j + 1)
        if g.kind == "cz":
            out.append(cz_lo_transfer_compact(im, jm))
        else:
            out.append(fusion_transfer(im, jm))
    return out


def simulate_scheme(scheme) -> tuple[FockVector, float]:
    """Full Fock run of a scheme: sources, gates in time order, projection.
    The probability is conditioned on the nominal source sector."""
    layout = QubitLayout.standard(scheme.n)
    return run_experiment(scheme_initial_state(scheme), scheme_gate_transfers(scheme), layout)


def predicted_chain_state(scheme) -> np.ndarray:
    """What the postselected output must be when no junk re-enters: the
    exact two-qubit operators applied to the nominal source state."""
    from .graphs import CZ_OPERATOR, FUSION_OPERATOR, apply_qubit_operator, statevector

    start = Graph.from_edges(
        scheme.n, [(src.a, src.b) for src in scheme.sources]
    )
    sv = statevector(start)
    for g in scheme.gates_in_time_order():
        if g.kind == "cz":
            sv = apply_qubit_operator(sv, CZ_OPERATOR / 3.0, g.i, g.j)
        else:
            sv = apply_qubit_operator(sv, FUSION_OPERATOR, g.i, g.j)
    return sv


def nominal_probability(scheme) -> float:
    p = 1.0
    for g in scheme.gates:
        p *= (1.0 / 9.0) if g.kind == "cz" else 0.5
    return p
