"""Critical spin chains and ancilla-mediated weak measurements on them.

Models
------
``xxz``     ``H = -sum_j (X_j X_{j+1} + Y_j Y_{j+1} + Delta Z_j Z_{j+1})``
``potts3``  ``H = -sum_j J (U_j U_{j+1}^dag + U_j^dag U_{j+1}) - h sum_j (V_j + V_j^dag)``

with ``V = diag(1, omega, omega^2)`` and ``U`` the cyclic shift
``U|k> = |k+1>``.  In this sign convention ``Delta = +1`` is the
ferromagnetic Heisenberg point (degenerate multiplet), ``-1 < Delta < 1`` is
the critical XY regime and ``Delta = -1`` is unitarily equivalent to the
antiferromagnetic Heisenberg chain.  The Potts chain is self-dual at
``J = h``.

Weak measurement
----------------
One ancilla per measured site is prepared in ``|a>``, coupled by
``exp(i theta P_sys (x) P_anc)`` and read out in its X basis.  ``P_sys`` is
a diagonal weight vector on the site (``|1><1|`` by default) and ``P_anc``
the ancilla's ``|1><1|``.  Because the coupling is diagonal in the system
basis every Kraus operator is diagonal too, and is stored as the table
``k_m(s)`` over outcome patterns ``m`` and local configurations ``s``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .qdyn import HilbertSpace, StateVector

log = logging.getLogger(__name__)

MAX_SITES = {"xxz": 14, "potts3": 9}
LOCAL_DIM = {"xxz": 2, "potts3": 3}
DENSE_CUTOFF = 512
RESIDUAL_TOL = 1e-9
COMPLETENESS_TOL = 1e-12
MEASURE_ZERO = 1e-14

_OMEGA3 = np.exp(2j * np.pi / 3)
PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
POTTS_V = np.diag([1, _OMEGA3, _OMEGA3 ** 2])
POTTS_U = np.roll(np.eye(3, dtype=complex), 1, axis=0)


class ConvergenceError(RuntimeError):
    """The iterative eigensolver did not converge or its residual is too large."""


class MeasureZeroOutcome(ValueError):
    """A post-selected outcome pattern has (numerically) zero probability."""


@dataclass(frozen=True)
class SpinChainSpec:
    model: str
    n_sites: int
    anisotropy: float = 1.0
    J: float = 1.0
    h: float = 1.0
    boundary: str = "open"

    def __post_init__(self) -> None:
        if self.model not in MAX_SITES:
            raise ValueError(f"unknown model {self.model!r}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.n_sites < 1:
            raise ValueError("need at least one site")
        if self.n_sites > MAX_SITES[self.model]:
            raise ValueError(f"{self.model} is limited to {MAX_SITES[self.model]} sites")

    @property
    def local_dim(self) -> int:
        return LOCAL_DIM[self.model]

    @property
    def dim(self) -> int:
        return self.local_dim ** self.n_sites

    def bonds(self) -> list[tuple[int, int]]:
        n = self.n_sites
        out = [(j, j + 1) for j in range(n - 1)]
        if self.boundary == "periodic" and n > 2:
            out.append((n - 1, 0))
        return out

    def space(self) -> HilbertSpace:
        return chain_space(self.n_sites, self.local_dim)


def chain_space(n: int, local_dim: int) -> HilbertSpace:
    return HilbertSpace.from_dims([(f"s{j}", local_dim) for j in range(n)])


def site_operator(op: np.ndarray, site: int, n: int) -> sp.csr_matrix:
    """``op`` on ``site`` of an ``n``-site chain, identity elsewhere."""
    d = op.shape[0]
    left = sp.identity(d ** site, format="csr", dtype=complex)
    right = sp.identity(d ** (n - site - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def _two_site(a: np.ndarray, i: int, b: np.ndarray, j: int, n: int) -> sp.csr_matrix:
    return site_operator(a, i, n) @ site_operator(b, j, n)


def build_hamiltonian(spec: SpinChainSpec) -> sp.csr_matrix:
    """Sparse Hamiltonian of the chain in the computational product basis."""
    n = spec.n_sites
    h = sp.csr_matrix((spec.dim, spec.dim), dtype=complex)
    if spec.model == "xxz":
        for i, j in spec.bonds():
            h = h - _two_site(PAULI["X"], i, PAULI["X"], j, n)
            h = h - _two_site(PAULI["Y"], i, PAULI["Y"], j, n)
            h = h - spec.anisotropy * _two_site(PAULI["Z"], i, PAULI["Z"], j, n)
    else:
        ud = POTTS_U.conj().T
        for i, j in spec.bonds():
            h = h - spec.J * (_two_site(POTTS_U, i, ud, j, n) + _two_site(ud, i, POTTS_U, j, n))
        field_op = POTTS_V + POTTS_V.conj().T
        for i in range(n):
            h = h - spec.h * site_operator(field_op, i, n)
    h.eliminate_zeros()
    return h.tocsr()


@dataclass
class GroundStateResult:
    energy: float
    state: StateVector
    gap: float
    degeneracy_tolerance: float
    energies: np.ndarray = field(repr=False)
    residual: float = 0.0

    @property
    def degenerate(self) -> bool:
        return self.gap <= self.degeneracy_tolerance


def _fix_global_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v) > np.abs(v).max() * (1 - 1e-9)))
    return v * (abs(v[k]) / v[k])


def _spectral_bounds(h) -> tuple[float, float]:
    if sp.issparse(h) and h.shape[0] > DENSE_CUTOFF:
        lo = eigsh(h, k=1, which="SA", return_eigenvectors=False, v0=_v0(h.shape[0]))[0]
        hi = eigsh(h, k=1, which="LA", return_eigenvectors=False, v0=_v0(h.shape[0]))[0]
        return float(lo), float(hi)
    w = np.linalg.eigvalsh(_dense(h))
    return float(w[0]), float(w[-1])


def _dense(h) -> np.ndarray:
    return h.toarray() if sp.issparse(h) else np.asarray(h)


def _v0(dim: int) -> np.ndarray:
    # fixed start vector keeps ARPACK runs reproducible
    return np.random.default_rng(0).standard_normal(dim)


def ground_state(h, k_states: int = 2, space: HilbertSpace | None = None,
                 maxiter: int | None = None) -> GroundStateResult:
    """Lowest ``k_states`` eigenpairs; returns the ground state and the gap ``E1 - E0``.

    Dimensions below ``DENSE_CUTOFF`` use dense diagonalisation, larger ones
    the implicitly restarted Lanczos solver (ARPACK).
    """
    if k_states < 2:
        raise ValueError("k_states must be at least 2 to define a gap")
    dim = h.shape[0]
    if h.shape != (dim, dim):
        raise ValueError("Hamiltonian must be square")
    if dim <= k_states:
        raise ValueError("k_states must be smaller than the dimension")
    if dim < DENSE_CUTOFF or not sp.issparse(h):
        hd = _dense(h)
        if np.max(np.abs(hd - hd.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(hd))):
            raise ValueError("Hamiltonian is not Hermitian")
        w, v = np.linalg.eigh(hd)
        w, v = w[:k_states], v[:, :k_states]
    else:
        try:
            w, v = eigsh(h, k=k_states, which="SA", tol=0, v0=_v0(dim), maxiter=maxiter)
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge: {exc}") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    lo, hi = _spectral_bounds(h)
    hnorm = max(abs(lo), abs(hi), 1e-300)
    psi = _fix_global_phase(v[:, 0] / np.linalg.norm(v[:, 0]))
    residual = float(np.linalg.norm(h @ psi - w[0] * psi))
    if residual >= RESIDUAL_TOL * hnorm:
        raise ConvergenceError(f"ground-state residual {residual:.3e} exceeds {RESIDUAL_TOL} * ||H||")
    if space is None:
        space = HilbertSpace.from_dims([("chain", dim)])
    tol = 1e-8 * max(1.0, hnorm)
    return GroundStateResult(
        energy=float(w[0]),
        state=StateVector(space, psi),
        gap=max(0.0, float(w[1] - w[0])),
        degeneracy_tolerance=tol,
        energies=np.asarray(w, dtype=float),
        residual=residual,
    )


def solve_chain(spec: SpinChainSpec, k_states: int = 2) -> GroundStateResult:
    return ground_state(build_hamiltonian(spec), k_states, space=spec.space())


# --- weak measurement ---------------------------------------------------------

@dataclass
class WeakMeasurementSpec:
    """Ancilla-mediated measurement of ``sites`` with coupling angle ``theta``.

    Parameters
    ----------
    theta : float
        Controlled-phase angle in ``[0, pi]``.
    sites : list of int
        Measured system sites, one ancilla each.
    ancilla_prep : array or list of arrays
        A single normalised amplitude vector shared by all ancillas, one
        vector per ancilla, or one joint (possibly entangled) vector of
        dimension ``A ** len(sites)``.
    outcome_policy : "sample" or tuple of int
        Draw an outcome pattern from the exact distribution, or post-select
        the given pattern.
    system_weights : array, optional
        Diagonal of ``P_sys`` on one site; defaults to ``|1><1|``.
    compensate_local_phase : bool
        Undo the mean local phase ``exp(i theta <P_anc> P_sys)`` after the
        coupling, which removes the first-order unitary part of the channel.
    seed : int, optional
        Seed for the ``"sample"`` policy.
    """

    theta: float
    sites: Sequence[int]
    ancilla_prep: object = None
    outcome_policy: object = "sample"
    system_weights: np.ndarray | None = None
    compensate_local_phase: bool = False
    seed: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError("theta must lie in [0, pi]")
        self.sites = [int(s) for s in self.sites]
        if len(set(self.sites)) != len(self.sites) or not self.sites:
            raise ValueError("sites must be a non-empty list of distinct indices")
        if self.ancilla_prep is None:
            self.ancilla_prep = np.array([1.0, 1.0]) / np.sqrt(2)
        if self.outcome_policy != "sample":
            self.outcome_policy = tuple(int(m) for m in self.outcome_policy)
            if len(self.outcome_policy) != len(self.sites):
                raise ValueError("post-selection pattern needs one outcome per site")
        self.joint_prep()

    @property
    def n_ancillas(self) -> int:
        return len(self.sites)

    def _per_ancilla(self) -> list[np.ndarray] | None:
        prep = self.ancilla_prep
        if isinstance(prep, (list, tuple)) and prep and np.ndim(prep[0]) == 1:
            vecs = [np.asarray(p, dtype=complex) for p in prep]
            if len(vecs) != self.n_ancillas:
                raise ValueError("one ancilla vector per measured site is required")
            return vecs
        arr = np.asarray(prep, dtype=complex)
        if arr.ndim != 1:
            raise ValueError("ancilla_prep must be a vector or a list of vectors")
        if self.n_ancillas == 1 or arr.shape[0] in (2, 3):
            return [arr] * self.n_ancillas
        return None

    @property
    def ancilla_dim(self) -> int:
        per = self._per_ancilla()
        if per is not None:
            return per[0].shape[0]
        total = np.asarray(self.ancilla_prep).shape[0]
        for a in (2, 3):
            if a ** self.n_ancillas == total:
                return a
        raise ValueError("joint ancilla vector has an unsupported dimension")

    def joint_prep(self) -> np.ndarray:
        """Ancilla register state as a tensor of shape ``(A,) * n_ancillas``."""
        per = self._per_ancilla()
        if per is not None:
            dims = {p.shape[0] for p in per}
            if len(dims) != 1 or dims.pop() not in (2, 3):
                raise ValueError("ancillas must all be qubits or all be qutrits")
            for p in per:
                if abs(np.linalg.norm(p) - 1.0) > 1e-12:
                    raise ValueError("ancilla preparation must be normalised")
            out = per[0]
            for p in per[1:]:
                out = np.multiply.outer(out, p)
            return np.asarray(out).reshape((per[0].shape[0],) * self.n_ancillas)
        vec = np.asarray(self.ancilla_prep, dtype=complex)
        if abs(np.linalg.norm(vec) - 1.0) > 1e-12:
            raise ValueError("ancilla preparation must be normalised")
        return vec.reshape((self.ancilla_dim,) * self.n_ancillas)


@dataclass
class KrausTable:
    """Diagonal Kraus operators ``K_m = sum_s k[m, s] |s><s|`` on the measured sites."""

    patterns: list[tuple[int, ...]]
    configs: list[tuple[int, ...]]
    values: np.ndarray

    def completeness_error(self) -> float:
        return float(np.max(np.abs(np.sum(np.abs(self.values) ** 2, axis=0) - 1.0)))

    def operator(self, k: int) -> np.ndarray:
        return np.diag(self.values[k])


def x_basis(dim: int) -> np.ndarray:
    """Rows are ``<x_m|`` with ``|x_m> = sum_j omega^{-mj}|j>/sqrt(dim)``."""
    j = np.arange(dim)
    return np.exp(2j * np.pi * np.outer(j, j) / dim) / np.sqrt(dim)


def kraus_table(spec: WeakMeasurementSpec, local_dim: int) -> KrausTable:
    k = spec.n_ancillas
    a_dim = spec.ancilla_dim
    prep = spec.joint_prep()
    w = np.zeros(local_dim) if spec.system_weights is None else np.asarray(spec.system_weights, float)
    if spec.system_weights is None:
        w[1] = 1.0
    if w.shape != (local_dim,):
        raise ValueError("system_weights must have one entry per local level")
    q = np.zeros(a_dim)
    q[1] = 1.0
    # excited weight of each ancilla, used to undo the mean local phase
    probs = np.abs(prep) ** 2
    w1 = [float(np.sum(np.take(probs, 1, axis=i))) for i in range(k)]
    rows = x_basis(a_dim)
    configs = list(itertools.product(range(local_dim), repeat=k))
    patterns = list(itertools.product(range(a_dim), repeat=k))
    values = np.zeros((len(patterns), len(configs)), dtype=complex)
    for c_idx, conf in enumerate(configs):
        amp = prep.copy()
        for i, s in enumerate(conf):
            shape = [1] * k
            shape[i] = a_dim
            phase = np.exp(1j * spec.theta * w[s] * q).reshape(shape)
            if spec.compensate_local_phase:
                phase = phase * np.exp(-1j * spec.theta * w[s] * w1[i])
            amp = amp * phase
        for i in range(k):
            amp = np.moveaxis(np.tensordot(rows, amp, axes=([1], [i])), 0, i)
        values[:, c_idx] = amp.reshape(-1)
    table = KrausTable(patterns, configs, values)
    err = table.completeness_error()
    if err > COMPLETENESS_TOL:
        raise ArithmeticError(f"Kraus completeness violated by {err:.3e}")
    return table


@dataclass
class PostSelectionStats:
    outcome_probabilities: dict[tuple[int, ...], float]
    selected_outcome: tuple[int, ...]
    selected_state: StateVector
    success_probability: float

    def as_dict(self) -> dict:
        return {
            "outcome_probabilities": {",".join(map(str, k)): v
                                      for k, v in self.outcome_probabilities.items()},
            "selected_outcome": list(self.selected_outcome),
            "success_probability": self.success_probability,
        }


def _as_tensor(state: StateVector | np.ndarray, local_dim: int) -> tuple[np.ndarray, int]:
    amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, dtype=complex)
    n = round(np.log(amps.size) / np.log(local_dim))
    if local_dim ** n != amps.size:
        raise ValueError(f"state dimension {amps.size} is not a power of {local_dim}")
    return amps.reshape((local_dim,) * n), n


def _kraus_diagonal(values_row: np.ndarray, sites: list[int], n: int, local_dim: int) -> np.ndarray:
    """Broadcastable diagonal of one Kraus operator over the whole chain."""
    k = len(sites)
    diag = values_row.reshape((local_dim,) * k)
    order = np.argsort(sites)
    diag = np.transpose(diag, order)
    shape = [1] * n
    for s in sites:
        shape[s] = local_dim
    return diag.reshape(shape)


def weak_measure(state: StateVector | np.ndarray, spec: WeakMeasurementSpec,
                 local_dim: int = 2) -> PostSelectionStats:
    """Outcome distribution of the ancilla readout and the conditional system state."""
    psi, n = _as_tensor(state, local_dim)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("input state must be normalised")
    if any(not 0 <= s < n for s in spec.sites):
        raise IndexError("measured site out of range")
    table = kraus_table(spec, local_dim)
    weights = np.abs(psi) ** 2
    marg = np.sum(weights, axis=tuple(s for s in range(n) if s not in spec.sites))
    # marginal axes follow sorted site order; reorder to spec.sites order
    sorted_sites = sorted(spec.sites)
    marg = np.transpose(marg, [sorted_sites.index(s) for s in spec.sites]).reshape(-1)
    probs = np.abs(table.values) ** 2 @ marg
    dist = {pat: float(p) for pat, p in zip(table.patterns, probs)}
    if spec.outcome_policy == "sample":
        rng = np.random.default_rng(spec.seed)
        p = np.clip(probs, 0.0, None)
        idx = int(rng.choice(len(p), p=p / p.sum()))
    else:
        if spec.outcome_policy not in dist:
            raise ValueError(f"outcome pattern {spec.outcome_policy} is out of range")
        idx = table.patterns.index(spec.outcome_policy)
    if probs[idx] < MEASURE_ZERO:
        raise MeasureZeroOutcome(f"outcome {table.patterns[idx]} has probability {probs[idx]:.3e}")
    new = psi * _kraus_diagonal(table.values[idx], spec.sites, n, local_dim)
    new = new.reshape(-1) / np.sqrt(probs[idx])
    space = state.space if isinstance(state, StateVector) else chain_space(n, local_dim)
    return PostSelectionStats(dist, table.patterns[idx], StateVector(space, new), float(probs[idx]))


def channel_output(state: StateVector | np.ndarray, spec: WeakMeasurementSpec,
                   local_dim: int = 2) -> np.ndarray:
    """Outcome-averaged density matrix ``sum_m K_m rho K_m^dag``."""
    psi, n = _as_tensor(state, local_dim)
    table = kraus_table(spec, local_dim)
    rho = np.zeros((psi.size, psi.size), dtype=complex)
    for row in table.values:
        v = (psi * _kraus_diagonal(row, spec.sites, n, local_dim)).reshape(-1)
        rho += np.outer(v, v.conj())
    return rho


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho - sigma))))


def channel_perturbation(state: StateVector | np.ndarray, spec: WeakMeasurementSpec,
                         local_dim: int = 2) -> float:
    """Trace distance between the averaged channel output and the input state."""
    psi, _ = _as_tensor(state, local_dim)
    v = psi.reshape(-1)
    return trace_distance(channel_output(state, spec, local_dim), np.outer(v, v.conj()))


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# --- observables ----------------------------------------------------------------

OBSERVABLES = {
    "ZZ": (PAULI["Z"], PAULI["Z"]),
    "XX": (PAULI["X"], PAULI["X"]),
    "potts_order": (POTTS_V, POTTS_V.conj().T),
}


def correlators(state: StateVector | np.ndarray, observable: str,
                pairs: Sequence[tuple[int, int]], connected: bool = False) -> list[complex | float]:
    """``<O_i O'_j>`` for each pair (0-based sites); ``potts_order`` is ``V_i V_j^dag``."""
    if observable not in OBSERVABLES:
        raise ValueError(f"unknown observable {observable!r}")
    a, b = OBSERVABLES[observable]
    psi, n = _as_tensor(state, a.shape[0])
    out = []
    for i, j in pairs:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"invalid site pair {(i, j)}")
        val = _expect(psi, [(a, i), (b, j)])
        if connected:
            val -= _expect(psi, [(a, i)]) * _expect(psi, [(b, j)])
        out.append(float(val.real) if observable != "potts_order" else complex(val))
    return out


def _expect(psi: np.ndarray, ops: list[tuple[np.ndarray, int]]) -> complex:
    phi = psi
    for op, s in ops:
        phi = np.moveaxis(np.tensordot(op, phi, axes=([1], [s])), 0, s)
    return complex(np.vdot(psi, phi))


def total_z(state: StateVector | np.ndarray) -> float:
    psi, n = _as_tensor(state, 2)
    return float(sum(_expect(psi, [(PAULI["Z"], s)]).real for s in range(n)))


# --- Potts gap scan ---------------------------------------------------------------

@dataclass(frozen=True)
class GapRow:
    n: int
    J_over_h: float
    gap: float
    energy: float

    def as_dict(self) -> dict:
        return {"n": self.n, "J_over_h": self.J_over_h, "gap": self.gap, "energy": self.energy}


def potts_gap_scan(n_list: Sequence[int], J_over_h_list: Sequence[float], h: float = 1.0) -> list[GapRow]:
    """Periodic-chain gap ``E1 - E0`` for each size and coupling ratio."""
    rows = []
    for n in n_list:
        for r in J_over_h_list:
            spec = SpinChainSpec("potts3", int(n), J=float(r) * h, h=h, boundary="periodic")
            res = solve_chain(spec, k_states=3)
            rows.append(GapRow(int(n), float(r), res.gap, res.energy))
    return rows
