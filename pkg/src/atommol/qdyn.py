"""Small-space quantum dynamics: states, operators and a fixed-step RK4 propagator.

Frequencies are angular (rad/s) and times are seconds throughout.  Decay is
modelled with a non-Hermitian effective Hamiltonian, so the norm lost by the
no-jump trajectory is the decay probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# An envelope of None in a Hamiltonian marks a static term (weight 1 at all times).
Envelope = Callable[[float], float]


class DimensionError(ValueError):
    """Operator, state or space dimensions do not agree."""


class IntegrationError(RuntimeError):
    """The propagator produced non-finite amplitudes or failed to converge."""


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of labelled factors.

    Each factor is ``(name, levels)`` where ``levels`` is a tuple of basis
    labels; the factor dimension is ``len(levels)``.
    """

    factors: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        names = [name for name, _ in self.factors]
        if len(set(names)) != len(names):
            raise ValueError(f"factor labels must be unique, got {names}")
        for name, levels in self.factors:
            if len(levels) < 1:
                raise ValueError(f"factor {name!r} has no levels")
            if len(set(levels)) != len(levels):
                raise ValueError(f"factor {name!r} has repeated level labels")

    @classmethod
    def from_dims(cls, dims: Sequence[tuple[str, int]]) -> "HilbertSpace":
        return cls(tuple((name, tuple(str(k) for k in range(dim))) for name, dim in dims))

    @classmethod
    def from_levels(cls, **factors: Sequence[str]) -> "HilbertSpace":
        return cls(tuple((name, tuple(levels)) for name, levels in factors.items()))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(levels) for _, levels in self.factors)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def factor_index(self, name: str) -> int:
        for k, (fname, _) in enumerate(self.factors):
            if fname == name:
                return k
        raise KeyError(name)

    def index(self, *labels: str) -> int:
        """Flat basis index of the product ket with one level label per factor."""
        if len(labels) != len(self.factors):
            raise DimensionError(f"expected {len(self.factors)} labels, got {len(labels)}")
        idx = 0
        for (name, levels), lab in zip(self.factors, labels):
            try:
                k = levels.index(lab)
            except ValueError:
                raise KeyError(f"{lab!r} is not a level of factor {name!r}") from None
            idx = idx * len(levels) + k
        return idx

    def ket(self, *labels: str) -> "StateVector":
        amps = np.zeros(self.total_dim, dtype=complex)
        amps[self.index(*labels)] = 1.0
        return StateVector(self, amps)

    def projector(self, *labels: str) -> np.ndarray:
        i = self.index(*labels)
        p = np.zeros((self.total_dim, self.total_dim), dtype=complex)
        p[i, i] = 1.0
        return p

    def transition(self, bra: Sequence[str], ket: Sequence[str]) -> np.ndarray:
        """Matrix ``|bra><ket|`` between two product basis states."""
        m = np.zeros((self.total_dim, self.total_dim), dtype=complex)
        m[self.index(*bra), self.index(*ket)] = 1.0
        return m

    def embed(self, op: np.ndarray, factor: str) -> np.ndarray:
        """Lift a single-factor operator to the full space (identity elsewhere)."""
        k = self.factor_index(factor)
        op = np.asarray(op, dtype=complex)
        if op.shape != (self.dims[k], self.dims[k]):
            raise DimensionError(f"operator shape {op.shape} does not fit factor {factor!r}")
        out = np.ones((1, 1), dtype=complex)
        for j, d in enumerate(self.dims):
            out = np.kron(out, op if j == k else np.eye(d))
        return out

    def level_operator(self, factor: str, bra: str, ket: str) -> np.ndarray:
        """``|bra><ket|`` on one factor, identity on the others."""
        k = self.factor_index(factor)
        levels = self.factors[k][1]
        op = np.zeros((len(levels), len(levels)), dtype=complex)
        op[levels.index(bra), levels.index(ket)] = 1.0
        return self.embed(op, factor)


@dataclass
class StateVector:
    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.shape[0] != self.space.total_dim:
            raise DimensionError(
                f"{self.amplitudes.shape[0]} amplitudes for a space of dimension {self.space.total_dim}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.space, self.amplitudes / self.norm())

    def overlap(self, other: "StateVector") -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def population(self, *labels: str) -> float:
        return float(abs(self.amplitudes[self.space.index(*labels)]) ** 2)

    def __add__(self, other: "StateVector") -> "StateVector":
        if other.space != self.space:
            raise DimensionError("states live in different spaces")
        return StateVector(self.space, self.amplitudes + other.amplitudes)

    def __rmul__(self, scalar: complex) -> "StateVector":
        return StateVector(self.space, scalar * self.amplitudes)


@dataclass(frozen=True)
class OperatorTerm:
    """A fixed matrix multiplied by a time envelope inside a Hamiltonian.

    Hermitian terms describe coherent couplings; ``decay=True`` marks an
    anti-Hermitian term such as ``-i gamma/2 |r><r|``.
    """

    matrix: np.ndarray
    label: str = ""
    decay: bool = False

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator term {self.label!r} is not square: {m.shape}")
        scale = max(1.0, float(np.max(np.abs(m))))
        if self.decay:
            if not np.allclose(m, -m.conj().T, atol=1e-12 * scale, rtol=0):
                raise ValueError(f"decay term {self.label!r} must be anti-Hermitian")
        elif not np.allclose(m, m.conj().T, atol=1e-12 * scale, rtol=0):
            raise ValueError(f"term {self.label!r} must be Hermitian")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def decay_on(cls, projector: np.ndarray, rate: float, label: str = "") -> "OperatorTerm":
        """``-i rate/2 * projector``; ``rate`` is the population decay rate in 1/s."""
        return cls(-0.5j * rate * np.asarray(projector, dtype=complex), label=label, decay=True)


def constant(value: float = 1.0) -> Envelope:
    return lambda t: value


def sine_pulse(peak: float, duration: float) -> Envelope:
    """``peak * sin(pi t / duration)`` on ``[0, duration]``."""
    return lambda t: peak * math.sin(math.pi * t / duration)


@dataclass
class TimeDependentHamiltonian:
    space: HilbertSpace
    terms: list[tuple[OperatorTerm, Envelope | None]]
    duration: float

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        n = self.space.total_dim
        for term, _ in self.terms:
            if term.matrix.shape != (n, n):
                raise DimensionError(
                    f"term {term.label!r} has shape {term.matrix.shape}, space dimension is {n}"
                )

    @property
    def has_decay(self) -> bool:
        return any(term.decay for term, _ in self.terms)

    def at(self, t: float) -> np.ndarray:
        n = self.space.total_dim
        h = np.zeros((n, n), dtype=complex)
        for term, env in self.terms:
            h += (1.0 if env is None else env(t)) * term.matrix
        return h

    def norm_bound(self, samples: int = 64) -> float:
        """Largest spectral norm of H(t) over a uniform sample of the pulse."""
        if not self.terms:
            return 0.0
        ts = np.linspace(0.0, self.duration, samples) if self.duration > 0 else [0.0]
        return max(float(np.linalg.norm(self.at(float(t)), 2)) for t in ts)


@dataclass(frozen=True)
class StepControl:
    """Step size policy for :func:`evolve`.

    ``dt_max`` of ``None`` picks ``phase_per_step / ||H||``.  When
    ``check_convergence`` is set the run is repeated at half the step until
    successive results differ by less than ``rel_tol``.
    """

    dt_max: float | None = None
    rel_tol: float = 1e-9
    phase_per_step: float = 0.02
    check_convergence: bool = True
    max_halvings: int = 8


@dataclass
class EvolutionResult:
    final_state: StateVector
    norm_loss: float
    step_count: int
    trajectory_samples: list[tuple[float, StateVector]] | None = None
    convergence_error: float = 0.0


def _rk4(hamiltonian: TimeDependentHamiltonian, psi: np.ndarray, n_steps: int,
         sample_every: int | None = None):
    """Integrate ``i dpsi/dt = H(t) psi`` with ``n_steps`` classical RK4 steps.

    ``psi`` may be a vector or a matrix of column vectors.
    """
    T = hamiltonian.duration
    samples = [] if sample_every else None
    if not hamiltonian.terms or T == 0.0 or n_steps == 0:
        if samples is not None:
            samples.append((0.0, psi.copy()))
        return psi.copy(), samples
    dim = hamiltonian.space.total_dim
    static = np.zeros((dim, dim), dtype=complex)
    driven = []
    for term, env in hamiltonian.terms:
        if env is None:
            static += term.matrix
        else:
            driven.append((-1j * term.matrix, env))
    static *= -1j
    dt = T / n_steps

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        out = static @ y
        for m, env in driven:
            out += env(t) * (m @ y)
        return out

    y = psi.astype(complex, copy=True)
    if samples is not None:
        samples.append((0.0, y.copy()))
    for k in range(n_steps):
        t = k * dt
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if samples is not None and ((k + 1) % sample_every == 0 or k + 1 == n_steps):
            samples.append(((k + 1) * dt, y.copy()))
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite amplitude encountered during integration")
    return y, samples


def _initial_steps(hamiltonian: TimeDependentHamiltonian, control: StepControl) -> int:
    T = hamiltonian.duration
    if T == 0.0 or not hamiltonian.terms:
        return 0
    if control.dt_max is not None:
        if control.dt_max <= 0:
            raise ValueError("dt_max must be positive")
        dt = control.dt_max
    else:
        scale = hamiltonian.norm_bound()
        if scale == 0.0:
            return 1
        dt = control.phase_per_step / scale
    return max(1, math.ceil(T / dt))


def _propagate(hamiltonian: TimeDependentHamiltonian, psi: np.ndarray, control: StepControl,
               sample_every: int | None = None):
    n = _initial_steps(hamiltonian, control)
    y, samples = _rk4(hamiltonian, psi, n, sample_every)
    err = 0.0
    if control.check_convergence and n > 0:
        for _ in range(control.max_halvings):
            n *= 2
            sample_every = 2 * sample_every if sample_every else None
            y_fine, samples = _rk4(hamiltonian, psi, n, sample_every)
            err = float(np.max(np.abs(y_fine - y)))
            y = y_fine
            if err < control.rel_tol:
                break
        else:
            raise IntegrationError(
                f"step halving did not converge: last change {err:.3e} > rel_tol {control.rel_tol:.1e}"
            )
    return y, n, samples, err


def evolve(initial: StateVector, hamiltonian: TimeDependentHamiltonian,
           control: StepControl | None = None, sample_every: int | None = None) -> EvolutionResult:
    """Propagate ``initial`` from ``t = 0`` to ``hamiltonian.duration``.

    With convergence checking on, the returned state is the finest of a
    sequence of step-halved runs whose last two members agree to
    ``control.rel_tol`` in every amplitude.
    """
    control = control or StepControl()
    if initial.space != hamiltonian.space:
        if initial.space.total_dim != hamiltonian.space.total_dim:
            raise DimensionError("initial state and Hamiltonian live in different spaces")
        raise DimensionError("initial state and Hamiltonian use different factor layouts")
    y, n, samples, err = _propagate(hamiltonian, initial.amplitudes, control, sample_every)
    space = hamiltonian.space
    norm0 = float(np.vdot(initial.amplitudes, initial.amplitudes).real)
    if hamiltonian.has_decay and norm0 > 0:
        loss = 1.0 - float(np.vdot(y, y).real) / norm0
        loss = min(1.0, max(0.0, loss))
    else:
        loss = 0.0
    traj = [(t, StateVector(space, v)) for t, v in samples] if samples is not None else None
    return EvolutionResult(StateVector(space, y), loss, n, traj, err)


def evolve_many(initials: Sequence[StateVector], hamiltonian: TimeDependentHamiltonian,
                control: StepControl | None = None) -> list[EvolutionResult]:
    """Propagate several states in one pass; same result as calling :func:`evolve` on each."""
    control = control or StepControl()
    for s in initials:
        if s.space != hamiltonian.space:
            raise DimensionError("initial state and Hamiltonian live in different spaces")
    cols = np.stack([s.amplitudes for s in initials], axis=1)
    y, n, _, err = _propagate(hamiltonian, cols, control)
    out = []
    for k, s in enumerate(initials):
        norm0 = float(np.vdot(s.amplitudes, s.amplitudes).real)
        loss = 0.0
        if hamiltonian.has_decay and norm0 > 0:
            loss = min(1.0, max(0.0, 1.0 - float(np.vdot(y[:, k], y[:, k]).real) / norm0))
        out.append(EvolutionResult(StateVector(hamiltonian.space, y[:, k]), loss, n, None, err))
    return out


def extract_unitary(hamiltonian: TimeDependentHamiltonian, basis: Sequence[StateVector],
                    control: StepControl | None = None) -> np.ndarray:
    """Matrix of ``<basis_j| U(T) |basis_k>`` over the given orthonormal basis."""
    control = control or StepControl()
    if not basis:
        raise ValueError("basis must not be empty")
    for b in basis:
        if b.space != hamiltonian.space:
            raise DimensionError("basis vector is not in the Hamiltonian's space")
    cols = np.stack([b.amplitudes for b in basis], axis=1)
    gram = cols.conj().T @ cols
    if not np.allclose(gram, np.eye(len(basis)), atol=1e-10):
        raise ValueError("basis vectors must be orthonormal")
    evolved, *_ = _propagate(hamiltonian, cols, control)
    return cols.conj().T @ evolved


def average_gate_fidelity(u_actual: np.ndarray, u_ideal: np.ndarray) -> float:
    """Average gate fidelity of a (possibly non-unitary) subspace map against a unitary.

    ``(|Tr(U_ideal^dag U_actual)|^2 + Tr(U_actual^dag U_actual)) / (d (d + 1))``
    """
    u_actual = np.asarray(u_actual, dtype=complex)
    u_ideal = np.asarray(u_ideal, dtype=complex)
    if u_actual.ndim != 2 or u_actual.shape[0] != u_actual.shape[1]:
        raise DimensionError(f"U_actual must be square, got {u_actual.shape}")
    if u_actual.shape != u_ideal.shape:
        raise DimensionError(f"shape mismatch {u_actual.shape} vs {u_ideal.shape}")
    d = u_actual.shape[0]
    overlap = abs(np.trace(u_ideal.conj().T @ u_actual)) ** 2
    norm = np.trace(u_actual.conj().T @ u_actual).real
    return float((overlap + norm) / (d * (d + 1)))
