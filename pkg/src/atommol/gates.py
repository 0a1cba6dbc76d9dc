"""Pulse-level simulations of molecule-molecule and atom-molecule entangling gates.

Hybrid gate level scheme (molecule x atom, 12 states)::

    molecule  |0>  |1>  |2>        |1> <-> |2> carries the transition dipole
    atom      |a>  |b>  |r>  |R>   laser drives |a> <-> |r>; |r> <-> |R> dipole

The pair states |1r> and |2R> are exchanged at rate ``V_MA / 2`` and
``Delta`` is the energy of |2R> relative to |1r>.  A sinusoidal laser pulse
``Omega(t) = Omega_max sin(pi t / T)`` with area 2 pi implements a CZ when
``Delta = 0``: |0a> makes a full Rabi cycle through |0r> and returns with a
sign flip, while |1a> only sees the dressed |1r>/|2R> doublet at +-V_MA/2 and
follows it adiabatically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq, minimize, minimize_scalar

from .qdyn import (
    EvolutionResult,
    HilbertSpace,
    OperatorTerm,
    StateVector,
    StepControl,
    TimeDependentHamiltonian,
    average_gate_fidelity,
    evolve,
    evolve_many,
    sine_pulse,
)

log = logging.getLogger(__name__)

HYBRID_SPACE = HilbertSpace.from_levels(mol=("0", "1", "2"), atom=("a", "b", "r", "R"))
HYBRID_BASIS = (("0", "a"), ("0", "b"), ("1", "a"), ("1", "b"))

MOLMOL_SPACE = HilbertSpace.from_levels(m1=("0", "1", "2"), m2=("0", "1", "2"))
MOLMOL_BASIS = (("0", "0"), ("0", "1"), ("1", "0"), ("1", "1"))
EXCHANGE_SPACE = HilbertSpace.from_levels(m1=("1", "2"), m2=("1", "2"))

CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
DEFAULT_LEAKAGE_THRESHOLD = 1e-3


def wrap_phase(phi: float) -> float:
    """Map an angle into (-pi, pi]."""
    w = math.pi - (math.pi - phi) % (2.0 * math.pi)
    # a tiny negative (pi - phi) makes the float modulo round up to exactly 2 pi
    return w + 2.0 * math.pi if w <= -math.pi else w


def phase_distance(a: float, b: float) -> float:
    """Shortest angular distance between two phases."""
    return abs(wrap_phase(a - b))


@dataclass(frozen=True)
class PulseEnvelope:
    """Laser pulse on |a> <-> |r>.

    ``area`` is the dimensionless integral of the Rabi frequency, so the
    sinusoidal pulse lasts ``pi * area / (2 * omega_max)``.
    """

    omega_max: float
    area: float = 2.0 * math.pi
    laser_detuning: float = 0.0
    shape: str = "sinusoidal"

    def __post_init__(self) -> None:
        if self.shape != "sinusoidal":
            raise ValueError(f"unsupported pulse shape {self.shape!r}")
        if self.omega_max <= 0:
            raise ValueError("omega_max must be positive")
        if self.area <= 0:
            raise ValueError("pulse area must be positive")

    @property
    def duration(self) -> float:
        return math.pi * self.area / (2.0 * self.omega_max)

    def rabi(self, t: float) -> float:
        return self.omega_max * math.sin(math.pi * t / self.duration)


@dataclass(frozen=True)
class HybridGateSpec:
    v_ma: float
    pulse: PulseEnvelope
    delta: float = 0.0
    gamma_r: float = 0.0
    gamma_R: float = 0.0
    target_phase: float | None = None

    def __post_init__(self) -> None:
        if self.v_ma <= 0:
            raise ValueError("V_MA must be positive")
        if self.gamma_r < 0 or self.gamma_R < 0:
            raise ValueError("decay rates must be non-negative")
        if self.pulse.omega_max > self.v_ma:
            log.warning("Omega_max = %.3g exceeds V_MA = %.3g; the |1a> path will not be adiabatic",
                        self.pulse.omega_max, self.v_ma)

    @classmethod
    def cz(cls, v_ma: float, omega_ratio: float, gamma_r: float = 0.0,
           gamma_R: float = 0.0) -> "HybridGateSpec":
        """Resonant CZ configuration with ``Omega_max = omega_ratio * V_MA`` and a 2 pi pulse."""
        return cls(v_ma=v_ma, pulse=PulseEnvelope(omega_max=omega_ratio * v_ma),
                   gamma_r=gamma_r, gamma_R=gamma_R)


@dataclass(frozen=True)
class MolMolGateSpec:
    v_mm: float
    protocol: str
    drive_rabi: float = 0.0
    hold_time: float = 0.0
    carrier: str = "dressed"

    def __post_init__(self) -> None:
        if self.carrier not in ("dressed", "bare"):
            raise ValueError(f"carrier must be 'dressed' or 'bare', got {self.carrier!r}")
        if self.v_mm <= 0:
            raise ValueError("V_MM must be positive")
        if self.protocol not in ("iswap", "pair_drive"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.drive_rabi < 0 or self.hold_time < 0:
            raise ValueError("drive_rabi and hold_time must be non-negative")
        if self.protocol == "pair_drive" and self.drive_rabi > 0.2 * self.v_mm:
            log.warning("pair drive Rabi frequency %.3g is not small against V_MM = %.3g",
                        self.drive_rabi, self.v_mm)

    @property
    def pair_coupling(self) -> float:
        """Coupling between |11> and |Psi+> under the symmetric drive."""
        return self.drive_rabi / math.sqrt(2.0)

    @property
    def carrier_offset(self) -> float:
        """Energy given to each |2> excitation in the drive frame, relative to the |Psi+> shift.

        ``bare`` puts the carrier on the unperturbed |11> <-> |Psi+> line.
        ``dressed`` also absorbs the |Psi+> light shift from the off-resonant
        |Psi+> <-> |22> coupling, solving ``eps = g^2 / (V_MM + eps)``.
        """
        if self.carrier == "bare":
            return 0.0
        g = self.pair_coupling
        return 0.5 * (math.sqrt(self.v_mm ** 2 + 4.0 * g * g) - self.v_mm)

    @property
    def cycle_time(self) -> float:
        """Duration of one full |11> -> |Psi+> -> -|11> Rabi cycle."""
        return math.pi / self.pair_coupling if self.drive_rabi > 0 else 0.0


@dataclass
class GateReport:
    conditional_phase: float
    leakage: float
    decay_loss: float
    subspace_unitary: np.ndarray
    fidelity_vs_ideal: float
    diagonal_phases: dict[str, float] = field(default_factory=dict)
    return_populations: dict[str, float] = field(default_factory=dict)
    duration: float = 0.0
    leakage_flagged: bool = False

    def as_dict(self) -> dict:
        u = self.subspace_unitary
        return {
            "conditional_phase": self.conditional_phase,
            "leakage": self.leakage,
            "decay_loss": self.decay_loss,
            "fidelity_vs_ideal": self.fidelity_vs_ideal,
            "diagonal_phases": dict(self.diagonal_phases),
            "return_populations": dict(self.return_populations),
            "duration_s": self.duration,
            "leakage_flagged": self.leakage_flagged,
            "subspace_unitary": {"re": u.real.tolist(), "im": u.imag.tolist()},
        }


def build_hybrid_hamiltonian(spec: HybridGateSpec) -> TimeDependentHamiltonian:
    """Atom-molecule Hamiltonian in the laser rotating frame.

    The laser detuning shifts both Rydberg levels (|r> and |R> move together
    in the rotating frame), so ``delta`` keeps its meaning as the |2R> - |1r>
    pair-state splitting.
    """
    sp = HYBRID_SPACE
    exchange = 0.5 * spec.v_ma * (sp.transition(("1", "r"), ("2", "R"))
                                  + sp.transition(("2", "R"), ("1", "r")))
    terms: list = [(OperatorTerm(exchange, "exchange"), None)]
    if spec.delta != 0.0:
        terms.append((OperatorTerm(spec.delta * sp.projector("2", "R"), "pair_detuning"), None))
    if spec.pulse.laser_detuning != 0.0:
        rydberg = sp.level_operator("atom", "r", "r") + sp.level_operator("atom", "R", "R")
        terms.append((OperatorTerm(spec.pulse.laser_detuning * rydberg, "laser_detuning"), None))
    drive = 0.5 * (sp.level_operator("atom", "a", "r") + sp.level_operator("atom", "r", "a"))
    pulse = spec.pulse
    terms.append((OperatorTerm(drive, "laser"), sine_pulse(pulse.omega_max, pulse.duration)))
    if spec.gamma_r > 0:
        terms.append((OperatorTerm.decay_on(sp.level_operator("atom", "r", "r"), spec.gamma_r,
                                            "decay_r"), None))
    if spec.gamma_R > 0:
        terms.append((OperatorTerm.decay_on(sp.level_operator("atom", "R", "R"), spec.gamma_R,
                                            "decay_R"), None))
    return TimeDependentHamiltonian(sp, terms, pulse.duration)


def conditional_phase(u: np.ndarray) -> float:
    """Entangling phase ``phi_00 - phi_01 - phi_10 + phi_11`` from the diagonal of a 4x4 map."""
    ph = np.angle(np.diag(u))
    return wrap_phase(float(ph[0] - ph[1] - ph[2] + ph[3]))


def _local_z_frame(alpha: float, beta: float) -> np.ndarray:
    return np.array([1.0, np.exp(1j * beta), np.exp(1j * alpha), np.exp(1j * (alpha + beta))])


def fidelity_up_to_local_z(u: np.ndarray, phase: float = math.pi) -> float:
    """Average gate fidelity against ``diag(1,1,1,e^{i phase})`` maximised over local Z rotations."""
    target = np.diag([1.0, 1.0, 1.0, np.exp(1j * phase)]).astype(complex)
    diag = np.diag(u)

    def cost(x: np.ndarray) -> float:
        ideal = np.diag(_local_z_frame(x[0], x[1])) @ target
        return -abs(np.vdot(np.diag(ideal), diag)) ** 2

    ph = np.angle(diag)
    starts = [np.array([ph[2] - ph[0], ph[1] - ph[0]])]
    starts += [np.array([a, b]) for a in (0.0, math.pi) for b in (0.0, math.pi)]
    best = min((minimize(cost, x0, method="Nelder-Mead",
                         options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000}) for x0 in starts),
               key=lambda r: r.fun)
    ideal = np.diag(_local_z_frame(*best.x)) @ target
    return average_gate_fidelity(u, ideal)


def _subspace_report(space: HilbertSpace, basis_labels, results: list[EvolutionResult],
                     names: list[str], ideal_phase: float | None,
                     leakage_threshold: float, duration: float) -> GateReport:
    basis = [space.ket(*lab) for lab in basis_labels]
    finals = np.stack([r.final_state.amplitudes for r in results], axis=1)
    cols = np.stack([b.amplitudes for b in basis], axis=1)
    u = cols.conj().T @ finals
    in_sub = np.sum(np.abs(u) ** 2, axis=0)
    total = np.sum(np.abs(finals) ** 2, axis=0)
    leakage = float(np.mean(np.clip(total - in_sub, 0.0, None)))
    decay = float(np.mean([r.norm_loss for r in results]))
    phi_c = conditional_phase(u)
    target = phi_c if ideal_phase is None else ideal_phase
    fid = fidelity_up_to_local_z(u, target)
    diag = np.diag(u)
    return GateReport(
        conditional_phase=phi_c,
        leakage=leakage,
        decay_loss=decay,
        subspace_unitary=u,
        fidelity_vs_ideal=fid,
        diagonal_phases={n: float(np.angle(z)) for n, z in zip(names, diag)},
        return_populations={n: float(abs(z) ** 2) for n, z in zip(names, diag)},
        duration=duration,
        leakage_flagged=leakage > leakage_threshold,
    )


def _run_hybrid(spec: HybridGateSpec, control: StepControl | None, ideal_phase: float | None,
                leakage_threshold: float) -> GateReport:
    h = build_hybrid_hamiltonian(spec)
    control = control or StepControl(rel_tol=1e-10)
    results = evolve_many([HYBRID_SPACE.ket(*lab) for lab in HYBRID_BASIS], h, control)
    report = _subspace_report(HYBRID_SPACE, HYBRID_BASIS, results,
                              ["".join(lab) for lab in HYBRID_BASIS], ideal_phase,
                              leakage_threshold, h.duration)
    if report.leakage_flagged:
        log.warning("hybrid gate leakage %.3g exceeds threshold %.1g", report.leakage, leakage_threshold)
    return report


def simulate_hybrid_cz(spec: HybridGateSpec, control: StepControl | None = None,
                       leakage_threshold: float = DEFAULT_LEAKAGE_THRESHOLD) -> GateReport:
    """Resonant 2 pi pulse; fidelity is scored against CZ up to local Z rotations."""
    if spec.delta != 0.0:
        raise ValueError("the CZ protocol requires Delta = 0")
    if not math.isclose(spec.pulse.area, 2.0 * math.pi, rel_tol=1e-12):
        raise ValueError("the CZ protocol requires a 2 pi pulse area")
    return _run_hybrid(spec, control, math.pi, leakage_threshold)


def simulate_hybrid_phase(spec: HybridGateSpec, control: StepControl | None = None,
                          leakage_threshold: float = DEFAULT_LEAKAGE_THRESHOLD) -> GateReport:
    """Detuned protocol: the laser is detuned by ``Delta`` and |0a> performs an off-resonant loop.

    Fidelity is scored against ``spec.target_phase`` when given, otherwise
    against the realised conditional phase (so it measures leakage and
    non-unitarity only).
    """
    if not math.isclose(spec.pulse.laser_detuning, spec.delta, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError("the phase protocol requires laser_detuning == Delta")
    return _run_hybrid(spec, control, spec.target_phase, leakage_threshold)


def generalized_rabi_area(omega_max: float, detuning: float, turns: int = 1) -> float:
    """Pulse area whose generalised Rabi angle ``int sqrt(Omega(t)^2 + detuning^2) dt`` is ``2 pi turns``.

    For a shaped (non-square) pulse this does not close the |0a> loop in
    general; see :func:`loop_closing_area`.
    """

    def angle(T: float) -> float:
        val, _ = quad(lambda t: math.hypot(omega_max * math.sin(math.pi * t / T), detuning), 0.0, T,
                      epsabs=1e-13, epsrel=1e-13)
        return val - 2.0 * math.pi * turns

    hi = 2.0 * math.pi * turns / max(abs(detuning), 1e-300)
    T = brentq(angle, 1e-6 * hi, hi, xtol=1e-15 * hi, rtol=1e-14)
    return 2.0 * omega_max * T / math.pi


def two_level_return(omega_max: float, detuning: float, area: float) -> complex:
    """Amplitude left in |0a> after the sinusoidal pulse, from the {|0a>, |0r>} block alone."""
    T = math.pi * area / (2.0 * omega_max)

    def rhs(t, y):
        half = 0.5 * omega_max * math.sin(math.pi * t / T)
        return -1j * np.array([half * y[1], half * y[0] + detuning * y[1]])

    sol = solve_ivp(rhs, (0.0, T), np.array([1.0, 0.0], dtype=complex), method="DOP853",
                    rtol=1e-12, atol=1e-13)
    return complex(sol.y[0, -1])


def loop_closing_area(omega_max: float, detuning: float, grid: int = 200) -> float:
    """Smallest pulse area beyond the generalised-Rabi estimate at which |0a> returns.

    Scans the two-level return probability on ``[a0, 4 a0]`` and refines the
    first local maximum; raises if no scanned maximum is closed to 1e-6.
    """
    a0 = generalized_rabi_area(omega_max, detuning)
    areas = np.linspace(a0, 4.0 * a0, grid)
    loss = np.array([1.0 - abs(two_level_return(omega_max, detuning, a)) ** 2 for a in areas])
    for k in range(1, grid - 1):
        if loss[k] <= loss[k - 1] and loss[k] <= loss[k + 1]:
            res = minimize_scalar(lambda a: 1.0 - abs(two_level_return(omega_max, detuning, a)) ** 2,
                                  bounds=(areas[k - 1], areas[k + 1]), method="bounded",
                                  options={"xatol": 1e-10 * a0})
            if res.fun < 1e-6:
                return float(res.x)
    raise ValueError(f"no closed loop found for detuning/omega_max = {detuning / omega_max:.3g}")


def exchange_hamiltonian(v_mm: float, space: HilbertSpace, a: str = "m1", b: str = "m2") -> np.ndarray:
    """Dipolar spin exchange between two molecules on their |1> <-> |2> transition.

    The |12> <-> |21> matrix element is ``-V_MM / 2`` so that |Psi+> and
    |Psi-> are split by V_MM.
    """
    up = space.level_operator(a, "2", "1") @ space.level_operator(b, "1", "2")
    return -0.5 * v_mm * (up + up.conj().T)


def simulate_iswap(spec: MolMolGateSpec, control: StepControl | None = None) -> GateReport:
    """Free exchange evolution of two molecules for ``spec.hold_time``.

    The report's subspace map is over {|11>, |12>, |21>, |22>}; ``|12>`` is
    taken to ``cos(V t/2)|12> + i sin(V t/2)|21>``.
    """
    if spec.protocol != "iswap":
        raise ValueError("simulate_iswap needs protocol='iswap'")
    sp = EXCHANGE_SPACE
    h = TimeDependentHamiltonian(sp, [(OperatorTerm(exchange_hamiltonian(spec.v_mm, sp), "exchange"), None)],
                                 spec.hold_time)
    control = control or StepControl(rel_tol=1e-12)
    labels = (("1", "1"), ("1", "2"), ("2", "1"), ("2", "2"))
    results = evolve_many([sp.ket(*lab) for lab in labels], h, control)
    return _subspace_report(sp, labels, results, ["".join(lab) for lab in labels], None,
                            DEFAULT_LEAKAGE_THRESHOLD, spec.hold_time)


def iswap_output(spec: MolMolGateSpec, control: StepControl | None = None) -> StateVector:
    """State reached from |12> after ``spec.hold_time`` of exchange."""
    sp = EXCHANGE_SPACE
    h = TimeDependentHamiltonian(sp, [(OperatorTerm(exchange_hamiltonian(spec.v_mm, sp), "exchange"), None)],
                                 spec.hold_time)
    return evolve(sp.ket("1", "2"), h, control or StepControl(rel_tol=1e-12)).final_state


def build_pair_drive_hamiltonian(spec: MolMolGateSpec) -> TimeDependentHamiltonian:
    """Two molecules under exchange plus a common |1> <-> |2> drive.

    In the drive frame each |2> excitation carries minus the |Psi+>
    interaction shift (plus the optional light-shift offset), so
    |11> <-> |Psi+> is resonant and every other pair transition is detuned.
    """
    sp = MOLMOL_SPACE
    shift_psi_plus = -0.5 * spec.v_mm - spec.carrier_offset
    n2 = sp.level_operator("m1", "2", "2") + sp.level_operator("m2", "2", "2")
    drive = sum(0.5 * (sp.level_operator(m, "1", "2") + sp.level_operator(m, "2", "1"))
                for m in ("m1", "m2"))
    terms = [
        (OperatorTerm(exchange_hamiltonian(spec.v_mm, sp), "exchange"), None),
        (OperatorTerm(-shift_psi_plus * n2, "carrier_offset"), None),
        (OperatorTerm(spec.drive_rabi * drive, "drive"), None),
    ]
    return TimeDependentHamiltonian(sp, terms, spec.cycle_time)


def simulate_pair_drive_cz(spec: MolMolGateSpec, control: StepControl | None = None) -> GateReport:
    """One full pair-state Rabi cycle; |11> should come back as -|11>."""
    if spec.protocol != "pair_drive":
        raise ValueError("simulate_pair_drive_cz needs protocol='pair_drive'")
    h = build_pair_drive_hamiltonian(spec)
    control = control or StepControl(rel_tol=1e-11)
    results = evolve_many([MOLMOL_SPACE.ket(*lab) for lab in MOLMOL_BASIS], h, control)
    return _subspace_report(MOLMOL_SPACE, MOLMOL_BASIS, results,
                            ["".join(lab) for lab in MOLMOL_BASIS], math.pi,
                            DEFAULT_LEAKAGE_THRESHOLD, h.duration)
