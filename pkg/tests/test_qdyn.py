import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atommol.qdyn import (
    DimensionError,
    HilbertSpace,
    IntegrationError,
    OperatorTerm,
    StateVector,
    StepControl,
    TimeDependentHamiltonian,
    average_gate_fidelity,
    constant,
    evolve,
    evolve_many,
    extract_unitary,
    sine_pulse,
)

QUBIT = HilbertSpace.from_levels(q=("g", "e"))
SX = np.array([[0, 1], [1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)


def rabi_hamiltonian(omega, duration):
    return TimeDependentHamiltonian(QUBIT, [(OperatorTerm(0.5 * omega * SX, "drive"), None)], duration)


def random_state(rng, space):
    v = rng.normal(size=space.total_dim) + 1j * rng.normal(size=space.total_dim)
    return StateVector(space, v / np.linalg.norm(v))


def test_space_bookkeeping():
    sp = HilbertSpace.from_levels(mol=("0", "1", "2"), atom=("a", "b", "r", "R"))
    assert sp.total_dim == 12
    assert sp.dims == (3, 4)
    assert sp.index("1", "r") == 1 * 4 + 2
    with pytest.raises(ValueError):
        HilbertSpace.from_dims([("x", 2), ("x", 3)])
    with pytest.raises(KeyError):
        sp.index("3", "a")


def test_embed_matches_kron():
    sp = HilbertSpace.from_dims([("a", 2), ("b", 3)])
    op = np.arange(9).reshape(3, 3).astype(complex)
    assert np.array_equal(sp.embed(op, "b"), np.kron(np.eye(2), op))


def test_zero_hamiltonian_is_identity():
    rng = np.random.default_rng(1)
    psi = random_state(rng, QUBIT)
    h = TimeDependentHamiltonian(QUBIT, [], 3.0)
    res = evolve(psi, h)
    assert np.array_equal(res.final_state.amplitudes, psi.amplitudes)
    assert res.norm_loss == 0.0
    u = extract_unitary(h, [QUBIT.ket("g"), QUBIT.ket("e")])
    assert np.array_equal(u, np.eye(2))


def test_rabi_pi_pulse():
    omega = 2.0 * math.pi * 1.3e6
    res = evolve(QUBIT.ket("g"), rabi_hamiltonian(omega, math.pi / omega), StepControl(rel_tol=1e-12))
    assert abs(res.final_state.population("e") - 1.0) < 1e-9


def test_pi_rotation_unitary_is_minus_i_swap():
    u = extract_unitary(rabi_hamiltonian(1.0, math.pi), [QUBIT.ket("g"), QUBIT.ket("e")],
                        StepControl(rel_tol=1e-12))
    assert np.allclose(u, -1j * SX, atol=1e-10)


def test_sine_pulse_matches_analytic_area():
    # a resonant shaped pulse rotates by its area: cos(A/2) amplitude stays in |g>
    T = 2.0
    area = 1.3
    peak = area * math.pi / (2.0 * T)
    h = TimeDependentHamiltonian(QUBIT, [(OperatorTerm(0.5 * SX, "drive"), sine_pulse(peak, T))], T)
    res = evolve(QUBIT.ket("g"), h, StepControl(rel_tol=1e-12))
    assert abs(res.final_state.amplitudes[0] - math.cos(area / 2)) < 1e-10


def test_decay_norm_loss_matches_exponential():
    gamma, T = 0.3, 2.0
    term = OperatorTerm.decay_on(QUBIT.projector("e"), gamma)
    h = TimeDependentHamiltonian(QUBIT, [(term, None)], T)
    res = evolve(QUBIT.ket("e"), h, StepControl(rel_tol=1e-12))
    assert abs(res.norm_loss - (1.0 - math.exp(-gamma * T))) < 1e-10
    assert abs(res.norm_loss - (1.0 - res.final_state.norm() ** 2)) < 1e-14


def test_term_validation():
    with pytest.raises(ValueError):
        OperatorTerm(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(ValueError):
        OperatorTerm(np.eye(2), decay=True)
    with pytest.raises(DimensionError):
        TimeDependentHamiltonian(QUBIT, [(OperatorTerm(np.eye(3)), None)], 1.0)


def test_dimension_mismatch_on_evolve():
    other = HilbertSpace.from_dims([("x", 3)])
    with pytest.raises(DimensionError):
        evolve(other.ket("0"), rabi_hamiltonian(1.0, 1.0))


def test_non_finite_amplitudes_raise():
    h = TimeDependentHamiltonian(QUBIT, [(OperatorTerm(0.5 * SX), lambda t: float("nan"))], 1.0)
    with pytest.raises(IntegrationError):
        evolve(QUBIT.ket("g"), h, StepControl(dt_max=0.1, check_convergence=False))


def test_unconverged_run_raises():
    with pytest.raises(IntegrationError):
        evolve(QUBIT.ket("g"), rabi_hamiltonian(1.0, 50.0),
               StepControl(dt_max=5.0, rel_tol=1e-15, max_halvings=1))


def test_evolve_many_matches_evolve():
    rng = np.random.default_rng(5)
    h = rabi_hamiltonian(1.7, 2.3)
    states = [random_state(rng, QUBIT) for _ in range(3)]
    ctrl = StepControl(rel_tol=1e-12)
    batch = evolve_many(states, h, ctrl)
    for s, b in zip(states, batch):
        single = evolve(s, h, ctrl)
        assert np.allclose(single.final_state.amplitudes, b.final_state.amplitudes, atol=1e-13)


def test_trajectory_samples_cover_duration():
    res = evolve(QUBIT.ket("g"), rabi_hamiltonian(1.0, 1.0), StepControl(dt_max=0.1), sample_every=2)
    times = [t for t, _ in res.trajectory_samples]
    assert times[0] == 0.0 and math.isclose(times[-1], 1.0)


def test_rk4_order_on_log_log_fit():
    h = rabi_hamiltonian(1.0, 3.0)
    exact = np.array([math.cos(1.5), -1j * math.sin(1.5)])
    errs, dts = [], [0.2, 0.1, 0.05, 0.025]
    for dt in dts:
        res = evolve(QUBIT.ket("g"), h, StepControl(dt_max=dt, check_convergence=False))
        errs.append(np.max(np.abs(res.final_state.amplitudes - exact)))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 3.8 < slope < 4.2


def test_gate_fidelity_examples():
    assert average_gate_fidelity(CZ, CZ) == pytest.approx(1.0, abs=1e-15)
    assert average_gate_fidelity(np.exp(0.7j) * CZ, CZ) == pytest.approx(1.0, abs=1e-15)
    # (|Tr(CZ^dag I)|^2 + 4) / 20 with Tr = 2
    assert average_gate_fidelity(np.eye(4), CZ) == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(DimensionError):
        average_gate_fidelity(np.eye(2), CZ)


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([2, 3, 4]))
def test_fidelity_bounds_and_perturbation(seed, d):
    rng = np.random.default_rng(seed)
    u = random_unitary(rng, d)
    v = random_unitary(rng, d)
    f = average_gate_fidelity(u, v)
    assert -1e-12 <= f <= 1 + 1e-12
    # composing with a small random rotation lowers the fidelity on average
    drops = []
    for _ in range(8):
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        herm = 0.05 * (a + a.conj().T)
        w, vec = np.linalg.eigh(herm)
        kick = vec @ np.diag(np.exp(1j * w)) @ vec.conj().T
        drops.append(1.0 - average_gate_fidelity(kick @ u, u))
    assert np.mean(drops) > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       alpha=st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
       beta=st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False))
def test_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    sp = HilbertSpace.from_dims([("a", 3)])
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h = TimeDependentHamiltonian(sp, [(OperatorTerm(m + m.conj().T), constant(0.5))], 1.0)
    psi, phi = random_state(rng, sp), random_state(rng, sp)
    ctrl = StepControl(dt_max=0.01, check_convergence=False)
    combo = evolve(alpha * psi + beta * phi, h, ctrl).final_state.amplitudes
    parts = (alpha * evolve(psi, h, ctrl).final_state.amplitudes
             + beta * evolve(phi, h, ctrl).final_state.amplitudes)
    assert np.allclose(combo, parts, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_norm_conserved_and_non_increasing(seed):
    rng = np.random.default_rng(seed)
    sp = HilbertSpace.from_dims([("a", 4)])
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    herm = OperatorTerm(m + m.conj().T)
    psi = random_state(rng, sp)
    ctrl = StepControl(rel_tol=1e-10)
    res = evolve(psi, TimeDependentHamiltonian(sp, [(herm, sine_pulse(1.0, 2.0))], 2.0), ctrl)
    assert abs(res.final_state.norm() - 1.0) < 10 * ctrl.rel_tol
    proj = np.diag([0, 0, 1, 1]).astype(complex)
    lossy = TimeDependentHamiltonian(sp, [(herm, None), (OperatorTerm.decay_on(proj, 0.4), None)], 2.0)
    res = evolve(psi, lossy, StepControl(rel_tol=1e-10, check_convergence=False), sample_every=10)
    norms = [s.norm() for _, s in res.trajectory_samples]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
