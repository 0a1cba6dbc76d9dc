import math
from functools import reduce

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from atommol import criticality as cr
from atommol.criticality import SpinChainSpec, WeakMeasurementSpec
from atommol.qdyn import StateVector


def dense_ground(spec):
    return np.linalg.eigvalsh(cr.build_hamiltonian(spec).toarray())


def product_state(bits, d=2):
    return reduce(np.kron, [np.eye(d)[b] for b in bits]).astype(complex)


# --- Hamiltonians ------------------------------------------------------------------

def test_xxz_two_sites():
    w = dense_ground(SpinChainSpec("xxz", 2, anisotropy=1.0))
    assert np.allclose(w, [-1, -1, -1, 3], atol=1e-14)


def test_potts_single_site():
    w = dense_ground(SpinChainSpec("potts3", 1, J=0.7, h=1.0))
    assert np.allclose(w, [-2, 1, 1], atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(model=st.sampled_from(["xxz", "potts3"]), n=st.integers(1, 5),
       a=st.floats(-2, 2), J=st.floats(-2, 2), h=st.floats(-2, 2),
       boundary=st.sampled_from(["open", "periodic"]))
def test_hamiltonian_hermitian(model, n, a, J, h, boundary):
    H = cr.build_hamiltonian(SpinChainSpec(model, n, anisotropy=a, J=J, h=h, boundary=boundary))
    assert H.shape == ((2 if model == "xxz" else 3) ** n,) * 2
    diff = (H - H.getH()).toarray()
    assert np.max(np.abs(diff)) <= 1e-12


def test_size_limits():
    with pytest.raises(ValueError):
        SpinChainSpec("xxz", 15)
    with pytest.raises(ValueError):
        SpinChainSpec("potts3", 10)
    with pytest.raises(ValueError):
        SpinChainSpec("ising", 4)
    with pytest.raises(ValueError):
        SpinChainSpec("xxz", 4, boundary="twisted")


def test_potts_symmetries():
    spec = SpinChainSpec("potts3", 5, J=1.0, h=0.6, boundary="periodic")
    H = cr.build_hamiltonian(spec).toarray()
    prod_u = reduce(np.kron, [cr.POTTS_U] * 5)
    prod_v = reduce(np.kron, [cr.POTTS_V] * 5)
    e0 = np.linalg.eigvalsh(H)[0]
    e_rot = np.linalg.eigvalsh(prod_u @ H @ prod_u.conj().T)[0]
    assert abs(e0 - e_rot) < 1e-10
    # the field term is charge-neutral under prod V, the bond term under prod V too
    assert np.max(np.abs(prod_v @ H - H @ prod_v)) < 1e-12


# --- ground states ---------------------------------------------------------------------

def test_xxz_pair_ground_state_is_degenerate():
    res = cr.solve_chain(SpinChainSpec("xxz", 2))
    assert res.energy == pytest.approx(-1.0, abs=1e-12)
    assert res.gap <= res.degeneracy_tolerance and res.degenerate


def test_potts_ground_energy_matches_dense():
    spec = SpinChainSpec("potts3", 4, J=1.0, h=1.0, boundary="periodic")
    res = cr.solve_chain(spec)
    assert abs(res.energy - dense_ground(spec)[0]) < 1e-10


def test_lanczos_path_matches_dense():
    spec = SpinChainSpec("potts3", 6, J=1.0, h=1.0, boundary="periodic")
    assert spec.dim > cr.DENSE_CUTOFF
    res = cr.solve_chain(spec, k_states=3)
    w = dense_ground(spec)
    assert np.allclose(res.energies, w[:3], atol=1e-10)
    H = cr.build_hamiltonian(spec)
    psi = res.state.amplitudes
    assert np.linalg.norm(H @ psi - res.energy * psi) < cr.RESIDUAL_TOL * np.max(np.abs(w))


@pytest.mark.parametrize("dim", [16, 600])
def test_identity_hamiltonian(dim):
    res = cr.ground_state(sp.identity(dim, format="csr", dtype=complex))
    assert res.energy == pytest.approx(1.0, abs=1e-12)
    assert res.gap == pytest.approx(0.0, abs=1e-12)


def test_ground_state_validation():
    with pytest.raises(ValueError):
        cr.ground_state(sp.identity(8, format="csr"), k_states=1)
    with pytest.raises(ValueError):
        cr.ground_state(np.array([[0, 1], [0, 0]], dtype=complex))


def test_lanczos_is_reproducible():
    spec = SpinChainSpec("xxz", 10, anisotropy=-1.0, boundary="periodic")
    a = cr.solve_chain(spec).state.amplitudes
    b = cr.solve_chain(spec).state.amplitudes
    assert np.array_equal(a, b)


# --- Potts criticality ----------------------------------------------------------------------

def test_potts_gap_decreases_at_self_dual_point():
    gaps = [row.gap for row in cr.potts_gap_scan([4, 5, 6, 7, 8], [1.0])]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_potts_ordered_phase_quasi_degenerate():
    ordered, disordered = cr.potts_gap_scan([6], [10.0, 0.1])
    assert ordered.gap < 0.05 * 1.0
    assert ordered.gap < disordered.gap
    res = cr.solve_chain(SpinChainSpec("potts3", 6, J=10.0, h=1.0, boundary="periodic"), k_states=4)
    # three nearly degenerate states, then a real gap
    assert res.energies[2] - res.energies[0] < 0.05 and res.energies[3] - res.energies[2] > 1.0


def test_potts_duality_energy_per_site():
    a = cr.solve_chain(SpinChainSpec("potts3", 6, J=1.0, h=2.0, boundary="periodic")).energy / 6
    b = cr.solve_chain(SpinChainSpec("potts3", 6, J=2.0, h=1.0, boundary="periodic")).energy / 6
    assert abs(a - b) < 0.05 * abs(a)


# --- weak measurement ------------------------------------------------------------------------

def test_kraus_closed_form_qubit():
    theta = 0.7
    tab = cr.kraus_table(WeakMeasurementSpec(theta, [0]), 2)
    e = np.exp(1j * theta)
    expected = np.array([[1, (1 + e) / 2], [0, (1 - e) / 2]])
    assert np.allclose(tab.values, expected, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 3), a_dim=st.sampled_from([2, 3]),
       local=st.sampled_from([2, 3]), theta=st.floats(0, math.pi), entangled=st.booleans(),
       comp=st.booleans())
def test_kraus_completeness(seed, k, a_dim, local, theta, entangled, comp):
    rng = np.random.default_rng(seed)
    if entangled:
        v = rng.normal(size=a_dim ** k) + 1j * rng.normal(size=a_dim ** k)
        prep = v / np.linalg.norm(v)
    else:
        prep = []
        for _ in range(k):
            v = rng.normal(size=a_dim) + 1j * rng.normal(size=a_dim)
            prep.append(v / np.linalg.norm(v))
    spec = WeakMeasurementSpec(theta, list(range(k)), prep, system_weights=rng.uniform(0, 1, local),
                               compensate_local_phase=comp)
    tab = cr.kraus_table(spec, local)
    assert tab.completeness_error() < 1e-12


def test_theta_zero_is_identity():
    rng = np.random.default_rng(2)
    v = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi = v / np.linalg.norm(v)
    stats = cr.weak_measure(psi, WeakMeasurementSpec(0.0, [1, 3], seed=0))
    assert stats.outcome_probabilities[(0, 0)] == pytest.approx(1.0, abs=1e-15)
    assert stats.selected_outcome == (0, 0)
    assert np.allclose(stats.selected_state.amplitudes, psi, atol=1e-15)


def test_theta_pi_is_projective():
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    for m, target in ((0, [1, 0]), (1, [0, 1])):
        stats = cr.weak_measure(plus, WeakMeasurementSpec(math.pi, [0], outcome_policy=[m]))
        assert stats.outcome_probabilities == {(0,): pytest.approx(0.5, abs=1e-15),
                                               (1,): pytest.approx(0.5, abs=1e-15)}
        assert abs(np.vdot(target, stats.selected_state.amplitudes)) == pytest.approx(1.0, abs=1e-15)


def test_measure_zero_outcome():
    zero = np.array([1, 0], dtype=complex)
    with pytest.raises(cr.MeasureZeroOutcome):
        cr.weak_measure(zero, WeakMeasurementSpec(math.pi, [0], outcome_policy=[1]))


def test_spec_validation():
    with pytest.raises(ValueError):
        WeakMeasurementSpec(4.0, [0])
    with pytest.raises(ValueError):
        WeakMeasurementSpec(0.1, [0], [1.0, 1.0])
    with pytest.raises(ValueError):
        WeakMeasurementSpec(0.1, [0, 0])
    with pytest.raises(ValueError):
        WeakMeasurementSpec(0.1, [0, 1], outcome_policy=[0])


@pytest.fixture(scope="module")
def xxz8():
    return cr.solve_chain(SpinChainSpec("xxz", 8, anisotropy=-1.0, boundary="periodic"))


def test_biased_ancilla_prep(xxz8):
    eta = 0.2
    stats = cr.weak_measure(xxz8.state, WeakMeasurementSpec(0.1, [3], [math.cos(eta), math.sin(eta)]))
    p0 = stats.outcome_probabilities[(0,)]
    assert abs(p0 - 0.5) > 0.1 and max(stats.outcome_probabilities.values()) > 0.5
    # to leading order in theta the X readout sees the preparation: p0 = (1 + sin 2 eta) / 2
    assert p0 == pytest.approx((1 + math.sin(2 * eta)) / 2, abs=5e-3)
    base = cr.weak_measure(xxz8.state, WeakMeasurementSpec(0.1, [3], [math.cos(math.pi / 4),
                                                                      math.sin(math.pi / 4)]))
    assert base.outcome_probabilities[(0,)] > p0 > 0.5


def test_probabilities_sum_to_one(xxz8):
    stats = cr.weak_measure(xxz8.state, WeakMeasurementSpec(0.4, [0, 2, 5], seed=9))
    assert sum(stats.outcome_probabilities.values()) == pytest.approx(1.0, abs=1e-10)
    assert stats.selected_state.norm() == pytest.approx(1.0, abs=1e-12)
    again = cr.weak_measure(xxz8.state, WeakMeasurementSpec(0.4, [0, 2, 5], seed=9))
    assert again.selected_outcome == stats.selected_outcome


def test_site_order_does_not_matter(xxz8):
    a = cr.weak_measure(xxz8.state, WeakMeasurementSpec(0.9, [1, 4], outcome_policy=[1, 0]))
    b = cr.weak_measure(xxz8.state, WeakMeasurementSpec(0.9, [4, 1], outcome_policy=[0, 1]))
    assert a.success_probability == pytest.approx(b.success_probability, abs=1e-14)
    assert np.allclose(a.selected_state.amplitudes, b.selected_state.amplitudes, atol=1e-14)


def test_total_z_conserved(xxz8):
    before = cr.total_z(xxz8.state)
    stats = cr.weak_measure(xxz8.state, WeakMeasurementSpec(0.5, [2, 3], outcome_policy=[1, 0]))
    assert abs(cr.total_z(stats.selected_state) - before) < 1e-10


def test_channel_scaling_exponents(xxz8):
    thetas = [0.01, 0.02, 0.04, 0.08]
    comp = [cr.channel_perturbation(xxz8.state, WeakMeasurementSpec(t, [3], compensate_local_phase=True))
            for t in thetas]
    raw = [cr.channel_perturbation(xxz8.state, WeakMeasurementSpec(t, [3])) for t in thetas]
    assert cr.fit_power_law(thetas, comp) == pytest.approx(2.0, abs=0.2)
    # without removing the mean local phase the channel has a first-order unitary part
    assert cr.fit_power_law(thetas, raw) == pytest.approx(1.0, abs=0.05)


def test_qutrit_weak_measurement():
    res = cr.solve_chain(SpinChainSpec("potts3", 4, boundary="periodic"))
    prep = np.ones(3) / math.sqrt(3)
    stats = cr.weak_measure(res.state, WeakMeasurementSpec(0.3, [0], prep, system_weights=[0, 1, 2]),
                            local_dim=3)
    assert len(stats.outcome_probabilities) == 3
    assert sum(stats.outcome_probabilities.values()) == pytest.approx(1.0, abs=1e-12)


# --- correlators ------------------------------------------------------------------------------

def test_correlators_simple_states():
    zero = product_state([0, 0, 0])
    assert cr.correlators(zero, "ZZ", [(0, 1), (0, 2)]) == [1.0, 1.0]
    bell = (product_state([0, 0]) + product_state([1, 1])) / math.sqrt(2)
    assert cr.correlators(bell, "ZZ", [(0, 1)])[0] == pytest.approx(1.0)
    assert cr.correlators(bell, "XX", [(0, 1)])[0] == pytest.approx(1.0)
    assert cr.correlators(bell, "ZZ", [(0, 1)], connected=True)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cr.correlators(bell, "ZZ", [(0, 0)])
    with pytest.raises(ValueError):
        cr.correlators(product_state([0, 0], 3), "ZZ", [(0, 1)])


def test_xxz_correlations_decay_and_translate():
    res = cr.solve_chain(SpinChainSpec("xxz", 12, anisotropy=-1.0, boundary="periodic"))
    c = cr.correlators(res.state, "ZZ", [(0, r) for r in range(1, 7)])
    mags = [abs(x) for x in c]
    # on a finite ring the odd and even distances carry different amplitudes; each decays
    for sector in (mags[0::2], mags[1::2]):
        assert all(b < a for a, b in zip(sector, sector[1:]))
    assert all(x < 0 for x in c[0::2]) and all(x > 0 for x in c[1::2])
    a, b = cr.correlators(res.state, "ZZ", [(0, 2), (1, 3)])
    assert abs(a - b) < 1e-9


def test_potts_order_correlator_is_complex():
    res = cr.solve_chain(SpinChainSpec("potts3", 5, J=2.0, h=1.0, boundary="periodic"))
    vals = cr.correlators(res.state, "potts_order", [(0, 1), (0, 2)])
    assert all(isinstance(v, complex) for v in vals)
    assert abs(vals[0]) > abs(vals[1]) - 1e-12
    assert isinstance(res.state, StateVector)
