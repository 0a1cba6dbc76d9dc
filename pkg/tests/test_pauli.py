import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atommol.qudit import statevector as sv
from atommol.qudit.pauli import (
    Pauli,
    check_d,
    commutator_phase,
    commutes,
    conjugate_by_pauli,
    inverse,
    mul,
    power,
    rank_mod,
    solve_mod,
)


def dense(p: Pauli) -> np.ndarray:
    """Matrix of a Pauli built column by column with the dense simulator."""
    n, d = p.n, p.d
    cols = []
    for idx in itertools.product(range(d), repeat=n):
        e = np.zeros((d,) * n, dtype=complex)
        e[idx] = 1.0
        cols.append(sv.apply_pauli(e, p).reshape(-1))
    return np.stack(cols, axis=1)


@st.composite
def paulis(draw, d=None, n=None):
    d = d or draw(st.sampled_from([2, 3]))
    n = n or draw(st.integers(1, 3))
    x = draw(st.lists(st.integers(0, d - 1), min_size=n, max_size=n))
    z = draw(st.lists(st.integers(0, d - 1), min_size=n, max_size=n))
    ph = draw(st.integers(0, 2 * d - 1))
    return Pauli(d, x, z, ph)


@st.composite
def pauli_pairs(draw):
    d = draw(st.sampled_from([2, 3]))
    n = draw(st.integers(1, 3))
    return draw(paulis(d, n)), draw(paulis(d, n))


def test_single_site_conventions():
    for d in (2, 3):
        w = np.exp(2j * np.pi / d)
        X = dense(Pauli(d, [1], [0]))
        Z = dense(Pauli(d, [0], [1]))
        assert np.allclose(X @ np.eye(d)[:, 0], np.eye(d)[:, 1])
        assert np.allclose(np.diag(Z), w ** np.arange(d))
        assert np.allclose(Z @ X, w * X @ Z)


def test_y_for_qubits():
    y = dense(Pauli(2, [1], [1], 1))
    assert np.allclose(y, [[0, -1j], [1j, 0]])


def test_unsupported_dimension():
    with pytest.raises(ValueError):
        check_d(5)
    with pytest.raises(ValueError):
        Pauli(2, [1, 0], [0])


@settings(max_examples=80, deadline=None)
@given(pauli_pairs())
def test_product_matches_matrix_product(pq):
    p, q = pq
    assert np.allclose(dense(mul(p, q)), dense(p) @ dense(q), atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(pauli_pairs())
def test_commutator_phase_matches_matrices(pq):
    p, q = pq
    w = np.exp(2j * np.pi * commutator_phase(p, q) / p.d)
    assert np.allclose(dense(p) @ dense(q), w * dense(q) @ dense(p), atol=1e-12)
    assert commutes(p, q) == (commutator_phase(p, q) == 0)
    conj = dense(p) @ dense(q) @ dense(p).conj().T
    assert np.allclose(dense(conjugate_by_pauli(p, q)), conj, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(paulis(), st.integers(-4, 7))
def test_power_and_inverse(p, k):
    m = np.linalg.matrix_power(dense(p), k % (2 * p.d))
    assert np.allclose(dense(power(p, k)), m, atol=1e-12)
    assert np.allclose(dense(inverse(p)) @ dense(p), np.eye(p.d ** p.n), atol=1e-12)


def test_equality_and_hash():
    a = Pauli(3, [1, 2], [0, 1], 2)
    b = Pauli(3, [4, -1], [3, 1], 8)
    assert a == b and hash(a) == hash(b)
    assert a != a.scaled(1)


@settings(max_examples=60, deadline=None)
@given(p=st.sampled_from([2, 3]), seed=st.integers(0, 2**32 - 1),
       rows=st.integers(1, 4), cols=st.integers(1, 4))
def test_solve_mod_against_brute_force(p, seed, rows, cols):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, p, size=(rows, cols))
    b = rng.integers(0, p, size=rows)
    sol = solve_mod(a, b, p)
    brute = [np.array(x) for x in itertools.product(range(p), repeat=cols)
             if np.all((a @ np.array(x) - b) % p == 0)]
    if brute:
        assert sol is not None and np.all((a @ sol - b) % p == 0)
    else:
        assert sol is None
    span = {tuple((a.T @ np.array(c)) % p) for c in itertools.product(range(p), repeat=rows)}
    assert p ** rank_mod(a, p) == len(span)
