"""Dense qudit state vectors used to cross-check the tableau simulator.

States are stored as tensors of shape ``(d,) * n``; nothing here touches
the tableau code.
"""

from __future__ import annotations

import numpy as np

from .pauli import Pauli


def plus_state(d: int, n: int) -> np.ndarray:
    return np.full((d,) * n, d ** (-n / 2), dtype=complex)


def ghz_state(d: int, n: int) -> np.ndarray:
    psi = np.zeros((d,) * n, dtype=complex)
    for j in range(d):
        psi[(j,) * n] = 1.0 / np.sqrt(d)
    return psi


def single_site_matrix(name: str, d: int) -> np.ndarray:
    omega = np.exp(2j * np.pi / d)
    j = np.arange(d)
    if name == "X":
        return np.roll(np.eye(d), 1, axis=0)
    if name == "Z":
        return np.diag(omega ** j)
    if name == "F":
        return omega ** np.outer(j, j) / np.sqrt(d)
    if name == "S":
        return np.diag([1, 1j]) if d == 2 else np.diag([1, 1, omega])
    raise ValueError(name)


def apply_local(psi: np.ndarray, op: np.ndarray, site: int) -> np.ndarray:
    out = np.tensordot(op, psi, axes=([1], [site]))
    return np.moveaxis(out, 0, site)


def apply_czd(psi: np.ndarray, d: int, i: int, j: int, power: int = 1) -> np.ndarray:
    a = np.arange(d)
    phases = np.exp(2j * np.pi * power * np.outer(a, a) / d)
    shape = [1] * psi.ndim
    shape[i], shape[j] = d, d
    if i < j:
        ph = phases.reshape(shape)
    else:
        ph = phases.T.reshape(shape)
    return psi * ph


def apply_pauli(psi: np.ndarray, p: Pauli) -> np.ndarray:
    """``tau^phase prod_k X_k^x_k Z_k^z_k`` applied to ``psi`` (Z before X on each site)."""
    d = p.d
    out = psi
    omega = np.exp(2j * np.pi / d)
    for k in range(p.n):
        if p.z[k]:
            shape = [1] * psi.ndim
            shape[k] = d
            out = out * (omega ** (p.z[k] * np.arange(d))).reshape(shape)
        if p.x[k]:
            out = np.roll(out, int(p.x[k]), axis=k)
    return out * np.exp(1j * np.pi * p.phase / d)


def expectation(psi: np.ndarray, p: Pauli) -> complex:
    return complex(np.vdot(psi, apply_pauli(psi, p)) / np.vdot(psi, psi))


def x_eigenstate(d: int, m: int) -> np.ndarray:
    """Eigenvector of X with eigenvalue ``omega^m``."""
    j = np.arange(d)
    return np.exp(-2j * np.pi * m * j / d) / np.sqrt(d)


def project_x(psi: np.ndarray, site: int, outcome: int) -> np.ndarray:
    """Contract ``site`` with ``<x_m|``; the site axis is removed and the result is unnormalised."""
    bra = x_eigenstate(psi.shape[site], outcome).conj()
    return np.tensordot(bra, psi, axes=([0], [site]))


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def replay(d: int, n_sites: int, gates, measurements, corrections, keep) -> np.ndarray:
    """Run a protocol transcript on a dense state and return the normalised kept-site state.

    ``gates`` are ``(name, i, j, power)`` CZ entries, ``measurements`` give
    ``(site, outcome)`` for X-basis projections, and ``corrections`` give
    ``(site, x_power, z_power)`` applied after the projections.
    """
    psi = plus_state(d, n_sites)
    for name, i, j, p in gates:
        if name != "CZ":
            raise ValueError(f"replay supports CZ gates only, got {name!r}")
        psi = apply_czd(psi, d, i, j, p)
    omega = np.exp(2j * np.pi / d)
    for site, x_power, z_power in corrections:
        if z_power:
            shape = [1] * psi.ndim
            shape[site] = d
            psi = psi * (omega ** (z_power * np.arange(d))).reshape(shape)
        if x_power:
            psi = np.roll(psi, int(x_power), axis=site)
    measured = sorted(measurements, key=lambda r: r[0], reverse=True)
    for site, outcome in measured:
        psi = project_x(psi, site, outcome)
    if sorted(keep) != [s for s in range(n_sites) if s not in {m[0] for m in measured}]:
        raise ValueError("kept sites must be exactly the unmeasured ones")
    norm = np.sqrt(np.vdot(psi, psi).real)
    if norm < 1e-12:
        raise ValueError("measurement record has zero probability")
    return psi / norm
