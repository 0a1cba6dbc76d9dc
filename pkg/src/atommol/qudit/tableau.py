"""Stabilizer tableau over Z_d for pure states of ``n`` qudits.

The tableau keeps ``n`` generators (rows of ``x``, ``z`` exponents and a
phase in Z_{2d}).  Gates act by conjugation, measurements follow the usual
stabilizer update, and group questions (membership, equality, expectation
values) are answered by solving linear systems mod d.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .pauli import (
    Pauli,
    _inv_mod,
    check_d,
    commutator_phase,
    conjugate_by_pauli,
    mul,
    power,
    rank_mod,
    solve_mod,
)

DEBUG = os.environ.get("ATOMMOL_DEBUG", "") not in ("", "0")


class InvariantViolation(AssertionError):
    """Tableau generators stopped commuting or lost rank."""


@dataclass
class MeasurementRecord:
    site: int
    outcome: int
    was_random: bool
    basis: str = "X"

    def as_dict(self) -> dict:
        return {"site": self.site, "basis": self.basis, "outcome": self.outcome,
                "was_random": self.was_random}


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def single_site_images(name: str, d: int, power_: int = 1) -> tuple[Pauli, Pauli]:
    """Images of ``X`` and ``Z`` under conjugation by a named single-qudit Clifford.

    ``F`` is the Fourier gate ``F|j> = sum_k omega^{jk}|k>/sqrt(d)``, ``S`` the
    phase gate (``diag(1, i)`` for d = 2, ``diag(1, 1, omega)`` for d = 3),
    and ``X``/``Z`` are Pauli gates raised to ``power_``.
    """
    check_d(d)
    X = Pauli(d, [1], [0])
    Z = Pauli(d, [0], [1])
    if name == "F":
        ix, iz = Z, Pauli(d, [-1], [0])
    elif name == "S":
        ix, iz = Pauli(d, [1], [1], 1 if d == 2 else 0), Z
    elif name == "X":
        ix, iz = X, conjugate_by_pauli(power(X, power_), Z)
        return ix, iz
    elif name == "Z":
        ix, iz = conjugate_by_pauli(power(Z, power_), X), Z
        return ix, iz
    else:
        raise ValueError(f"unknown single-qudit Clifford {name!r}")
    # repeated application for powers of F and S
    ox, oz = X, Z
    for _ in range(power_ % (4 * d)):
        ox = _image_of(ox, ix, iz)
        oz = _image_of(oz, ix, iz)
    return ox, oz


def _image_of(p: Pauli, ix: Pauli, iz: Pauli) -> Pauli:
    """Image of a single-site Pauli ``tau^s X^a Z^b`` given the images of X and Z."""
    out = Pauli(p.d, [0], [0], p.phase)
    out = mul(out, power(ix, int(p.x[0])))
    return mul(out, power(iz, int(p.z[0])))


class QuditTableau:
    def __init__(self, d: int, x: np.ndarray, z: np.ndarray, phase: np.ndarray):
        check_d(d)
        self.d = d
        self.x = np.asarray(x, dtype=np.int64) % d
        self.z = np.asarray(z, dtype=np.int64) % d
        self.phase = np.asarray(phase, dtype=np.int64) % (2 * d)
        if self.x.shape != self.z.shape or self.x.shape[0] != self.phase.shape[0]:
            raise ValueError("inconsistent tableau shapes")

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_generators(cls, gens: list[Pauli]) -> "QuditTableau":
        d = gens[0].d
        return cls(d, np.stack([g.x for g in gens]), np.stack([g.z for g in gens]),
                   np.array([g.phase for g in gens]))

    def copy(self) -> "QuditTableau":
        return QuditTableau(self.d, self.x.copy(), self.z.copy(), self.phase.copy())

    def row(self, k: int) -> Pauli:
        return Pauli(self.d, self.x[k], self.z[k], int(self.phase[k]))

    def generators(self) -> list[Pauli]:
        return [self.row(k) for k in range(self.x.shape[0])]

    def _set_row(self, k: int, p: Pauli) -> None:
        self.x[k], self.z[k], self.phase[k] = p.x, p.z, p.phase

    def symplectic(self) -> np.ndarray:
        return np.concatenate([self.x, self.z], axis=1)

    # --- invariants ---------------------------------------------------------

    def commutation_matrix(self) -> np.ndarray:
        return (self.z @ self.x.T - self.x @ self.z.T) % self.d

    def rank(self) -> int:
        return rank_mod(self.symplectic(), self.d)

    def validate(self) -> None:
        if np.any(self.commutation_matrix()):
            raise InvariantViolation("stabilizer generators do not commute")
        if self.rank() != self.x.shape[0]:
            raise InvariantViolation("stabilizer generators are not independent")
        if self.d == 3 and np.any(self.phase % 2):
            raise InvariantViolation("odd tau power on a qutrit stabilizer")

    def _checked(self) -> "QuditTableau":
        if DEBUG:
            self.validate()
        return self

    # --- gates --------------------------------------------------------------

    def apply_czd(self, i: int, j: int, power_: int = 1) -> "QuditTableau":
        """Conjugate by ``CZ_d^power`` with ``CZ_d|a,b> = omega^{ab}|a,b>``.

        ``X_i -> X_i Z_j^p``, ``X_j -> X_j Z_i^p``, Z unchanged.
        """
        self._check_site(i)
        self._check_site(j)
        if i == j:
            raise ValueError("CZ needs two distinct sites")
        p = power_ % self.d
        xi, xj = self.x[:, i].copy(), self.x[:, j].copy()
        self.phase = (self.phase + 2 * p * xi * xj) % (2 * self.d)
        self.z[:, i] = (self.z[:, i] + p * xj) % self.d
        self.z[:, j] = (self.z[:, j] + p * xi) % self.d
        return self._checked()

    def apply_clifford(self, sites: list[int], images_x: list[Pauli], images_z: list[Pauli]) -> "QuditTableau":
        """Conjugate by the Clifford that maps ``X_s``, ``Z_s`` to the given local images."""
        for s in sites:
            self._check_site(s)
        k = len(sites)
        for r in range(self.x.shape[0]):
            out = Pauli(self.d, np.zeros(k), np.zeros(k), int(self.phase[r]))
            for loc, s in enumerate(sites):
                out = mul(out, power(images_x[loc], int(self.x[r, s])))
                out = mul(out, power(images_z[loc], int(self.z[r, s])))
            self.x[r, sites] = out.x
            self.z[r, sites] = out.z
            self.phase[r] = out.phase
        return self._checked()

    def apply_gate(self, name: str, site: int, power_: int = 1) -> "QuditTableau":
        ix, iz = single_site_images(name, self.d, power_)
        return self.apply_clifford([site], [ix], [iz])

    def apply_pauli(self, c: Pauli) -> "QuditTableau":
        """Conjugate every generator by the Pauli ``c``."""
        # c g c^dag = omega^{lambda(c, g)} g and lambda(c, g) = -lambda(g, c)
        lam = (self.z @ c.x - self.x @ c.z) % self.d
        self.phase = (self.phase - 2 * lam) % (2 * self.d)
        return self._checked()

    # --- group queries ------------------------------------------------------

    def find_element(self, target: Pauli) -> Pauli | None:
        """Group element with the same symplectic vector as ``target``, or None."""
        coeffs = solve_mod(self.symplectic().T, target.vector(), self.d)
        if coeffs is None:
            return None
        out = Pauli.identity(self.d, self.n)
        for k, a in enumerate(coeffs):
            if a:
                out = mul(out, power(self.row(k), int(a)))
        return out

    def phase_offset(self, target: Pauli) -> int | None:
        """``m`` such that ``target |psi> = omega^m |psi>``, or None if ``target`` is not stabilizing up to phase."""
        elem = self.find_element(target)
        if elem is None:
            return None
        diff = (target.phase - elem.phase) % (2 * self.d)
        if diff % 2:
            raise ValueError(f"{target} does not have omega-power eigenvalues on this state")
        return (diff // 2) % self.d

    def contains(self, target: Pauli) -> bool:
        return self.phase_offset(target) == 0

    def expectation(self, target: Pauli) -> complex:
        m = self.phase_offset(target)
        if m is None:
            return 0.0
        return complex(np.exp(2j * np.pi * m / self.d))

    def same_group(self, other: "QuditTableau") -> bool:
        if other.d != self.d or other.n != self.n:
            return False
        if other.rank() != self.rank():
            return False
        return all(self.contains(g) for g in other.generators())

    # --- measurement --------------------------------------------------------

    def measure_pauli(self, obs: Pauli, rng) -> tuple[int, bool]:
        """Measure an observable with eigenvalues ``omega^m``; returns ``(m, was_random)``."""
        rng = _rng(rng)
        lam = np.array([commutator_phase(self.row(k), obs) for k in range(self.x.shape[0])])
        bad = np.nonzero(lam)[0]
        if bad.size == 0:
            m = self.phase_offset(obs)
            if m is None:
                raise InvariantViolation("commuting observable outside a full-rank group")
            return m, False
        piv = int(bad[0])
        gp = self.row(piv)
        inv = _inv_mod(lam[piv], self.d)
        for j in bad[1:]:
            a = (-lam[j] * inv) % self.d
            self._set_row(int(j), mul(self.row(int(j)), power(gp, int(a))))
        m = int(rng.integers(self.d))
        self._set_row(piv, obs.scaled(-m))
        self._checked()
        return m, True

    def measure_x(self, site: int, rng) -> MeasurementRecord:
        self._check_site(site)
        obs = Pauli.from_powers(self.d, self.n, {site: 1})
        m, rand = self.measure_pauli(obs, rng)
        return MeasurementRecord(site=site, outcome=m, was_random=rand)

    # --- subsystems ---------------------------------------------------------

    def restrict(self, keep: list[int]) -> "QuditTableau":
        """Tableau of the kept sites; the state must be a product across the cut."""
        keep = list(keep)
        drop = [s for s in range(self.n) if s not in keep]
        drop_cols = drop + [self.n + s for s in drop]
        work = self.copy()
        used: set[int] = set()
        for c in drop_cols:
            sym = work.symplectic()
            cand = [k for k in range(sym.shape[0]) if k not in used and sym[k, c]]
            if not cand:
                continue
            k = cand[0]
            used.add(k)
            pk = work.row(k)
            inv = _inv_mod(sym[k, c], self.d)
            for j in range(sym.shape[0]):
                if j != k and sym[j, c]:
                    a = (-sym[j, c] * inv) % self.d
                    work._set_row(j, mul(work.row(j), power(pk, int(a))))
        sym = work.symplectic()
        local = [k for k in range(sym.shape[0]) if not np.any(sym[k, drop_cols])]
        if len(local) != len(keep):
            raise ValueError("state is entangled across the requested cut")
        sub = QuditTableau(self.d, work.x[np.ix_(local, keep)], work.z[np.ix_(local, keep)],
                           work.phase[local])
        return sub._checked()

    def _check_site(self, s: int) -> None:
        if not 0 <= s < self.n:
            raise IndexError(f"site {s} out of range for {self.n} qudits")

    def __repr__(self) -> str:
        rows = "\n  ".join(repr(g) for g in self.generators())
        return f"QuditTableau(d={self.d}, n={self.n},\n  {rows})"


def init_plus(d: int, n: int) -> QuditTableau:
    """All qudits in ``|+> = sum_j |j>/sqrt(d)``: generators ``X_1, ..., X_n``."""
    check_d(d)
    if n < 1:
        raise ValueError("need at least one qudit")
    return QuditTableau(d, np.eye(n, dtype=np.int64), np.zeros((n, n), dtype=np.int64),
                        np.zeros(n, dtype=np.int64))


def apply_czd(tab: QuditTableau, i: int, j: int, power_: int = 1) -> QuditTableau:
    return tab.apply_czd(i, j, power_)


def measure_x(tab: QuditTableau, site: int, rng_seed=None) -> tuple[QuditTableau, MeasurementRecord]:
    rec = tab.measure_x(site, rng_seed)
    return tab, rec
