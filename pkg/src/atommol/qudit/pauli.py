"""Generalised Pauli operators over Z_d and linear algebra mod a prime.

A Pauli on ``n`` qudits is stored as exponent vectors ``x``, ``z`` and an
integer ``phase`` so that::

    P = tau^phase * prod_k X_k^x_k Z_k^z_k,    tau = exp(i pi / d)

with ``X|j> = |j+1>`` and ``Z|j> = omega^j |j>``, ``omega = tau^2``.  Within
one site ``Z X = omega X Z``.  Phases live in Z_{2d} so that d = 2 can carry
the factor ``i`` of ``Y = i X Z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_D = (2, 3)


def check_d(d: int) -> None:
    if d not in SUPPORTED_D:
        raise ValueError(f"qudit dimension must be one of {SUPPORTED_D}, got {d}")


@dataclass(frozen=True, eq=False)
class Pauli:
    d: int
    x: np.ndarray
    z: np.ndarray
    phase: int = 0

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.int64) % self.d
        z = np.asarray(self.z, dtype=np.int64) % self.d
        if x.shape != z.shape or x.ndim != 1:
            raise ValueError("x and z must be equal-length vectors")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phase", int(self.phase) % (2 * self.d))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @classmethod
    def identity(cls, d: int, n: int) -> "Pauli":
        return cls(d, np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64))

    @classmethod
    def from_powers(cls, d: int, n: int, xs: dict[int, int] | None = None,
                    zs: dict[int, int] | None = None, phase: int = 0) -> "Pauli":
        """Build e.g. ``X_0 Z_2^-1`` as ``from_powers(d, n, {0: 1}, {2: -1})``."""
        x = np.zeros(n, dtype=np.int64)
        z = np.zeros(n, dtype=np.int64)
        for k, v in (xs or {}).items():
            x[k] = v
        for k, v in (zs or {}).items():
            z[k] = v
        return cls(d, x, z, phase)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pauli):
            return NotImplemented
        return (self.d == other.d and self.phase == other.phase
                and np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z))

    def __hash__(self) -> int:
        return hash((self.d, self.phase, self.x.tobytes(), self.z.tobytes()))

    def __mul__(self, other: "Pauli") -> "Pauli":
        return mul(self, other)

    def __pow__(self, k: int) -> "Pauli":
        return power(self, k)

    def vector(self) -> np.ndarray:
        """Symplectic vector ``(x | z)``."""
        return np.concatenate([self.x, self.z])

    def with_phase(self, phase: int) -> "Pauli":
        return Pauli(self.d, self.x, self.z, phase)

    def scaled(self, omega_power: int) -> "Pauli":
        """``omega^k * P``."""
        return Pauli(self.d, self.x, self.z, self.phase + 2 * omega_power)

    def __repr__(self) -> str:
        parts = []
        for k in range(self.n):
            if self.x[k]:
                parts.append(f"X{k}" + (f"^{self.x[k]}" if self.x[k] != 1 else ""))
            if self.z[k]:
                parts.append(f"Z{k}" + (f"^{self.z[k]}" if self.z[k] != 1 else ""))
        body = " ".join(parts) or "I"
        return f"Pauli(d={self.d}, tau^{self.phase} {body})"


def mul(p: Pauli, q: Pauli) -> Pauli:
    """Operator product ``p q`` in normal order."""
    if p.d != q.d or p.n != q.n:
        raise ValueError("Pauli operands differ in d or n")
    extra = 2 * int(np.dot(p.z, q.x))
    return Pauli(p.d, p.x + q.x, p.z + q.z, p.phase + q.phase + extra)


def power(p: Pauli, k: int) -> Pauli:
    """``p^k``; every Pauli satisfies ``p^{2d} = I`` (odd tau phases have order 2d)."""
    k %= 2 * p.d
    out = Pauli.identity(p.d, p.n)
    for _ in range(k):
        out = mul(out, p)
    return out


def inverse(p: Pauli) -> Pauli:
    return power(p, -1)


def commutator_phase(p: Pauli, q: Pauli) -> int:
    """``k`` with ``p q = omega^k q p``."""
    return int(np.dot(p.z, q.x) - np.dot(p.x, q.z)) % p.d


def commutes(p: Pauli, q: Pauli) -> bool:
    return commutator_phase(p, q) == 0


def conjugate_by_pauli(c: Pauli, p: Pauli) -> Pauli:
    """``c p c^dagger``."""
    return p.scaled(commutator_phase(c, p))


# --- linear algebra over Z_p -------------------------------------------------

def _inv_mod(a: int, p: int) -> int:
    return pow(int(a) % p, -1, p)


def rref_mod(a: np.ndarray, p: int) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form mod prime ``p`` and the pivot columns."""
    m = np.array(a, dtype=np.int64) % p
    rows, cols = m.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(m[r:, c])[0]
        if nz.size == 0:
            continue
        k = r + nz[0]
        if k != r:
            m[[r, k]] = m[[k, r]]
        m[r] = (m[r] * _inv_mod(m[r, c], p)) % p
        others = np.nonzero(m[:, c])[0]
        for j in others:
            if j != r:
                m[j] = (m[j] - m[j, c] * m[r]) % p
        pivots.append(c)
        r += 1
    return m, pivots


def rank_mod(a: np.ndarray, p: int) -> int:
    if np.size(a) == 0:
        return 0
    return len(rref_mod(a, p)[1])


def solve_mod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray | None:
    """One solution ``x`` of ``a x = b (mod p)`` with free variables set to 0, or None."""
    a = np.asarray(a, dtype=np.int64) % p
    b = np.asarray(b, dtype=np.int64).reshape(-1) % p
    rows, cols = a.shape
    aug, pivots = rref_mod(np.column_stack([a, b]), p)
    if cols in pivots:
        return None
    x = np.zeros(cols, dtype=np.int64)
    for r, c in enumerate(pivots):
        x[c] = aug[r, cols]
    return x
