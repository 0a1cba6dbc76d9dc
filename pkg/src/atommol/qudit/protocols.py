"""Measurement-based preparation of GHZ and Z_3 toric-code states.

GHZ chain
---------
Sites alternate molecule/atom, ``M A M A ... M``, with molecules on even
indices.  Every qudit starts in ``|+>``.  Each atom is entangled first with
its left molecule (``CZ_d``) and then with its right molecule
(``CZ_d^{d-1}``).  The opposite powers make the product of the molecular
cluster generators equal to ``X^{(x)N}``, so after the atoms are measured in
the X basis the molecules carry a GHZ state up to Pauli byproducts.

Toric code
----------
An ``L x L`` torus has qutrits on its ``2 L^2`` edges and one ancilla per
face.  Edge ``h(i, j)`` points from vertex ``(i, j)`` to ``(i, j+1)`` and
``v(i, j)`` from ``(i, j)`` to ``(i+1, j)``.  Face ``(i, j)`` is bounded by
``h(i, j)``, ``v(i, j+1)``, ``h(i+1, j)`` and ``v(i, j)``; the orientation
sign of an edge in a face is ``+1`` when the edge runs counter-clockwise
around it and ``-1`` otherwise.  Each face is entangled with its boundary by
``CZ_3^sign`` and then measured in X.  The stabilizers of the corrected
edge state contain::

    A_v = prod_e X_e^{eta(v, e)}     eta = +1 if v is the head of e, -1 if tail
    B_p = prod_e Z_e^{sign(p, e)}

Feedforward
-----------
Byproducts are not tabulated by hand.  After all measurements the
phases of the target generators are read off the tableau and a Pauli
correction ``C`` solving ``lambda(C, t_k) = e_k (mod d)`` is found by
linear algebra, where ``t_k |psi> = omega^{e_k} |psi>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .pauli import Pauli, check_d, rank_mod, solve_mod
from .tableau import MeasurementRecord, QuditTableau, _rng, init_plus


class SiteRole(str, Enum):
    MOLECULE = "molecule"
    ATOM = "atom"


@dataclass(frozen=True)
class Site:
    index: int
    role: SiteRole


@dataclass(frozen=True)
class Correction:
    site: int
    x_power: int
    z_power: int

    def as_dict(self) -> dict:
        return {"site": self.site, "x_power": self.x_power, "z_power": self.z_power}


@dataclass
class FeedforwardPlan:
    """Single-site Pauli corrections ``X^x_power Z^z_power`` keyed by site.

    Site indices refer to the full register (atoms included), so a plan can
    be replayed against the circuit transcript.
    """

    d: int
    corrections: list[Correction] = field(default_factory=list)

    def as_pauli(self, n: int) -> Pauli:
        xs = {c.site: c.x_power for c in self.corrections}
        zs = {c.site: c.z_power for c in self.corrections}
        return Pauli.from_powers(self.d, n, xs, zs)

    def as_dict(self) -> list[dict]:
        return [c.as_dict() for c in self.corrections]


@dataclass
class Transcript:
    """Everything needed to replay a protocol run on another simulator."""

    d: int
    n_sites: int
    gates: list[tuple[str, int, int, int]]
    measurements: list[MeasurementRecord]
    plan: FeedforwardPlan
    keep: list[int]

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "n_sites": self.n_sites,
            "gates": [{"gate": g, "i": i, "j": j, "power": p} for g, i, j, p in self.gates],
            "measurements": [r.as_dict() for r in self.measurements],
            "corrections": self.plan.as_dict(),
            "keep": list(self.keep),
        }


def compute_feedforward(tab: QuditTableau, targets: list[Pauli], allowed_sites: list[int],
                        kind: str = "x") -> FeedforwardPlan:
    """Pauli correction on ``allowed_sites`` that sets every target's eigenvalue to 1.

    Each target must be (up to phase) in the stabilizer group.  ``kind``
    restricts the correction to X powers (``"x"``), Z powers (``"z"``) or
    both (``"xz"``).
    """
    d, n = tab.d, tab.n
    offsets = []
    for t in targets:
        m = tab.phase_offset(t)
        if m is None:
            raise ValueError(f"target {t} is not in the stabilizer group")
        offsets.append(m)
    # lambda(C, t) = z_C . x_t - x_C . z_t
    cols_x = np.array([[-int(t.z[s]) for s in allowed_sites] for t in targets], dtype=np.int64)
    cols_z = np.array([[int(t.x[s]) for s in allowed_sites] for t in targets], dtype=np.int64)
    if kind == "x":
        a = cols_x
    elif kind == "z":
        a = cols_z
    elif kind == "xz":
        a = np.concatenate([cols_x, cols_z], axis=1)
    else:
        raise ValueError(f"unknown correction kind {kind!r}")
    sol = solve_mod(a.reshape(len(targets), -1), np.array(offsets), d)
    if sol is None:
        raise ValueError("no Pauli correction of the requested kind exists")
    k = len(allowed_sites)
    xs = sol[:k] if kind in ("x", "xz") else np.zeros(k, dtype=np.int64)
    zs = sol[k:] if kind == "xz" else (sol if kind == "z" else np.zeros(k, dtype=np.int64))
    plan = FeedforwardPlan(d)
    for s, xp, zp in zip(allowed_sites, xs, zs):
        if xp or zp:
            plan.corrections.append(Correction(int(s), int(xp), int(zp)))
    return plan


# --- GHZ ---------------------------------------------------------------------

def ghz_layout(n_molecules: int) -> list[Site]:
    if n_molecules < 2:
        raise ValueError("need at least two molecules")
    return [Site(k, SiteRole.MOLECULE if k % 2 == 0 else SiteRole.ATOM)
            for k in range(2 * n_molecules - 1)]


def ghz_circuit(d: int, n_molecules: int) -> list[tuple[str, int, int, int]]:
    """CZ_d layers: every atom couples to its left molecule, then to its right one."""
    sites = ghz_layout(n_molecules)
    atoms = [s.index for s in sites if s.role is SiteRole.ATOM]
    left = [("CZ", a, a - 1, 1) for a in atoms]
    right = [("CZ", a, a + 1, d - 1) for a in atoms]
    return left + right


def ghz_generators(d: int, n: int) -> list[Pauli]:
    """``X^{(x)n}`` and ``Z_i Z_{i+1}^{-1}``, all with eigenvalue 1 on the GHZ state."""
    gens = [Pauli(d, np.ones(n, dtype=np.int64), np.zeros(n, dtype=np.int64))]
    for i in range(n - 1):
        gens.append(Pauli.from_powers(d, n, zs={i: 1, i + 1: -1}))
    return gens


def ghz_tableau(d: int, n: int) -> QuditTableau:
    return QuditTableau.from_generators(ghz_generators(d, n))


def verify_ghz(tab: QuditTableau) -> bool:
    """True iff the stabilizer group is exactly the d-level GHZ group."""
    try:
        tab.validate()
    except AssertionError:
        return False
    return tab.same_group(ghz_tableau(tab.d, tab.n))


def run_ghz_protocol(d: int, n_molecules: int, rng_seed=None, *, transcript: bool = False):
    """Prepare an N-molecule GHZ state through the atom-mediated cluster.

    Returns
    -------
    tab : QuditTableau
        Corrected stabilizer state of the molecules only.
    records : list of MeasurementRecord
        Atom X-measurement outcomes, measured left to right.
    plan : FeedforwardPlan
        X-power corrections applied to the molecules.
    transcript : Transcript
        Only when ``transcript=True``; replayable gate/measurement log.
    """
    check_d(d)
    sites = ghz_layout(n_molecules)
    n = len(sites)
    molecules = [s.index for s in sites if s.role is SiteRole.MOLECULE]
    atoms = [s.index for s in sites if s.role is SiteRole.ATOM]
    rng = _rng(rng_seed)
    tab = init_plus(d, n)
    gates = ghz_circuit(d, n_molecules)
    for _, i, j, p in gates:
        tab.apply_czd(i, j, p)
    records = [tab.measure_x(a, rng) for a in atoms]
    targets = [_embed(g, molecules, n) for g in ghz_generators(d, n_molecules)]
    plan = compute_feedforward(tab, targets, molecules, kind="x")
    tab.apply_pauli(plan.as_pauli(n))
    mol_tab = tab.restrict(molecules)
    if transcript:
        return mol_tab, records, plan, Transcript(d, n, gates, records, plan, molecules)
    return mol_tab, records, plan


def _embed(p: Pauli, sites: list[int], n: int) -> Pauli:
    x = np.zeros(n, dtype=np.int64)
    z = np.zeros(n, dtype=np.int64)
    x[sites] = p.x
    z[sites] = p.z
    return Pauli(p.d, x, z, p.phase)


# --- Z_3 toric code ----------------------------------------------------------

@dataclass(frozen=True)
class ToricLattice:
    L: int

    @property
    def n_edges(self) -> int:
        return 2 * self.L * self.L

    @property
    def n_faces(self) -> int:
        return self.L * self.L

    def h(self, i: int, j: int) -> int:
        L = self.L
        return (i % L) * L + (j % L)

    def v(self, i: int, j: int) -> int:
        L = self.L
        return L * L + (i % L) * L + (j % L)

    def face_site(self, i: int, j: int) -> int:
        return self.n_edges + (i % self.L) * self.L + (j % self.L)

    def face_boundary(self, i: int, j: int) -> list[tuple[int, int]]:
        """``(edge, orientation sign)`` around face ``(i, j)``."""
        return [(self.h(i, j), 1), (self.v(i, j + 1), 1),
                (self.h(i + 1, j), -1), (self.v(i, j), -1)]

    def vertex_star(self, i: int, j: int) -> list[tuple[int, int]]:
        """``(edge, eta)`` at vertex ``(i, j)``: +1 where the vertex is the head."""
        return [(self.h(i, j), -1), (self.v(i, j), -1),
                (self.h(i, j - 1), 1), (self.v(i - 1, j), 1)]

    def faces(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.L) for j in range(self.L)]


def toric_operators(L: int, n_sites: int | None = None) -> tuple[list[Pauli], list[Pauli]]:
    """Vertex operators ``A_v`` and plaquette operators ``B_p`` on the edge qutrits."""
    lat = ToricLattice(L)
    n = lat.n_edges if n_sites is None else n_sites
    a_ops, b_ops = [], []
    for i, j in lat.faces():
        xs: dict[int, int] = {}
        for e, eta in lat.vertex_star(i, j):
            xs[e] = xs.get(e, 0) + eta
        a_ops.append(Pauli.from_powers(3, n, xs=xs))
        zs: dict[int, int] = {}
        for e, s in lat.face_boundary(i, j):
            zs[e] = zs.get(e, 0) + s
        b_ops.append(Pauli.from_powers(3, n, zs=zs))
    return a_ops, b_ops


def toric_circuit(L: int) -> list[tuple[str, int, int, int]]:
    lat = ToricLattice(L)
    gates = []
    for i, j in lat.faces():
        f = lat.face_site(i, j)
        for e, s in lat.face_boundary(i, j):
            gates.append(("CZ", f, e, s % 3))
    return gates


@dataclass
class ToricReport:
    L: int
    vertex_checks: list[bool]
    plaquette_checks: list[bool]
    code_rank: int
    logical_dimension: int
    vertex_product_identity: bool
    plaquette_product_identity: bool

    @property
    def passed(self) -> bool:
        return all(self.vertex_checks) and all(self.plaquette_checks)

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "vertex_checks": self.vertex_checks,
            "plaquette_checks": self.plaquette_checks,
            "code_rank": self.code_rank,
            "logical_dimension": self.logical_dimension,
            "vertex_product_identity": self.vertex_product_identity,
            "plaquette_product_identity": self.plaquette_product_identity,
            "passed": self.passed,
        }


def build_z3_toric_code(L: int, rng_seed=None, *, transcript: bool = False):
    """Prepare the Z_3 toric code on an ``L x L`` torus by measuring face ancillas.

    Returns the corrected edge tableau and a ``ToricReport`` (plus the
    ``Transcript`` when requested).
    """
    if L not in (2, 3):
        raise ValueError("toric code preparation supports L in {2, 3}")
    d = 3
    lat = ToricLattice(L)
    n = lat.n_edges + lat.n_faces
    edges = list(range(lat.n_edges))
    rng = _rng(rng_seed)
    tab = init_plus(d, n)
    gates = toric_circuit(L)
    for _, f, e, p in gates:
        tab.apply_czd(f, e, p)
    records = [tab.measure_x(lat.face_site(i, j), rng) for i, j in lat.faces()]
    a_ops, b_ops = toric_operators(L, n)
    plan = compute_feedforward(tab, a_ops + b_ops, edges, kind="x")
    tab.apply_pauli(plan.as_pauli(n))
    edge_tab = tab.restrict(edges)
    report = toric_report(edge_tab, L)
    if transcript:
        return edge_tab, report, Transcript(d, n, gates, records, plan, edges)
    return edge_tab, report


def toric_report(edge_tab: QuditTableau, L: int) -> ToricReport:
    a_ops, b_ops = toric_operators(L)
    code = np.array([p.vector() for p in a_ops + b_ops])
    rank = rank_mod(code, 3)
    ident = Pauli.identity(3, edge_tab.n)
    prod_a, prod_b = ident, ident
    for p in a_ops:
        prod_a = prod_a * p
    for p in b_ops:
        prod_b = prod_b * p
    return ToricReport(
        L=L,
        vertex_checks=[edge_tab.contains(p) for p in a_ops],
        plaquette_checks=[edge_tab.contains(p) for p in b_ops],
        code_rank=rank,
        logical_dimension=3 ** (edge_tab.n - rank),
        vertex_product_identity=prod_a == ident,
        plaquette_product_identity=prod_b == ident,
    )
