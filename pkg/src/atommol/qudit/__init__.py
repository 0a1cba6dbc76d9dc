"""Qudit stabilizer simulation and measurement-based state preparation."""

from .pauli import Pauli, commutator_phase, rank_mod, solve_mod
from .protocols import (
    Correction,
    FeedforwardPlan,
    SiteRole,
    ToricReport,
    Transcript,
    build_z3_toric_code,
    compute_feedforward,
    ghz_generators,
    run_ghz_protocol,
    toric_operators,
    verify_ghz,
)
from .tableau import (
    InvariantViolation,
    MeasurementRecord,
    QuditTableau,
    apply_czd,
    init_plus,
    measure_x,
)

__all__ = [
    "Correction",
    "FeedforwardPlan",
    "InvariantViolation",
    "MeasurementRecord",
    "Pauli",
    "QuditTableau",
    "SiteRole",
    "ToricReport",
    "Transcript",
    "apply_czd",
    "build_z3_toric_code",
    "commutator_phase",
    "compute_feedforward",
    "ghz_generators",
    "init_plus",
    "measure_x",
    "rank_mod",
    "run_ghz_protocol",
    "solve_mod",
    "toric_operators",
    "verify_ghz",
]
