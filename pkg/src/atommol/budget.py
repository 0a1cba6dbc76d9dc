"""Hybrid-gate error budget scaled from a calibrated anchor species.

Each error channel scales as a power law in the molecular rotational
frequency ``f`` and transition dipole ``d_M``::

    channel        f exponent   d_M exponent
    decay             3/2           -1
    adiabaticity       0             0
    leakage         -10/3            2
    field            10/3           -2

Absolute values come from the anchor (CaF with Rb 59s).  The anchor's ``f``
and ``d_M`` are configuration inputs read from the species file.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

log = logging.getLogger(__name__)

CHANNELS = ("decay", "adiabaticity", "leakage", "field")
EXPONENTS: dict[str, tuple[float, float]] = {
    "decay": (1.5, -1.0),
    "adiabaticity": (0.0, 0.0),
    "leakage": (-10.0 / 3.0, 2.0),
    "field": (10.0 / 3.0, -2.0),
}
N_RANGE = (10, 150)
DEFAULT_READOUT_ERROR = 0.03
GHZ_SCHEMES = ("gate_only_linear", "gate_only_log", "measurement_based")


class NoRydbergMatch(ValueError):
    """No Rydberg level in the allowed range matches the rotational frequency."""


@dataclass(frozen=True)
class MoleculeSpecies:
    name: str
    f: float
    d_M: float

    def __post_init__(self) -> None:
        if not (self.f > 0 and self.d_M > 0):
            raise ValueError(f"species {self.name!r} needs positive f and d_M")


@dataclass(frozen=True)
class AnchorCalibration:
    anchor_f: float
    anchor_d: float
    anchor_name: str = "CaF+Rb"
    anchor_errors: dict[str, float] = field(default_factory=lambda: {
        "decay": 7e-4, "adiabaticity": 2.5e-4, "leakage": 5e-8, "field": 8e-5})
    anchor_n: int = 59
    field_multiplier: float = 1.0

    def __post_init__(self) -> None:
        missing = set(CHANNELS) - set(self.anchor_errors)
        if missing:
            raise ValueError(f"anchor calibration lacks channels {sorted(missing)}")
        if any(v < 0 for v in self.anchor_errors.values()):
            raise ValueError("anchor errors must be non-negative")
        if self.anchor_f <= 0 or self.anchor_d <= 0:
            raise ValueError("anchor f and d must be positive")

    def with_errors(self, **errors: float) -> "AnchorCalibration":
        return replace(self, anchor_errors={**self.anchor_errors, **errors})


@dataclass(frozen=True)
class ErrorBudget:
    species: str
    decay: float
    adiabaticity: float
    leakage: float
    field: float
    total: float
    matched_n: int | None

    @property
    def total_display(self) -> str:
        """Total rounded to one significant figure, e.g. ``'1e-03'``."""
        return f"{self.total:.0e}"

    def as_dict(self) -> dict:
        out = asdict(self)
        out["total_display"] = self.total_display
        return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def match_rydberg_n(species: MoleculeSpecies, calib: AnchorCalibration) -> int:
    """Principal quantum number whose level spacing (~ n^-3) matches the species' ``f``."""
    n = _round_half_up(calib.anchor_n / float(np.cbrt(species.f / calib.anchor_f)))
    lo, hi = N_RANGE
    if not lo <= n <= hi:
        raise NoRydbergMatch(f"{species.name}: matching n = {n} lies outside [{lo}, {hi}]")
    return n


def compute_budget(species: MoleculeSpecies, calib: AnchorCalibration) -> ErrorBudget:
    fr = species.f / calib.anchor_f
    dr = species.d_M / calib.anchor_d
    vals = {}
    for ch in CHANNELS:
        a, b = EXPONENTS[ch]
        vals[ch] = calib.anchor_errors[ch] * fr ** a * dr ** b
    vals["field"] *= calib.field_multiplier ** 2
    try:
        n = match_rydberg_n(species, calib)
    except NoRydbergMatch as exc:
        log.warning("%s", exc)
        n = None
    total = vals["decay"] + vals["adiabaticity"] + vals["leakage"] + vals["field"]
    return ErrorBudget(species=species.name, total=total, matched_n=n, **vals)


def ghz_depth(n: int, scheme: str) -> int:
    """Entangling-layer depth of each GHZ preparation scheme."""
    if scheme == "gate_only_linear":
        return n - 1
    if scheme == "gate_only_log":
        return math.ceil(math.log2(n))
    if scheme == "measurement_based":
        return 2
    raise ValueError(f"unknown scheme {scheme!r}")


def project_ghz_fidelity(gate_error: float, n: int, scheme: str,
                         readout_error: float = DEFAULT_READOUT_ERROR) -> float:
    """First-order independent-error projection of N-molecule GHZ fidelity.

    Gate-only schemes use N-1 two-body gates (linear chain or log-depth
    tree, same count).  The measurement-based layout uses N-1 atomic
    ancillas, each with two CZs and one readout.
    """
    if n < 2:
        raise ValueError("N must be at least 2")
    for name, e in (("gate_error", gate_error), ("readout_error", readout_error)):
        if not 0.0 <= e < 1.0:
            raise ValueError(f"{name} must lie in [0, 1)")
    if scheme in ("gate_only_linear", "gate_only_log"):
        return (1.0 - gate_error) ** (n - 1)
    if scheme == "measurement_based":
        return (1.0 - gate_error) ** (2 * (n - 1)) * (1.0 - readout_error) ** (n - 1)
    raise ValueError(f"unknown scheme {scheme!r}")


def _read_yaml(path: str | Path | None) -> dict:
    if path is None:
        text = resources.files("atommol").joinpath("data/species.yaml").read_text()
    else:
        text = Path(path).read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict) or "species" not in data or "anchor" not in data:
        raise ValueError("species file needs top-level 'anchor' and 'species' keys")
    return data


def load_species(path: str | Path | None = None) -> tuple[dict[str, MoleculeSpecies], AnchorCalibration]:
    """Read the species database and its anchor calibration.

    ``path=None`` loads the file shipped with the package.
    """
    data = _read_yaml(path)
    table = {}
    for rec in data["species"]:
        extra = set(rec) - {"name", "f_Hz", "d_Debye"}
        if extra:
            raise ValueError(f"unknown species keys {sorted(extra)}")
        sp = MoleculeSpecies(rec["name"], float(rec["f_Hz"]), float(rec["d_Debye"]))
        table[sp.name] = sp
    anc = data["anchor"]
    ref = table[anc["species"]]
    calib = AnchorCalibration(
        anchor_f=ref.f,
        anchor_d=ref.d_M,
        anchor_name=anc.get("name", "CaF+Rb"),
        anchor_errors={k: float(v) for k, v in anc["errors"].items()},
        anchor_n=int(anc.get("rydberg_n", 59)),
    )
    return table, calib
