"""Command-line scenario runner.

``atommol run <scenario> [--config FILE] [--seed N] [--out FILE] [--debug] [overrides]``
executes one scenario and writes a JSON result envelope.  Overrides are
either ``key=value`` arguments or ``--key-name value`` flags; dotted keys
reach nested blocks (``weak.theta=0.2``) and values are parsed as YAML
scalars or lists.

``atommol export <envelope> --kind <kind> --out <csv>`` writes plot data.

Exit codes: 0 success, 2 invalid configuration or input, 3 numerical
failure, 4 invariant violation (with ``--debug``).
"""

from __future__ import annotations

import copy
import csv
import json
import math
import os
import sys
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np
import yaml

from . import __version__
from .qdyn import IntegrationError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INVARIANT = 4
THREADS_ENV = "ATOMMOL_THREADS"

DEFAULTS: dict[str, dict[str, Any]] = {
    "gate-sim": {
        "gate": "hybrid-cz",
        "v_ma": 1.0,
        "omega_ratio": 0.1,
        "omega_ratios": None,
        "delta": 0.0,
        "gamma_r": 0.0,
        "gamma_R": 0.0,
        "v_mm": 1.0,
        "drive_ratio": 0.05,
    },
    "budget": {
        "species": "CaF",
        "species_file": None,
        "field_multiplier": 1.0,
        "ghz_n": 10,
        "readout_error": 0.03,
    },
    "ghz": {"d": 2, "n_molecules": 3, "seeds": 100, "oracle": True},
    "toric": {"L": 2, "seeds": 20, "oracle": True},
    "criticality": {
        "model": "potts3",
        "n_sites": 6,
        "anisotropy": -1.0,
        "J": 1.0,
        "h": 1.0,
        "boundary": "periodic",
        "correlator": None,
        "pairs": None,
        "gap_scan": None,
        "weak": None,
    },
}
NESTED = {
    ("criticality", "gap_scan"): {"n_list": [4, 5, 6], "J_over_h_list": [0.5, 1.0, 2.0]},
    ("criticality", "weak"): {"theta": 0.1, "sites": [0], "ancilla_prep": None,
                              "post_select": None, "compensate_local_phase": False},
}
TOP_LEVEL = {"scenario", "seed", "output_path", "params"}
GATES = ("hybrid-cz", "iswap", "pair-drive")


class ConfigError(ValueError):
    """The configuration or an override is malformed."""


# --- configuration ---------------------------------------------------------------

def _parse_value(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {text!r}: {exc}") from None


def parse_overrides(args: list[str]) -> dict[str, Any]:
    """``key=value`` and ``--key-name value`` arguments to a flat dotted-key dict."""
    out: dict[str, Any] = {}
    i = 0
    while i < len(args):
        a = args[i]
        if a.startswith("--"):
            key = a[2:]
            if "=" in key:
                key, val = key.split("=", 1)
                i += 1
            else:
                if i + 1 >= len(args):
                    raise ConfigError(f"flag {a} needs a value")
                val = args[i + 1]
                i += 2
        elif "=" in a:
            key, val = a.split("=", 1)
            i += 1
        else:
            raise ConfigError(f"unexpected argument {a!r}")
        out[key.replace("-", "_")] = _parse_value(val)
    return out


def _merge_block(scenario: str, base: dict, given: dict, path: str) -> dict:
    unknown = set(given) - set(base)
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {sorted(unknown)}")
    out = copy.deepcopy(base)
    for k, v in given.items():
        sub = NESTED.get((scenario, k))
        if sub is not None and v is not None:
            if not isinstance(v, dict):
                raise ConfigError(f"{path}.{k} must be a mapping")
            v = _merge_block(scenario, sub, v, f"{path}.{k}")
        out[k] = v
    return out


def resolve_config(scenario: str, file_data: dict | None, seed: int | None,
                   out: str | None, overrides: dict[str, Any]) -> dict:
    """Merge defaults, the config file and overrides into one strict configuration."""
    if scenario not in DEFAULTS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    data = file_data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(data) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if data.get("scenario", scenario) != scenario:
        raise ConfigError(f"config is for scenario {data['scenario']!r}, not {scenario!r}")
    params = data.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping")
    nested: dict[str, Any] = copy.deepcopy(params)
    for key, val in overrides.items():
        parts = key.split(".")
        node = nested
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key} walks into a non-mapping")
        node[parts[-1]] = val
    resolved_params = _merge_block(scenario, DEFAULTS[scenario], nested, "params")
    resolved_seed = seed if seed is not None else data.get("seed", 0)
    if not isinstance(resolved_seed, int) or not 0 <= resolved_seed < 2 ** 64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    return {
        "scenario": scenario,
        "seed": resolved_seed,
        "output_path": out if out is not None else data.get("output_path", "-"),
        "params": resolved_params,
    }


def load_config_file(path: str | None) -> dict | None:
    if path is None:
        return None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None


# --- envelope ----------------------------------------------------------------------

def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; complex numbers become ``{"re": .., "im": ..}``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not math.isfinite(f):
            raise FloatingPointError("non-finite number in results")
        return f
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


@dataclass
class ResultEnvelope:
    config: dict
    results: dict
    provenance: dict
    timing: dict
    artifact: str = "atommol"
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "artifact": self.artifact,
            "version": self.version,
            "config": to_jsonable(self.config),
            "results": to_jsonable(self.results),
            "provenance": to_jsonable(self.provenance),
            "timing": to_jsonable(self.timing),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def results_json(self) -> str:
        return json.dumps(to_jsonable(self.results), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ResultEnvelope":
        missing = {"config", "results", "provenance", "timing"} - set(data)
        if missing:
            raise ConfigError(f"envelope lacks {sorted(missing)}")
        return cls(data["config"], data["results"], data["provenance"], data["timing"],
                   data.get("artifact", "atommol"), data.get("version", __version__))

    @classmethod
    def from_json(cls, text: str) -> "ResultEnvelope":
        return cls.from_dict(json.loads(text))


# --- scenarios -----------------------------------------------------------------------

def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _parallel_map(fn: Callable, items: list) -> list:
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def run_gate_sim(p: dict, seed: int) -> tuple[dict, dict]:
    from . import gates

    if p["gate"] not in GATES:
        raise ConfigError(f"gate must be one of {GATES}")
    if p["gate"] == "hybrid-cz":
        def one(ratio: float) -> dict:
            spec = gates.HybridGateSpec.cz(p["v_ma"], ratio, p["gamma_r"], p["gamma_R"])
            return gates.simulate_hybrid_cz(spec).as_dict()

        report = one(float(p["omega_ratio"]))
        results = {"gate": "hybrid-cz", "report": report}
        if p["omega_ratios"]:
            ratios = [float(r) for r in p["omega_ratios"]]
            reps = _parallel_map(one, ratios)
            results["sweep"] = [{"omega_ratio": r, "conditional_phase": rep["conditional_phase"],
                                 "leakage": rep["leakage"]} for r, rep in zip(ratios, reps)]
    elif p["gate"] == "iswap":
        spec = gates.MolMolGateSpec(p["v_mm"], "iswap")
        results = {"gate": "iswap", "report": gates.simulate_iswap(spec).as_dict()}
    else:
        spec = gates.MolMolGateSpec(p["v_mm"], "pair_drive", drive_rabi=p["drive_ratio"] * p["v_mm"])
        results = {"gate": "pair-drive", "report": gates.simulate_pair_drive_cz(spec).as_dict()}
    prov = {"report.conditional_phase": "derived", "report.leakage": "derived"}
    return results, prov


def run_budget(p: dict, seed: int) -> tuple[dict, dict]:
    from . import budget

    table, calib = budget.load_species(p["species_file"])
    calib = replace(calib, field_multiplier=float(p["field_multiplier"]))
    names = list(table) if p["species"] == "all" else (
        p["species"] if isinstance(p["species"], list) else [p["species"]])
    unknown = [n for n in names if n not in table]
    if unknown:
        raise ConfigError(f"unknown species {unknown}")
    rows = []
    for name in names:
        b = budget.compute_budget(table[name], calib)
        row = b.as_dict()
        row["ghz_fidelity"] = {
            s: budget.project_ghz_fidelity(b.total, p["ghz_n"], s, p["readout_error"])
            for s in budget.GHZ_SCHEMES
        }
        rows.append(row)
    prov = {"budgets[anchor]": "anchored", "budgets[other]": "derived",
            "species f, d_M": "external"}
    return {"anchor": calib.anchor_name, "budgets": rows}, prov


def _histogram(outcomes: list[int], d: int) -> list[dict]:
    counts = Counter(outcomes)
    total = max(1, len(outcomes))
    return [{"outcome": m, "frequency": counts.get(m, 0) / total} for m in range(d)]


def run_ghz(p: dict, seed: int) -> tuple[dict, dict]:
    from .qudit import protocols
    from .qudit import statevector as sv

    d, n = int(p["d"]), int(p["n_molecules"])
    seeds = [seed + k for k in range(int(p["seeds"]))]

    def one(s: int) -> dict:
        tab, recs, plan, tr = protocols.run_ghz_protocol(d, n, s, transcript=True)
        zz = protocols.Pauli.from_powers(d, n, zs={0: 1, n - 1: -1})
        out = {"seed": s, "verified": protocols.verify_ghz(tab),
               "z1_zn_inverse": tab.expectation(zz).real,
               "outcomes": [r.outcome for r in recs], "transcript": tr.as_dict()}
        if p["oracle"] and d ** (2 * n - 1) <= 3 ** 8:
            psi = sv.replay(d, tr.n_sites, tr.gates, [(r.site, r.outcome) for r in recs],
                            [(c.site, c.x_power, c.z_power) for c in plan.corrections], tr.keep)
            out["oracle_fidelity"] = sv.fidelity(psi, sv.ghz_state(d, n))
        return out

    runs = _parallel_map(one, seeds)
    all_outcomes = [m for r in runs for m in r["outcomes"]]
    results = {
        "d": d,
        "n_molecules": n,
        "all_verified": all(r["verified"] for r in runs),
        "outcome_histogram": _histogram(all_outcomes, d),
        "runs": [{k: v for k, v in r.items() if k != "transcript"} for r in runs],
        "first_transcript": runs[0]["transcript"] if runs else None,
    }
    if runs and "oracle_fidelity" in runs[0]:
        results["min_oracle_fidelity"] = min(r["oracle_fidelity"] for r in runs)
    return results, {"all_verified": "derived", "min_oracle_fidelity": "derived"}


def run_toric(p: dict, seed: int) -> tuple[dict, dict]:
    from .qudit import protocols
    from .qudit import statevector as sv

    L = int(p["L"])
    seeds = [seed + k for k in range(int(p["seeds"]))]

    def one(s: int) -> dict:
        tab, rep, tr = protocols.build_z3_toric_code(L, s, transcript=True)
        out = {"seed": s, "report": rep.as_dict(),
               "outcomes": [r.outcome for r in tr.measurements],
               "generators": [[g.x.tolist(), g.z.tolist(), g.phase] for g in tab.generators()]}
        if p["oracle"] and L == 2:
            psi = sv.replay(3, tr.n_sites, tr.gates, [(r.site, r.outcome) for r in tr.measurements],
                            [(c.site, c.x_power, c.z_power) for c in tr.plan.corrections], tr.keep)
            a_ops, b_ops = protocols.toric_operators(L)
            out["oracle_max_deviation"] = max(abs(sv.expectation(psi, q) - 1.0) for q in a_ops + b_ops)
        return out, tab

    pairs = _parallel_map(one, seeds)
    runs = [r for r, _ in pairs]
    first = pairs[0][1]
    results = {
        "L": L,
        "all_passed": all(r["report"]["passed"] for r in runs),
        "same_group_all_seeds": all(first.same_group(t) for _, t in pairs),
        "logical_dimension": runs[0]["report"]["logical_dimension"],
        "outcome_histogram": _histogram([m for r in runs for m in r["outcomes"]], 3),
        "runs": runs,
    }
    return results, {"logical_dimension": "derived", "all_passed": "derived"}


def run_criticality(p: dict, seed: int) -> tuple[dict, dict]:
    from . import criticality as cr

    spec = cr.SpinChainSpec(p["model"], int(p["n_sites"]), anisotropy=float(p["anisotropy"]),
                            J=float(p["J"]), h=float(p["h"]), boundary=p["boundary"])
    gs = cr.solve_chain(spec, k_states=3)
    results: dict[str, Any] = {"energy": gs.energy, "gap": gs.gap, "residual": gs.residual,
                               "energies": gs.energies}
    if p["correlator"]:
        pairs = [tuple(q) for q in (p["pairs"] or [[0, 1]])]
        vals = cr.correlators(gs.state, p["correlator"], pairs)
        results["correlators"] = [{"pair": list(q), "value": v} for q, v in zip(pairs, vals)]
    if p["gap_scan"]:
        g = p["gap_scan"]
        rows = cr.potts_gap_scan(g["n_list"], g["J_over_h_list"], h=float(p["h"]))
        results["gap_scan"] = [r.as_dict() for r in rows]
    if p["weak"]:
        w = p["weak"]
        policy = "sample" if w["post_select"] is None else tuple(w["post_select"])
        wspec = cr.WeakMeasurementSpec(theta=float(w["theta"]), sites=w["sites"],
                                       ancilla_prep=w["ancilla_prep"], outcome_policy=policy,
                                       compensate_local_phase=bool(w["compensate_local_phase"]),
                                       seed=seed)
        stats = cr.weak_measure(gs.state, wspec, spec.local_dim)
        results["weak"] = stats.as_dict()
        results["outcome_histogram"] = [
            {"outcome": k, "frequency": v} for k, v in stats.as_dict()["outcome_probabilities"].items()]
    return results, {"energy": "derived", "gap": "derived"}


SCENARIOS: dict[str, Callable[[dict, int], tuple[dict, dict]]] = {
    "gate-sim": run_gate_sim,
    "budget": run_budget,
    "ghz": run_ghz,
    "toric": run_toric,
    "criticality": run_criticality,
}


def execute(config: dict) -> ResultEnvelope:
    t0 = time.perf_counter()
    results, prov = SCENARIOS[config["scenario"]](config["params"], config["seed"])
    return ResultEnvelope(config=config, results=results, provenance=prov,
                          timing={"wall_seconds": time.perf_counter() - t0})


# --- export ----------------------------------------------------------------------------

EXPORTS = {
    "phase-vs-ratio": ("sweep", [("omega_ratio", "omega_ratio [Omega_max/V_MA]"),
                                 ("conditional_phase", "conditional_phase [rad]"),
                                 ("leakage", "leakage [probability]")]),
    "gap-scan": ("gap_scan", [("n", "n"), ("J_over_h", "J_over_h"), ("gap", "gap [h]")]),
    "outcome-histogram": ("outcome_histogram", [("outcome", "outcome"),
                                                ("frequency", "frequency [probability]")]),
}


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def export_plot_data(envelope: ResultEnvelope, kind: str, out: str | Path) -> int:
    """Write one CSV series from an envelope; returns the number of data rows."""
    if kind not in EXPORTS:
        raise ConfigError(f"unknown export kind {kind!r}")
    key, cols = EXPORTS[kind]
    rows = envelope.results.get(key)
    if not rows:
        raise ConfigError(f"envelope has no {key!r} series")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([label for _, label in cols])
        for r in rows:
            w.writerow([_fmt(r[c]) for c, _ in cols])
    return len(rows)


# --- click wiring ------------------------------------------------------------------------

def _fail(code: int, kind: str, msg: str) -> None:
    click.echo(json.dumps({"error": kind, "message": msg, "exit_code": code}), err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Atom-molecule gate, budget, stabilizer and criticality scenarios."""


@main.command(context_settings={"ignore_unknown_options": True, "allow_extra_args": True})
@click.argument("scenario", type=click.Choice(sorted(SCENARIOS)))
@click.option("--config", "config_path", type=str, default=None, help="YAML configuration file.")
@click.option("--seed", type=int, default=None, help="Seed for every random draw.")
@click.option("--out", type=str, default=None, help="Envelope path ('-' for stdout).")
@click.option("--debug", is_flag=True, help="Validate stabilizer tableaus after every step.")
@click.pass_context
def run(ctx: click.Context, scenario: str, config_path: str | None, seed: int | None,
        out: str | None, debug: bool) -> None:
    """Run SCENARIO and write its result envelope."""
    from .qudit import tableau

    try:
        cfg = resolve_config(scenario, load_config_file(config_path), seed, out,
                             parse_overrides(list(ctx.args)))
    except ConfigError as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    tableau.DEBUG = tableau.DEBUG or debug
    try:
        env = execute(cfg)
        text = env.to_json()
    except ConfigError as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    except tableau.InvariantViolation as exc:
        _fail(EXIT_INVARIANT, "invariant", str(exc))
    except (IntegrationError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        _fail(EXIT_NUMERICAL, "numerical", f"{type(exc).__name__}: {exc}")
    except ValueError as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    if cfg["output_path"] == "-":
        click.echo(text)
    else:
        Path(cfg["output_path"]).write_text(text + "\n")


@main.command("export")
@click.argument("envelope", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", required=True, type=click.Choice(sorted(EXPORTS)))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def export_cmd(envelope: str, kind: str, out: str) -> None:
    """Write a CSV series from a result ENVELOPE."""
    try:
        env = ResultEnvelope.from_json(Path(envelope).read_text())
        export_plot_data(env, kind, out)
    except (ConfigError, json.JSONDecodeError, KeyError) as exc:
        _fail(EXIT_CONFIG, "input", str(exc))


if __name__ == "__main__":
    main()
