"""
Golden fixtures: ``<root>/<name>/{params.json, expected.csv, tolerances.json}``.

``params.json`` names a generator, the scenario document and the grid it is
evaluated on. Two kinds exist:

* ``regression`` fixtures store the library's own output and use tight
  tolerances; :func:`regenerate` rewrites them byte-identically.
* ``reference`` fixtures store externally quoted headline values, which
  are rounded to a few digits, so they get loose tolerances; they are never
  regenerated.

A cell passes when ``|actual - expected| <= abs + rel * |expected|``; key
columns (the grid coordinates) must match as text.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import MissingFixtureError
from .feasibility import dmax_closed_form, dmax_with_rotation
from .fidelity import link_budget
from .optics import capture_probability
from .params import ScenarioParams, default_scenario, scenario_to_document, validate_scenario
from .reproduce import TARGETS, Table, format_cell, parse_csv, to_csv

DEFAULT_ROOT = Path(__file__).resolve().parents[2] / "fixtures"


def fixture_root(root: str | Path | None = None) -> Path:
    if root is not None:
        return Path(root)
    return Path(os.environ.get("ENTM_FIXTURES", DEFAULT_ROOT))


# --- generators: (scenario, grid) -> Table ---------------------------------

def _link_budget_rows(sc: ScenarioParams, grid: dict) -> Table:
    cols = ["d_km", "eta", "beta", "q", "f_rot", "f0_prime", "t_cutoff_s", "K"]
    rows = []
    for dk in grid["d_km"]:
        b = link_budget(dk * 1e3, sc)
        rows.append([dk, b.eta_ideal, b.beta, b.q, b.f_rot, b.f0_prime,
                     b.t_cutoff if b.feasible else math.nan, b.max_age])
    return Table("link_budget", cols, rows)


def _capture_at(sc: ScenarioParams, grid: dict) -> Table:
    d = grid["d_km"] * 1e3
    rows = []
    for sigma in grid["sigmas_urad"]:
        optics = sc.replace(optics__pointing_sigma=sigma * 1e-6).optics
        rows.append([sigma, float(capture_probability(d, optics))])
    return Table("capture", ["sigma_urad", "q"], rows)


def _fidelity_at(sc: ScenarioParams, grid: dict) -> Table:
    rows = []
    for qber, sigma in grid["cases"]:
        case = sc.replace(noise__qber=qber, optics__pointing_sigma=sigma * 1e-6)
        rows.append([qber, sigma, link_budget(grid["d_km"] * 1e3, case).f0_prime])
    return Table("fidelity", ["qber", "sigma_urad", "f0_prime"], rows)


def _cutoff_at(sc: ScenarioParams, grid: dict) -> Table:
    rows = []
    for qber in grid["qbers"]:
        b = link_budget(grid["d_km"] * 1e3, sc.replace(noise__qber=qber))
        rows.append([qber, b.t_cutoff if b.feasible else math.nan])
    return Table("cutoff", ["qber", "t_cutoff_s"], rows)


def _dmax_at(sc: ScenarioParams, grid: dict) -> Table:
    f_th, qber = sc.noise.fidelity_threshold, sc.noise.qber
    closed = dmax_closed_form(f_th, qber, sc.optics).d_max / 1e3
    rot = dmax_with_rotation(f_th, qber, sc.optics, sc.orbit).d_max / 1e3
    return Table("dmax", ["qber", "dmax_km", "dmax_rotation_km"], [[qber, closed, rot]])


def _target(name):
    def run(sc: ScenarioParams, grid: dict) -> Table:
        return TARGETS[name](sc, **grid)
    return run


GENERATORS: dict[str, Callable[[ScenarioParams, dict], Table]] = {
    "link_budget": _link_budget_rows,
    "capture_at": _capture_at,
    "fidelity_at": _fidelity_at,
    "cutoff_at": _cutoff_at,
    "dmax_at": _dmax_at,
    **{name: _target(name) for name in TARGETS},
}


# --- fixture definitions ----------------------------------------------------

_PROB = {"abs": 0.002, "rel": 0.0}
_TIGHT = {"abs": 1e-9, "rel": 1e-9}

DEFINITIONS: dict[str, dict[str, Any]] = {
    "link_budget_40km": {
        "kind": "regression", "generator": "link_budget",
        "grid": {"d_km": [40.0, 42.5, 45.0, 47.5, 50.0]},
        "tolerances": {"default": _TIGHT, "keys": ["d_km", "K"]},
    },
    "fig2": {
        "kind": "regression", "generator": "fig2",
        "grid": {"d_km": [40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150]},
        "tolerances": {"default": _TIGHT, "keys": ["panel", "aperture_mm", "sigma_urad", "d_km"]},
    },
    "fig6": {
        "kind": "regression", "generator": "fig6",
        "grid": {"d_km": [40.0, 42.0, 44.0, 46.0, 48.0, 50.0]},
        "tolerances": {"default": _TIGHT,
                       "keys": ["qber", "f_th", "gamma", "sigma_urad", "d_km", "feasible", "K"]},
    },
    "table3": {
        "kind": "regression", "generator": "table3", "grid": {},
        "tolerances": {"default": {"abs": 0.0, "rel": 1e-2}, "keys": ["qber", "n_points"]},
    },
    "reference_capture": {
        "kind": "reference", "generator": "capture_at",
        "grid": {"d_km": 40.0, "sigmas_urad": [0.0, 0.5, 1.0]},
        "expected": [["sigma_urad", "q"], [0.0, 0.6527], [0.5, 0.6291], [1.0, 0.5674]],
        "tolerances": {"default": _PROB, "keys": ["sigma_urad"]},
    },
    "reference_fidelity": {
        "kind": "reference", "generator": "fidelity_at",
        "grid": {"d_km": 40.0, "cases": [[0.01, 0.0], [0.03, 1.0]]},
        "expected": [["qber", "sigma_urad", "f0_prime"], [0.01, 0.0, 0.6495], [0.03, 1.0, 0.5586]],
        "tolerances": {"default": _PROB, "keys": ["qber", "sigma_urad"]},
    },
    "reference_cutoff": {
        "kind": "reference", "generator": "cutoff_at",
        "grid": {"d_km": 40.0, "qbers": [0.01, 0.02, 0.03]},
        "expected": [["qber", "t_cutoff_s"], [0.01, 0.224], [0.02, 0.219], [0.03, 0.214]],
        "tolerances": {"default": {"abs": 0.001, "rel": 0.0}, "keys": ["qber"]},
    },
    "reference_dmax": {
        "kind": "reference", "generator": "dmax_at", "grid": {},
        "expected": [["qber", "dmax_km", "dmax_rotation_km"], [0.01, 50.78, 50.776952]],
        "tolerances": {"default": {"abs": 0.01, "rel": 0.0},
                       "columns": {"dmax_rotation_km": {"abs": 1e-4, "rel": 0.0}},
                       "keys": ["qber"]},
    },
}


@dataclass(frozen=True)
class CellDelta:
    row: int
    column: str
    expected: str
    actual: str
    delta: float
    tolerance: float
    ok: bool


@dataclass(frozen=True)
class FixtureResult:
    name: str
    passed: bool
    deltas: tuple[CellDelta, ...]
    message: str = ""

    @property
    def failures(self) -> list[CellDelta]:
        return [d for d in self.deltas if not d.ok]


def _deep_merge(base: dict, changes: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _fixture_dir(name: str, root) -> Path:
    path = fixture_root(root) / name
    for part in ("params.json", "expected.csv", "tolerances.json"):
        if not (path / part).is_file():
            raise MissingFixtureError(f"fixture {name!r}: {path / part} not found")
    return path


def render(name: str, root=None, overrides: dict | None = None) -> str:
    """Current CSV output of a fixture's generator."""
    path = fixture_root(root) / name / "params.json"
    if not path.is_file():
        raise MissingFixtureError(f"fixture {name!r}: {path} not found")
    params = _load_json(path)
    scenario_doc = _deep_merge(params["scenario"], overrides or {})
    table = GENERATORS[params["generator"]](validate_scenario(scenario_doc), params["grid"])
    table.meta = {"scenario": scenario_doc, "grid": params["grid"]}
    return to_csv(table)


def _tolerance(tols: dict, column: str) -> tuple[float, float]:
    chosen = tols.get("columns", {}).get(column, tols.get("default", _TIGHT))
    return float(chosen.get("abs", 0.0)), float(chosen.get("rel", 0.0))


def _compare_cell(expected: str, actual: str, abs_tol: float, rel_tol: float):
    """Return (|delta|, allowed); NaN matches only NaN."""
    e, a = float(expected), float(actual)
    if math.isnan(e) or math.isnan(a):
        return (0.0 if math.isnan(e) and math.isnan(a) else math.inf), 0.0
    return abs(a - e), abs_tol + rel_tol * abs(e)


def check_fixture(name: str, root=None, overrides: dict | None = None) -> FixtureResult:
    """
    Compare a fixture's golden CSV with freshly computed values.

    ``overrides`` is a partial scenario document merged into the stored one,
    e.g. ``{"noise": {"gamma_per_s": 0.55}}``.

    Raises
    ------
    MissingFixtureError
        The fixture directory or one of its three files is absent.
    """
    path = _fixture_dir(name, root)
    tols = _load_json(path / "tolerances.json")
    _, exp_head, exp_rows = parse_csv((path / "expected.csv").read_text(encoding="utf-8"))
    _, act_head, act_rows = parse_csv(render(name, root, overrides))
    if exp_head != act_head:
        return FixtureResult(name, False, (), f"header differs: {exp_head} vs {act_head}")
    if len(exp_rows) != len(act_rows):
        return FixtureResult(name, False, (), f"row count differs: {len(exp_rows)} vs {len(act_rows)}")
    keys = set(tols.get("keys", []))
    deltas = []
    for i, (er, ar) in enumerate(zip(exp_rows, act_rows)):
        for col, e, a in zip(exp_head, er, ar):
            if col in keys:
                ok = e == a
                deltas.append(CellDelta(i, col, e, a, 0.0 if ok else math.inf, 0.0, ok))
                continue
            abs_tol, rel_tol = _tolerance(tols, col)
            delta, tol = _compare_cell(e, a, abs_tol, rel_tol)
            deltas.append(CellDelta(i, col, e, a, delta, tol, delta <= tol))
    passed = all(d.ok for d in deltas)
    return FixtureResult(name, passed, tuple(deltas))


def list_fixtures(root=None) -> list[str]:
    base = fixture_root(root)
    if not base.is_dir():
        return []
    return sorted(p.name for p in base.iterdir() if (p / "params.json").is_file())


def check_all(root=None) -> list[FixtureResult]:
    """Check every fixture under ``root``; an empty directory yields an empty (passing) list."""
    return [check_fixture(name, root) for name in list_fixtures(root)]


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _reference_csv(rows: list[list]) -> str:
    header, *body = rows
    lines = [",".join(header)] + [",".join(format_cell(v) for v in r) for r in body]
    return "\n".join(lines) + "\n"


def build_fixtures(root=None, names=None, scenario: ScenarioParams | None = None) -> list[Path]:
    """Create (or rewrite) fixture directories from :data:`DEFINITIONS`."""
    base = fixture_root(root)
    doc = scenario_to_document(scenario or default_scenario())
    written = []
    for name in names or DEFINITIONS:
        definition = DEFINITIONS[name]
        path = base / name
        params = {"kind": definition["kind"], "generator": definition["generator"],
                  "scenario": doc, "grid": definition["grid"]}
        _write(path / "params.json", json.dumps(params, indent=2, sort_keys=True) + "\n")
        _write(path / "tolerances.json", json.dumps(definition["tolerances"], indent=2, sort_keys=True) + "\n")
        if definition["kind"] == "reference":
            _write(path / "expected.csv", _reference_csv(definition["expected"]))
        else:
            _write(path / "expected.csv", render(name, root))
        written.append(path)
    return written


def regenerate(name: str, root=None) -> Path:
    """Rewrite a regression fixture's expected.csv from its params.json."""
    path = fixture_root(root) / name
    params = _load_json(path / "params.json")
    if params.get("kind") == "reference":
        raise ValueError(f"fixture {name!r} holds reference values and is not regenerated")
    _write(path / "expected.csv", render(name, root))
    return path / "expected.csv"
