"""
Evaluation sweeps written as CSV tables.

Each target returns a :class:`Table`; :func:`write_csv` prefixes it with a
``# params:`` comment holding the fully resolved scenario and grids so a file
can be regenerated from itself. Numbers are written with 9 significant digits.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import EntmError
from .feasibility import dmax_closed_form, dmax_with_rotation
from .fidelity import link_budget, stored_fidelity
from .optics import capture_probability
from .params import ScenarioParams, default_scenario, scenario_to_document

FLOAT_FORMAT = "%.9g"


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list[Any]]
    meta: dict[str, Any] = field(default_factory=dict)

    def column(self, name: str) -> list[Any]:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else FLOAT_FORMAT % value
    return str(value)


def to_csv(table: Table) -> str:
    buf = io.StringIO()
    buf.write("# params: " + json.dumps(table.meta, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def write_csv(table: Table, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv(table), encoding="utf-8")
    return path


def parse_csv(text: str) -> tuple[dict, list[str], list[list[str]]]:
    """Split text written by :func:`to_csv` into (meta, header, rows of strings)."""
    lines = text.splitlines()
    meta = {}
    if lines and lines[0].startswith("# params: "):
        meta = json.loads(lines[0][len("# params: "):])
        lines = lines[1:]
    reader = list(csv.reader(lines))
    return meta, reader[0], reader[1:]


def _km_grid(start, stop, step):
    n = int(round((stop - start) / step))
    return [round(start + i * step, 9) for i in range(n + 1)]


def _base(params):
    return default_scenario() if params is None else params


def _meta(params, **grids):
    return {"scenario": scenario_to_document(params), "grid": grids}


def fig2(params: ScenarioParams | None = None, d_km=None, apertures_mm=(150, 140, 130, 120, 110, 100),
         sigmas_urad=(0.5, 0.75, 1.0)) -> Table:
    """Capture probability versus distance: by aperture without pointing error, then by pointing error."""
    base = _base(params)
    d_km = list(d_km) if d_km is not None else _km_grid(40, 150, 1)
    d = np.asarray(d_km) * 1e3
    rows = []
    for r_ap in apertures_mm:
        optics = base.replace(optics__aperture_radius=r_ap * 1e-3, optics__pointing_sigma=0.0).optics
        for dk, q in zip(d_km, capture_probability(d, optics)):
            rows.append(["aperture", r_ap, 0.0, dk, float(q)])
    r_fixed = base.optics.aperture_radius * 1e3
    for sigma in sigmas_urad:
        optics = base.replace(optics__pointing_sigma=sigma * 1e-6).optics
        for dk, q in zip(d_km, capture_probability(d, optics)):
            rows.append(["pointing", r_fixed, sigma, dk, float(q)])
    return Table("fig2", ["panel", "aperture_mm", "sigma_urad", "d_km", "q"], rows,
                 _meta(base, d_km=d_km, apertures_mm=list(apertures_mm), sigmas_urad=list(sigmas_urad)))


def fig4(params: ScenarioParams | None = None, d_km=None, qbers=(0.01, 0.02, 0.03),
         sigmas_urad=(0.0, 0.5, 0.75, 1.0)) -> Table:
    """Initial fidelity F0' and its two factors versus distance."""
    base = _base(params)
    d_km = list(d_km) if d_km is not None else _km_grid(40, 150, 1)
    rows = []
    for qber in qbers:
        for sigma in sigmas_urad:
            sc = base.replace(noise__qber=qber, optics__pointing_sigma=sigma * 1e-6)
            for dk in d_km:
                b = link_budget(dk * 1e3, sc)
                rows.append([qber, sigma, dk, b.f_rot, b.f0_loss, b.f0_prime])
    return Table("fig4", ["qber", "sigma_urad", "d_km", "f_rot", "f0_loss", "f0_prime"], rows,
                 _meta(base, d_km=d_km, qbers=list(qbers), sigmas_urad=list(sigmas_urad)))


def fig5(params: ScenarioParams | None = None, t_max=0.5, n_t=101, qbers=(0.01, 0.03),
         sigmas_urad=(0.5, 1.0), rotation_urad=(0.5, 1.0), d_km=(40.0, 45.0),
         gammas=(0.5, 1.0)) -> Table:
    """Lower and upper envelope of stored fidelity over the parameter box."""
    base = _base(params)
    t = np.linspace(0.0, t_max, n_t)
    curves = []
    for qber in qbers:
        for sigma in sigmas_urad:
            for rot in rotation_urad:
                sc = base.replace(noise__qber=qber, optics__pointing_sigma=sigma * 1e-6,
                                  orbit__rotation_sigma=rot * 1e-6)
                for dk in d_km:
                    f0 = link_budget(dk * 1e3, sc).f0_prime
                    for gamma in gammas:
                        curves.append(stored_fidelity(f0, t, gamma))
    curves = np.asarray(curves)
    rows = [[float(ti), float(lo), float(hi)]
            for ti, lo, hi in zip(t, curves.min(axis=0), curves.max(axis=0))]
    return Table("fig5", ["t_s", "f_min", "f_max"], rows,
                 _meta(base, t_max=t_max, n_t=n_t, qbers=list(qbers), sigmas_urad=list(sigmas_urad),
                       rotation_urad=list(rotation_urad), d_km=list(d_km), gammas=list(gammas)))


def fig6(params: ScenarioParams | None = None, d_km=None, qbers=(0.01, 0.02, 0.03),
         thresholds=(0.5, 0.55, 0.6), gammas=(0.5, 1.0), sigmas_urad=(0.5, 0.75, 1.0)) -> Table:
    """Cutoff time and maximum age; NaN and K = 0 where F0' < F_th."""
    base = _base(params)
    d_km = list(d_km) if d_km is not None else _km_grid(40, 50, 0.5)
    rows = []
    for qber in qbers:
        for f_th in thresholds:
            for gamma in gammas:
                for sigma in sigmas_urad:
                    sc = base.replace(noise__qber=qber, noise__fidelity_threshold=f_th,
                                      noise__damping_rate=gamma, optics__pointing_sigma=sigma * 1e-6)
                    for dk in d_km:
                        b = link_budget(dk * 1e3, sc)
                        t_cut = b.t_cutoff if b.feasible else math.nan
                        rows.append([qber, f_th, gamma, sigma, dk, b.f0_prime, b.feasible, t_cut, b.max_age])
    return Table("fig6", ["qber", "f_th", "gamma", "sigma_urad", "d_km", "f0_prime", "feasible",
                          "t_cutoff_s", "K"], rows,
                 _meta(base, d_km=d_km, qbers=list(qbers), thresholds=list(thresholds),
                       gammas=list(gammas), sigmas_urad=list(sigmas_urad)))


def _dmax_pair(sc: ScenarioParams):
    """(closed form, with rotation) in km; NaN where the respective equation has no root."""
    f_th, qber = sc.noise.fidelity_threshold, sc.noise.qber
    try:
        closed = dmax_closed_form(f_th, qber, sc.optics).d_max / 1e3
    except EntmError:
        return math.nan, math.nan
    try:
        rot = dmax_with_rotation(f_th, qber, sc.optics, sc.orbit,
                                 light_speed=sc.timing.light_speed).d_max / 1e3
    except EntmError:
        rot = math.nan
    return closed, rot


def _dmax_sweep(name, base, qbers, thresholds, apertures_mm):
    rows = []
    for qber in qbers:
        for f_th in thresholds:
            for r_ap in apertures_mm:
                sc = base.replace(noise__qber=qber, noise__fidelity_threshold=f_th,
                                  optics__aperture_radius=r_ap * 1e-3)
                closed, rot = _dmax_pair(sc)
                rows.append([qber, f_th, r_ap, closed, rot])
    return Table(name, ["qber", "f_th", "aperture_mm", "dmax_km", "dmax_rotation_km"], rows,
                 _meta(base, qbers=list(qbers), thresholds=list(thresholds),
                       apertures_mm=list(apertures_mm)))


def _grid(start, stop, step):
    return [round(x, 6) for x in _km_grid(start, stop, step)]


def dmax_fth(params: ScenarioParams | None = None, qbers=(0.01, 0.02, 0.03), thresholds=None,
             apertures_mm=(150,)) -> Table:
    """d_max versus threshold at a fixed aperture, with and without rotation."""
    thresholds = list(thresholds) if thresholds is not None else _grid(0.40, 0.70, 0.01)
    return _dmax_sweep("dmax_fth", _base(params), qbers, thresholds, apertures_mm)


def dmax_rap(params: ScenarioParams | None = None, qbers=(0.01, 0.02, 0.03), thresholds=None,
             apertures_mm=None) -> Table:
    """d_max versus aperture radius for thresholds 0.50..0.62."""
    thresholds = list(thresholds) if thresholds is not None else _grid(0.50, 0.62, 0.02)
    apertures_mm = list(apertures_mm) if apertures_mm is not None else _grid(100, 150, 5)
    return _dmax_sweep("dmax_rap", _base(params), qbers, thresholds, apertures_mm)


def table3(params: ScenarioParams | None = None, qbers=(0.01, 0.02, 0.03), thresholds=None,
           apertures_mm=(100, 110, 120, 130, 140, 150)) -> Table:
    """
    Per QBER: mean and max |d_max - d_max,rot| (km) and mean relative difference (%)
    over the threshold x aperture grid, counting only points where both roots exist.
    """
    base = _base(params)
    thresholds = list(thresholds) if thresholds is not None else _grid(0.50, 0.62, 0.01)
    rows = []
    for qber in qbers:
        diffs, rel = [], []
        for f_th in thresholds:
            for r_ap in apertures_mm:
                sc = base.replace(noise__qber=qber, noise__fidelity_threshold=f_th,
                                  optics__aperture_radius=r_ap * 1e-3)
                closed, rot = _dmax_pair(sc)
                if math.isnan(closed) or math.isnan(rot):
                    continue
                diffs.append(abs(closed - rot))
                rel.append(abs(closed - rot) / closed * 100.0)
        if diffs:
            rows.append([qber, float(np.mean(diffs)), float(np.max(diffs)), float(np.mean(rel)), len(diffs)])
        else:
            rows.append([qber, math.nan, math.nan, math.nan, 0])
    return Table("table3", ["qber", "mean_diff_km", "max_diff_km", "relative_diff_pct", "n_points"], rows,
                 _meta(base, qbers=list(qbers), thresholds=thresholds, apertures_mm=list(apertures_mm)))


TARGETS: dict[str, Callable[..., Table]] = {
    "fig2": fig2,
    "fig4": fig4,
    "fig5": fig5,
    "fig6": fig6,
    "table3": table3,
    "dmax_fth": dmax_fth,
    "dmax_rap": dmax_rap,
}


def reproduce(target: str, out_dir: str | Path, params: ScenarioParams | None = None) -> list[Path]:
    """Write ``<out_dir>/<target>.csv`` (``all`` writes every target)."""
    names = list(TARGETS) if target == "all" else [target]
    unknown = [n for n in names if n not in TARGETS]
    if unknown:
        raise KeyError(f"unknown target {unknown[0]!r}; choose from {', '.join(TARGETS)} or all")
    return [write_csv(TARGETS[n](params), Path(out_dir) / f"{n}.csv") for n in names]
