"""
Scenario parameters, unit conventions and validation.

Everything inside the library is SI (m, s, rad). Scenario documents use the
engineering units the link is usually described in (nm, urad, mm, km, ms)
and are converted exactly once, in :func:`validate_scenario`.
"""
from __future__ import annotations

import dataclasses
import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import MissingFieldError, RangeError, ScenarioError

EARTH_RADIUS = 6.371e6  # m
LIGHT_SPEED = 2.99792458e8  # m/s

# Default scenario. Wavelength, slot length and generation probability are
# modelling choices rather than measured hardware values.
DEFAULT_WAVELENGTH_NM = 810.0
DEFAULT_DIVERGENCE_URAD = 5.0
DEFAULT_APERTURE_MM = 150.0
DEFAULT_POINTING_SIGMA_URAD = 0.5
DEFAULT_V_SAT_KM_S = 7.589
DEFAULT_H_SAT_KM = 550.0
DEFAULT_ROTATION_SIGMA_URAD = 0.7
DEFAULT_QBER = 0.01
DEFAULT_GAMMA_PER_S = 0.5
DEFAULT_F_TH = 0.5
DEFAULT_P_GEN = 1.0
DEFAULT_SLOT_DT_MS = 1.0


def _check(name, ok, message):
    if not ok:
        raise RangeError(name, message)


def _finite(name, value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise RangeError(name, f"expected a number, got {value!r}") from None
    _check(name, math.isfinite(value), "must be finite")
    return value


@dataclass(frozen=True)
class OpticsParams:
    """Transmitter/receiver optics. Lengths in m, angles in rad."""

    wavelength: float
    divergence_half_angle: float
    aperture_radius: float
    pointing_sigma: float

    def __post_init__(self):
        _check("wavelength", self.wavelength > 0, "must be > 0")
        _check("divergence_half_angle", self.divergence_half_angle > 0, "must be > 0")
        _check("aperture_radius", self.aperture_radius > 0, "must be > 0")
        _check("pointing_sigma", self.pointing_sigma >= 0, "must be >= 0")

    @property
    def beam_waist(self) -> float:
        return beam_waist(self)


@dataclass(frozen=True)
class OrbitParams:
    sat_speed: float
    altitude: float
    rotation_sigma: float
    earth_radius: float = EARTH_RADIUS

    def __post_init__(self):
        # 0 is allowed so the rotation-free limit can be expressed directly.
        _check("sat_speed", self.sat_speed >= 0, "must be >= 0")
        _check("altitude", self.altitude > 0, "must be > 0")
        _check("rotation_sigma", self.rotation_sigma >= 0, "must be >= 0")
        _check("earth_radius", self.earth_radius > 0, "must be > 0")


@dataclass(frozen=True)
class NoiseParams:
    qber: float
    damping_rate: float
    fidelity_threshold: float
    gen_success: float

    def __post_init__(self):
        _check("qber", 0 <= self.qber < 1, "must lie in [0, 1)")
        # Gamma = 0 would make the cutoff time infinite and the state space unbounded.
        _check("gamma", self.damping_rate > 0, "must be > 0")
        _check("f_th", 0 < self.fidelity_threshold < 1, "must lie in (0, 1)")
        _check("p_gen", 0 < self.gen_success <= 1, "must lie in (0, 1]")


@dataclass(frozen=True)
class TimingParams:
    slot_dt: float
    light_speed: float = LIGHT_SPEED

    def __post_init__(self):
        _check("slot_dt", self.slot_dt > 0, "must be > 0")
        _check("light_speed", self.light_speed > 0, "must be > 0")


@dataclass(frozen=True)
class ScenarioParams:
    optics: OpticsParams
    orbit: OrbitParams
    noise: NoiseParams
    timing: TimingParams
    distances: tuple[float, ...]
    request_distance: float
    request_rate: float

    def __post_init__(self):
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        _check("distances_km", len(self.distances) > 0, "must be non-empty")
        _check("distances_km", all(d > 0 for d in self.distances), "must all be > 0")
        _check(
            "distances_km",
            all(a < b for a, b in zip(self.distances, self.distances[1:])),
            "must be strictly increasing",
        )
        _check("request_distance_km", self.request_distance in self.distances,
               "must be one of distances_km")
        _check("lambda", 0 <= self.request_rate <= 1, "must lie in [0, 1]")

    def replace(self, **changes) -> "ScenarioParams":
        """Copy with top-level or nested changes, e.g. ``replace(noise__qber=0.03)``."""
        nested: dict[str, dict[str, Any]] = {}
        top = {}
        for key, value in changes.items():
            if "__" in key:
                group, name = key.split("__", 1)
                nested.setdefault(group, {})[name] = value
            else:
                top[key] = value
        for group, kw in nested.items():
            top[group] = dataclasses.replace(getattr(self, group), **kw)
        return dataclasses.replace(self, **top)


def beam_waist(optics: OpticsParams) -> float:
    """Waist radius W0 = wavelength / (pi * divergence half-angle)."""
    return optics.wavelength / (math.pi * optics.divergence_half_angle)


# (section, key, SI factor, default); value_SI = value_doc * factor
_SCHEMA: dict[str, list[tuple[str, float, float | None]]] = {
    "optics": [
        ("wavelength_nm", 1e-9, DEFAULT_WAVELENGTH_NM),
        ("divergence_urad", 1e-6, DEFAULT_DIVERGENCE_URAD),
        ("aperture_mm", 1e-3, DEFAULT_APERTURE_MM),
        ("pointing_sigma_urad", 1e-6, DEFAULT_POINTING_SIGMA_URAD),
    ],
    "orbit": [
        ("v_sat_km_s", 1e3, DEFAULT_V_SAT_KM_S),
        ("h_sat_km", 1e3, DEFAULT_H_SAT_KM),
        ("rotation_sigma_urad", 1e-6, DEFAULT_ROTATION_SIGMA_URAD),
    ],
    "noise": [
        ("qber", 1.0, DEFAULT_QBER),
        ("gamma_per_s", 1.0, DEFAULT_GAMMA_PER_S),
        ("f_th", 1.0, DEFAULT_F_TH),
        ("p_gen", 1.0, DEFAULT_P_GEN),
    ],
    "timing": [
        ("slot_dt_ms", 1e-3, DEFAULT_SLOT_DT_MS),
    ],
}
_TOP_KEYS = {"distances_km", "request_distance_km", "lambda"}


def _to_si(value, factor):
    # Dividing by the reciprocal keeps e.g. 810 nm -> 8.1e-07 exactly rounded.
    return value * factor if factor >= 1 else value / round(1 / factor)


def _from_si(value, factor):
    doc = value / factor if factor >= 1 else value * round(1 / factor)
    return float(f"{doc:.15g}")


def _section(raw, name):
    section = raw.get(name, {})
    if not isinstance(section, Mapping):
        raise ScenarioError(name, "must be an object")
    known = {key for key, _, _ in _SCHEMA[name]}
    unknown = set(section) - known
    if unknown:
        raise ScenarioError(name, f"unknown keys {sorted(unknown)}")
    values = {}
    for key, factor, default in _SCHEMA[name]:
        if key in section:
            values[key] = _to_si(_finite(key, section[key]), factor)
        elif default is not None:
            values[key] = _to_si(default, factor)
        else:
            raise MissingFieldError(f"{name}.{key}", "required")
    return values


def validate_scenario(raw: Mapping | ScenarioParams) -> ScenarioParams:
    """
    Turn a parsed scenario document into validated :class:`ScenarioParams`.

    Omitted physical fields take the evaluation defaults; ``distances_km`` and
    ``lambda`` are required, ``request_distance_km`` may be omitted only when
    there is a single distance. Passing an already-built ``ScenarioParams``
    re-checks it and returns an equal copy.

    Raises
    ------
    RangeError
        A value is outside its admissible range.
    MissingFieldError
        A required field is absent.
    """
    if isinstance(raw, ScenarioParams):
        return dataclasses.replace(raw)
    if not isinstance(raw, Mapping):
        raise ScenarioError("scenario", "document must be a JSON object")
    unknown = set(raw) - _TOP_KEYS - set(_SCHEMA)
    if unknown:
        raise ScenarioError("scenario", f"unknown keys {sorted(unknown)}")

    o = _section(raw, "optics")
    r = _section(raw, "orbit")
    n = _section(raw, "noise")
    t = _section(raw, "timing")

    if "distances_km" not in raw:
        raise MissingFieldError("distances_km", "required")
    dist_raw = raw["distances_km"]
    if isinstance(dist_raw, (str, bytes)) or not hasattr(dist_raw, "__iter__"):
        raise RangeError("distances_km", "must be a list of numbers")
    distances = tuple(_to_si(_finite("distances_km", d), 1e3) for d in dist_raw)
    if "request_distance_km" in raw:
        d_new = _to_si(_finite("request_distance_km", raw["request_distance_km"]), 1e3)
    elif len(distances) == 1:
        d_new = distances[0]
    else:
        raise MissingFieldError("request_distance_km", "required when several distances are given")
    if "lambda" not in raw:
        raise MissingFieldError("lambda", "required")

    return ScenarioParams(
        optics=OpticsParams(
            wavelength=o["wavelength_nm"],
            divergence_half_angle=o["divergence_urad"],
            aperture_radius=o["aperture_mm"],
            pointing_sigma=o["pointing_sigma_urad"],
        ),
        orbit=OrbitParams(
            sat_speed=r["v_sat_km_s"],
            altitude=r["h_sat_km"],
            rotation_sigma=r["rotation_sigma_urad"],
        ),
        noise=NoiseParams(
            qber=n["qber"],
            damping_rate=n["gamma_per_s"],
            fidelity_threshold=n["f_th"],
            gen_success=n["p_gen"],
        ),
        timing=TimingParams(slot_dt=t["slot_dt_ms"]),
        distances=distances,
        request_distance=d_new,
        request_rate=_finite("lambda", raw["lambda"]),
    )


def scenario_to_document(params: ScenarioParams) -> dict[str, Any]:
    """Inverse of :func:`validate_scenario` (document units, JSON-ready)."""
    si = {
        "optics": [params.optics.wavelength, params.optics.divergence_half_angle,
                   params.optics.aperture_radius, params.optics.pointing_sigma],
        "orbit": [params.orbit.sat_speed, params.orbit.altitude, params.orbit.rotation_sigma],
        "noise": [params.noise.qber, params.noise.damping_rate,
                  params.noise.fidelity_threshold, params.noise.gen_success],
        "timing": [params.timing.slot_dt],
    }
    doc: dict[str, Any] = {}
    for section, values in si.items():
        doc[section] = {
            key: _from_si(v, factor) for (key, factor, _), v in zip(_SCHEMA[section], values)
        }
    doc["distances_km"] = [_from_si(d, 1e3) for d in params.distances]
    doc["request_distance_km"] = _from_si(params.request_distance, 1e3)
    doc["lambda"] = params.request_rate
    return doc


def load_scenario(path: str | Path) -> ScenarioParams:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError("scenario", f"invalid JSON: {exc}") from None
    return validate_scenario(raw)


def default_scenario(**overrides) -> ScenarioParams:
    """Evaluation defaults at a single 40 km link with lambda = 0.5."""
    base = validate_scenario({"distances_km": [40.0], "lambda": 0.5})
    return base.replace(**overrides) if overrides else base


__all__ = [
    "EARTH_RADIUS", "LIGHT_SPEED", "OpticsParams", "OrbitParams", "NoiseParams",
    "TimingParams", "ScenarioParams", "beam_waist", "validate_scenario",
    "scenario_to_document", "load_scenario", "default_scenario",
]
