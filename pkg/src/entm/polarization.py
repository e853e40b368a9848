"""Polarization rotation picked up by the flying photon, and its cost in fidelity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import OrbitParams


def systematic_rotation(t, orbit: OrbitParams):
    """Orbit-driven rotation angle after time ``t``: v_sat * t / (R_E + h_sat)."""
    return orbit.sat_speed * np.asarray(t, dtype=float) / (orbit.earth_radius + orbit.altitude)


@dataclass(frozen=True)
class PolarizationAmplitudes:
    amp_h: complex
    amp_v: complex

    def __post_init__(self):
        norm = abs(self.amp_h) ** 2 + abs(self.amp_v) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"amplitudes not normalized (|a|^2 = {norm!r})")


def apply_propagation_rotation(state: PolarizationAmplitudes, angle: float) -> PolarizationAmplitudes:
    """Rotate (amp_H, amp_V) about the propagation axis by ``angle``."""
    c, s = np.cos(angle), np.sin(angle)
    return PolarizationAmplitudes(
        amp_h=complex(c * state.amp_h - s * state.amp_v),
        amp_v=complex(s * state.amp_h + c * state.amp_v),
    )


def rotated_bell_fidelity(angle):
    """Overlap of Phi+ with Phi+ after one photon is rotated by ``angle``: cos^2."""
    return np.cos(angle) ** 2


def expected_rotation_fidelity(systematic_angle, sigma_rotation):
    """
    Mean of cos^2(systematic + jitter) with jitter ~ N(0, sigma^2).

    Closed form 0.5 * (1 + cos(2 systematic) * exp(-2 sigma^2)); angles in rad.
    """
    if np.any(np.asarray(sigma_rotation) < 0):
        raise ValueError("sigma_rotation must be >= 0")
    systematic_angle = np.asarray(systematic_angle, dtype=float)
    return 0.5 * (1.0 + np.cos(2.0 * systematic_angle) * np.exp(-2.0 * np.square(sigma_rotation)))


@dataclass(frozen=True)
class RotationModel:
    systematic_angle: float
    jitter_sigma: float

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")

    @classmethod
    def for_flight_time(cls, t: float, orbit: OrbitParams) -> "RotationModel":
        return cls(float(systematic_rotation(t, orbit)), orbit.rotation_sigma)

    def expected_fidelity(self) -> float:
        return float(expected_rotation_fidelity(self.systematic_angle, self.jitter_sigma))
