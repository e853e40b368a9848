"""
Gaussian-beam link geometry between two satellites.

Spot growth, aperture transmittance, pointing-offset attenuation and the
Rayleigh-averaged capture probability. All functions accept scalars or numpy
arrays for the distance/angle argument.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .params import OpticsParams, beam_waist

SpotMode = Literal["exact", "far_field"]
SPOT_MODES = ("exact", "far_field")


def _check_mode(mode):
    if mode not in SPOT_MODES:
        raise ValueError(f"unknown spot mode {mode!r}; expected one of {SPOT_MODES}")


def rayleigh_length(optics: OpticsParams) -> float:
    """Distance at which the spot area has doubled, pi W0^2 / wavelength."""
    w0 = beam_waist(optics)
    return np.pi * w0 * w0 / optics.wavelength


def spot_radius(d, optics: OpticsParams, mode: SpotMode = "exact"):
    """
    Beam radius W(d) at the receiving plane.

    ``exact`` is the full Gaussian expression W0*sqrt(1 + (d/d_R)^2);
    ``far_field`` is the linear asymptote wavelength*d/(pi*W0) = theta*d.
    """
    _check_mode(mode)
    d = np.asarray(d, dtype=float)
    w0 = beam_waist(optics)
    if mode == "far_field":
        return optics.wavelength * d / (np.pi * w0)
    return w0 * np.sqrt(1.0 + (optics.wavelength * d / (np.pi * w0 * w0)) ** 2)


@dataclass(frozen=True)
class BeamGeometry:
    spot_radius: float
    rayleigh_length: float
    divergence: float


def beam_geometry(d, optics: OpticsParams, mode: SpotMode = "exact") -> BeamGeometry:
    return BeamGeometry(
        spot_radius=float(spot_radius(d, optics, mode)),
        rayleigh_length=float(rayleigh_length(optics)),
        divergence=optics.divergence_half_angle,
    )


def transmittance_ideal(d, optics: OpticsParams, mode: SpotMode = "exact"):
    """Fraction of a centred beam collected by the aperture, 1 - exp(-2 R^2 / W^2)."""
    w = spot_radius(d, optics, mode)
    return -np.expm1(-2.0 * optics.aperture_radius**2 / w**2)


def offset_attenuation(d, delta, optics: OpticsParams, mode: SpotMode = "exact"):
    """
    Relative intensity seen by an aperture whose centre is d*delta off axis.

    Uses the locally-uniform intensity approximation (aperture much smaller
    than the spot), so no overlap integral is taken.
    """
    w = spot_radius(d, optics, mode)
    offset = np.asarray(d, dtype=float) * np.asarray(delta, dtype=float)
    return np.exp(-2.0 * offset**2 / w**2)


def pointing_pdf(delta, sigma):
    """Rayleigh density of the pointing-error magnitude."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    delta = np.asarray(delta, dtype=float)
    pdf = delta / sigma**2 * np.exp(-(delta**2) / (2.0 * sigma**2))
    return np.where(delta >= 0, pdf, 0.0)


def attenuation_factor(d, optics: OpticsParams, mode: SpotMode = "exact"):
    """
    beta = 4 d^2 sigma^2 / W(d)^2.

    In far-field mode W = theta*d and this collapses to the distance-free
    constant 4 sigma^2 / theta^2.
    """
    _check_mode(mode)
    d = np.asarray(d, dtype=float)
    if mode == "far_field":
        return np.full_like(d, 4.0 * optics.pointing_sigma**2 / optics.divergence_half_angle**2)
    w = spot_radius(d, optics, mode)
    return 4.0 * d**2 * optics.pointing_sigma**2 / w**2


def transmittance_avg(d, optics: OpticsParams, mode: SpotMode = "exact"):
    """Transmittance averaged over Rayleigh pointing error, eta / (1 + beta)."""
    return transmittance_ideal(d, optics, mode) / (1.0 + attenuation_factor(d, optics, mode))


def capture_probability(d, optics: OpticsParams, mode: SpotMode = "exact"):
    """Single-photon capture probability q; equals the ideal transmittance when sigma = 0."""
    return transmittance_avg(d, optics, mode)


@dataclass(frozen=True)
class ChannelTransmittance:
    eta_ideal: float
    beta: float
    eta_avg: float
    q_ideal: float
    q_error: float


def channel_transmittance(d, optics: OpticsParams, mode: SpotMode = "exact") -> ChannelTransmittance:
    eta = float(transmittance_ideal(d, optics, mode))
    beta = float(attenuation_factor(d, optics, mode))
    avg = eta / (1.0 + beta)
    return ChannelTransmittance(eta_ideal=eta, beta=beta, eta_avg=avg, q_ideal=eta, q_error=avg)
