import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings, strategies as st

from entm.optics import (attenuation_factor, capture_probability, offset_attenuation, pointing_pdf,
                         rayleigh_length, spot_radius, transmittance_avg, transmittance_ideal)
from entm.params import OpticsParams, beam_waist, default_scenario


@pytest.fixture
def optics():
    return default_scenario().optics


def test_spot_radius_landmarks(optics):
    w0 = beam_waist(optics)
    assert float(spot_radius(0.0, optics)) == pytest.approx(w0, rel=1e-15)
    assert float(spot_radius(rayleigh_length(optics), optics)) == pytest.approx(w0 * math.sqrt(2), rel=1e-14)
    # Equivalent form W0^2 + (theta d)^2 under W0 = wavelength / (pi theta).
    expected = math.hypot(w0, optics.divergence_half_angle * 40e3)
    assert float(spot_radius(40e3, optics)) == pytest.approx(expected, rel=1e-14)
    # Far-field is the linear asymptote theta * d.
    assert float(spot_radius(40e3, optics, "far_field")) == pytest.approx(0.2, rel=1e-14)


def test_rayleigh_length(optics):
    assert rayleigh_length(optics) == pytest.approx(1.031e4, rel=1e-3)
    wide = OpticsParams(optics.wavelength, optics.divergence_half_angle / 4, 0.15, 0.0)
    assert rayleigh_length(wide) == pytest.approx(16 * rayleigh_length(optics), rel=1e-12)
    theta = 1e-6
    unit = OpticsParams(math.pi * theta**2, theta, 0.1, 0.0)  # W0^2 = wavelength / pi
    assert rayleigh_length(unit) == pytest.approx(1.0, rel=1e-12)


def test_transmittance_limits(optics):
    huge = OpticsParams(optics.wavelength, optics.divergence_half_angle, 100.0, 0.0)
    assert float(transmittance_ideal(40e3, huge)) == pytest.approx(1.0)
    assert float(transmittance_ideal(1e12, optics)) < 1e-9
    assert float(transmittance_ideal(40e3, optics)) == pytest.approx(0.6527, abs=0.002)


def test_offset_attenuation(optics):
    d = 40e3
    assert float(offset_attenuation(d, 0.0, optics)) == 1.0
    w = float(spot_radius(d, optics))
    assert float(offset_attenuation(d, w / d, optics)) == pytest.approx(math.exp(-2), rel=1e-14)
    vals = offset_attenuation(d, np.linspace(0, 5e-6, 50), optics)
    assert np.all(np.diff(vals) < 0)


def test_pointing_pdf_moments():
    sigma = 0.7e-6
    total, _ = scipy.integrate.quad(lambda x: float(pointing_pdf(x, sigma)), 0, 50 * sigma,
                                    epsabs=1e-13, epsrel=1e-13, points=[sigma])
    assert total == pytest.approx(1.0, abs=1e-9)
    mean, _ = scipy.integrate.quad(lambda x: x * float(pointing_pdf(x, sigma)), 0, 50 * sigma,
                                   epsabs=1e-20, epsrel=1e-12, points=[sigma])
    assert mean == pytest.approx(sigma * math.sqrt(math.pi / 2), rel=1e-9)
    grid = np.linspace(0.5 * sigma, 1.5 * sigma, 100_001)
    assert grid[np.argmax(pointing_pdf(grid, sigma))] == pytest.approx(sigma, rel=1e-4)


def test_zero_sigma_reduces_to_ideal(optics):
    ideal = OpticsParams(optics.wavelength, optics.divergence_half_angle, optics.aperture_radius, 0.0)
    d = np.linspace(40e3, 150e3, 12)
    assert np.array_equal(transmittance_avg(d, ideal), transmittance_ideal(d, ideal))
    assert np.array_equal(capture_probability(d, ideal), transmittance_ideal(d, ideal))


def _quadrature_average(d, optics):
    sigma = optics.pointing_sigma
    eta = float(transmittance_ideal(d, optics))
    val, _ = scipy.integrate.quad(
        lambda x: float(offset_attenuation(d, x, optics)) * float(pointing_pdf(x, sigma)),
        0, 40 * sigma, epsabs=1e-14, epsrel=1e-12, points=[sigma])
    return eta * val


@pytest.mark.parametrize("d_km, sigma_urad", [(40, 0.5), (40, 1.0), (75, 0.75), (120, 0.3), (150, 1.0)])
def test_pointing_average_quadrature(d_km, sigma_urad):
    optics = default_scenario(optics__pointing_sigma=sigma_urad * 1e-6).optics
    assert float(transmittance_avg(d_km * 1e3, optics)) == pytest.approx(
        _quadrature_average(d_km * 1e3, optics), rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_pointing_average_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(40e3, 150e3)
    sigma = rng.uniform(0.3e-6, 1.2e-6)
    optics = default_scenario(optics__pointing_sigma=sigma).optics
    delta = rng.rayleigh(sigma, 10**6)
    samples = float(transmittance_ideal(d, optics)) * offset_attenuation(d, delta, optics)
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(samples.mean() - float(transmittance_avg(d, optics))) <= 3 * se


def test_capture_values_at_40km(optics):
    for sigma, expected in [(0.0, 0.6527), (0.5, 0.6291), (1.0, 0.5674)]:
        o = OpticsParams(optics.wavelength, optics.divergence_half_angle, optics.aperture_radius, sigma * 1e-6)
        assert float(capture_probability(40e3, o)) == pytest.approx(expected, abs=0.002)


def test_far_field_beta_is_constant(optics):
    beta = attenuation_factor(np.array([40e3, 80e3, 150e3]), optics, "far_field")
    assert np.allclose(beta, 4 * optics.pointing_sigma**2 / optics.divergence_half_angle**2, rtol=1e-15)


def test_modes_agree_far_away(optics):
    d = 10 * rayleigh_length(optics) * np.linspace(1, 20, 40)
    exact, far = transmittance_avg(d, optics), transmittance_avg(d, optics, "far_field")
    assert np.all(np.abs(exact - far) <= 0.01 * exact)


def test_unknown_mode(optics):
    with pytest.raises(ValueError):
        spot_radius(1.0, optics, "paraxial")


def test_monotone_in_distance(optics):
    d = np.linspace(1e3, 300e3, 2000)
    assert np.all(np.diff(transmittance_ideal(d, optics)) < 0)
    assert np.all(np.diff(capture_probability(d, optics)) < 0)


@settings(max_examples=60)
@given(st.floats(1e3, 500e3), st.floats(0.0, 3e-6), st.floats(0.01, 0.5))
def test_probabilities_in_unit_interval(d, sigma, r_ap):
    o = OpticsParams(810e-9, 5e-6, r_ap, sigma)
    for f in (transmittance_ideal, transmittance_avg):
        v = float(f(d, o))
        assert 0.0 <= v <= 1.0


@settings(max_examples=40)
@given(st.floats(10e3, 200e3), st.floats(0.05e-6, 2e-6), st.floats(1.01, 3.0))
def test_decreasing_in_pointing_sigma(d, sigma, factor):
    lo = OpticsParams(810e-9, 5e-6, 0.15, sigma)
    hi = OpticsParams(810e-9, 5e-6, 0.15, sigma * factor)
    assert float(transmittance_avg(d, hi)) < float(transmittance_avg(d, lo))
