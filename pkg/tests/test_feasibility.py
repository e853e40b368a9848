import math

import mpmath
import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings, strategies as st

from entm.errors import InfeasibleLinkError, NoRootInBracketError, NotAchievableError
from entm.feasibility import (bisect_decreasing, dmax_closed_form, dmax_feasible, dmax_link_model,
                              dmax_with_rotation, fidelity_qualifies, max_threshold_for_range,
                              min_aperture_for_range)
from entm.fidelity import initial_fidelity, loss_fidelity
from entm.optics import transmittance_ideal
from entm.params import LIGHT_SPEED, OpticsParams, default_scenario
from entm.polarization import expected_rotation_fidelity, systematic_rotation


@pytest.fixture
def sc():
    return default_scenario()


def _far_field_residual(d, f_th, qber, optics):
    eta = 1 - math.exp(-2 * optics.aperture_radius**2 / (optics.divergence_half_angle * d) ** 2)
    return (eta + (1 - eta) * qber) / (1 + 3 * (1 - eta) * qber) - f_th


def test_closed_form_default(sc):
    assert dmax_closed_form(0.5, 0.01, sc.optics).d_max / 1e3 == pytest.approx(50.78, abs=0.01)


@pytest.mark.parametrize("f_th, qber, r_ap", [(0.5, 0.01, 0.15), (0.55, 0.03, 0.1), (0.62, 0.02, 0.13),
                                              (0.4, 0.0, 0.12)])
def test_closed_form_is_root_of_fidelity_equation(f_th, qber, r_ap):
    optics = OpticsParams(810e-9, 5e-6, r_ap, 0.0)
    ref = scipy.optimize.brentq(_far_field_residual, 1e3, 1e6, args=(f_th, qber, optics), xtol=1e-9, rtol=1e-15)
    result = dmax_closed_form(f_th, qber, optics)
    assert result.d_max == pytest.approx(ref, rel=1e-10)
    assert result.residual < 1e-12


@settings(max_examples=50)
@given(st.floats(0.35, 0.9), st.floats(0.0, 0.1), st.floats(0.05, 0.3), st.floats(1.1, 4.0))
def test_closed_form_scales_with_aperture_and_divergence(f_th, qber, r_ap, factor):
    base = OpticsParams(810e-9, 5e-6, r_ap, 0.0)
    wide = OpticsParams(810e-9, 5e-6, r_ap * factor, 0.0)
    narrow = OpticsParams(810e-9, 5e-6 / factor, r_ap, 0.0)
    d = dmax_closed_form(f_th, qber, base).d_max
    assert dmax_closed_form(f_th, qber, wide).d_max == pytest.approx(d * factor, rel=1e-12)
    assert dmax_closed_form(f_th, qber, narrow).d_max == pytest.approx(d * factor, rel=1e-12)


def test_feasibility_conditions():
    assert dmax_feasible(0.5, 0.03).feasible
    assert not dmax_feasible(0.2, 0.6).feasible  # QBER >= F_th/(1-3F_th) = 0.5
    assert dmax_feasible(0.2, 0.4).feasible
    assert not dmax_feasible(1.0, 0.01).feasible
    with pytest.raises(InfeasibleLinkError):
        dmax_closed_form(0.2, 0.6, default_scenario().optics)


def test_rotation_route_default(sc):
    rot = dmax_with_rotation(0.5, 0.01, sc.optics, sc.orbit)
    assert rot.d_max / 1e3 == pytest.approx(50.776952, abs=1e-4)
    assert rot.residual <= 1e-12


def _mp_dmax_pair(f_th, qber, optics, orbit, digits=50):
    # Both roots in 50-digit arithmetic, independent of the float code paths.
    mpmath.mp.dps = digits
    f_th, qber = mpmath.mpf(f_th), mpmath.mpf(qber)
    r, theta = mpmath.mpf(optics.aperture_radius), mpmath.mpf(optics.divergence_half_angle)
    v, h, re = mpmath.mpf(orbit.sat_speed), mpmath.mpf(orbit.altitude), mpmath.mpf(orbit.earth_radius)
    sig, c = mpmath.mpf(orbit.rotation_sigma), mpmath.mpf(LIGHT_SPEED)

    def f_loss(d):
        eta = 1 - mpmath.exp(-2 * r**2 / (theta * d) ** 2)
        return (eta + (1 - eta) * qber) / (1 + 3 * (1 - eta) * qber)

    def f_rot(d):
        return (1 + mpmath.cos(2 * v * d / c / (re + h)) * mpmath.exp(-2 * sig**2)) / 2

    closed = mpmath.findroot(lambda d: f_loss(d) - f_th, mpmath.mpf(5e4))
    rotated = mpmath.findroot(lambda d: f_rot(d) * f_loss(d) - f_th, closed)
    return closed, rotated


def test_routes_agree_with_high_precision(sc):
    closed_mp, rot_mp = _mp_dmax_pair(0.5, 0.01, sc.optics, sc.orbit)
    closed = dmax_closed_form(0.5, 0.01, sc.optics).d_max
    rot = dmax_with_rotation(0.5, 0.01, sc.optics, sc.orbit).d_max
    assert closed == pytest.approx(float(closed_mp), rel=1e-13)
    assert rot == pytest.approx(float(rot_mp), rel=1e-13)
    # The rotation correction is tiny; both routes see it at the same size.
    gap_mp = float((closed_mp - rot_mp) / closed_mp)
    assert 0 < gap_mp < 1e-8
    assert abs(closed - rot) / closed == pytest.approx(gap_mp, rel=0.05)


def test_rotation_never_extends_range(sc):
    for f_th in (0.45, 0.5, 0.55, 0.6):
        for qber in (0.01, 0.03):
            assert (dmax_with_rotation(f_th, qber, sc.optics, sc.orbit).d_max
                    <= dmax_closed_form(f_th, qber, sc.optics).d_max * (1 + 1e-15))


def test_link_model_threshold_consistency(sc):
    d = dmax_link_model(sc).d_max
    assert d / 1e3 == pytest.approx(48.31, abs=0.01)
    assert fidelity_qualifies(d - 1.0, sc) == 1
    assert fidelity_qualifies(d + 1.0, sc) == 0
    assert float(initial_fidelity(d, sc)) == pytest.approx(0.5, abs=1e-12)


def test_bisect_decreasing():
    root, res, it = bisect_decreasing(lambda x: 2.0 - x, 0.0, 10.0)
    assert root == 2.0 and res == 0.0
    root, res, it = bisect_decreasing(lambda x: math.cos(x), 0.0, 3.0)
    assert root == pytest.approx(math.pi / 2, abs=1e-15) and it > 40
    with pytest.raises(NoRootInBracketError):
        bisect_decreasing(lambda x: x, 1.0, 2.0)


def test_min_aperture(sc):
    grid = [r * 1e-3 for r in range(100, 151, 10)]
    assert min_aperture_for_range(40e3, 0.5, 0.01, grid, sc.optics) == pytest.approx(0.12)
    with pytest.raises(NotAchievableError):
        min_aperture_for_range(500e3, 0.5, 0.01, grid, sc.optics)
    with pytest.raises(ValueError):
        min_aperture_for_range(40e3, 0.5, 0.01, [], sc.optics)
    with pytest.raises(ValueError):
        min_aperture_for_range(40e3, 0.5, 0.01, grid[::-1], sc.optics)


def test_max_threshold(sc):
    grid = [round(0.3 + 0.01 * i, 2) for i in range(61)]
    best = max_threshold_for_range(40e3, sc, grid)
    assert best == pytest.approx(0.62)
    assert best <= float(initial_fidelity(40e3, sc)) < best + 0.01
    with pytest.raises(NotAchievableError):
        max_threshold_for_range(40e3, sc, [0.8, 0.9])


@settings(max_examples=30)
@given(st.floats(0.4, 0.7), st.floats(0.0, 0.05))
def test_rotation_residual_sign(f_th, qber):
    sc = default_scenario()
    d = dmax_with_rotation(f_th, qber, sc.optics, sc.orbit).d_max
    t = d / LIGHT_SPEED
    rot = float(expected_rotation_fidelity(systematic_rotation(t, sc.orbit), sc.orbit.rotation_sigma))
    below = rot * float(loss_fidelity(transmittance_ideal(d * (1 - 1e-9), sc.optics, "far_field"), qber))
    above = rot * float(loss_fidelity(transmittance_ideal(d * (1 + 1e-9), sc.optics, "far_field"), qber))
    assert below >= f_th - 1e-15 and above <= f_th + 1e-15
