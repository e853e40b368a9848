"""
Which distances can deliver a pair above threshold.

The closed-form d_max neglects polarization rotation and pointing error and
uses the far-field transmittance 1 - exp(-2 R^2 / (theta d)^2). With rotation
the defining equation mixes a cosine in d with an exponential in 1/d^2 and is
solved by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from .errors import InfeasibleLinkError, NoRootInBracketError, NotAchievableError
from .fidelity import initial_fidelity, loss_fidelity
from .optics import SpotMode, transmittance_ideal
from .params import LIGHT_SPEED, OpticsParams, OrbitParams, ScenarioParams
from .polarization import expected_rotation_fidelity, systematic_rotation

RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class DmaxResult:
    d_max: float | None
    method: str
    residual: float
    feasible: bool
    iterations: int = 0


class FeasibilityCheck(NamedTuple):
    feasible: bool
    reason: str


def fidelity_qualifies(d, params: ScenarioParams, mode: SpotMode = "exact") -> int:
    """P_success(d): 1 if the delivered fidelity meets the threshold, else 0."""
    return int(float(initial_fidelity(d, params, mode)) >= params.noise.fidelity_threshold)


def dmax_feasible(f_th: float, qber: float) -> FeasibilityCheck:
    """Whether the closed-form d_max is a positive real number."""
    if not 0 < f_th < 1:
        return FeasibilityCheck(False, "F_th must lie in (0, 1)")
    if qber < 0:
        return FeasibilityCheck(False, "QBER must be >= 0")
    if f_th >= 1 / 3:
        return FeasibilityCheck(True, "F_th >= 1/3: both conditions hold for any QBER >= 0")
    if qber >= 1 / (1 - 3 * f_th):
        return FeasibilityCheck(False, "logarithm argument not positive: QBER >= 1/(1-3 F_th)")
    bound = f_th / (1 - 3 * f_th)
    if qber >= bound:
        return FeasibilityCheck(
            False, f"radicand not positive: QBER must be < F_th/(1-3 F_th) = {bound:.6g}")
    return FeasibilityCheck(True, f"QBER < F_th/(1-3 F_th) = {bound:.6g}")


def _ensure_feasible(f_th, qber):
    check = dmax_feasible(f_th, qber)
    if not check.feasible:
        raise InfeasibleLinkError(check.reason)


def dmax_closed_form(f_th: float, qber: float, optics: OpticsParams) -> DmaxResult:
    _ensure_feasible(f_th, qber)
    log_arg = (1 - f_th) / (1 + qber * (3 * f_th - 1))
    theta = optics.divergence_half_angle
    d = math.sqrt(-2 * optics.aperture_radius**2 / (theta**2 * math.log(log_arg)))
    eta = float(transmittance_ideal(d, optics, "far_field"))
    residual = abs(float(loss_fidelity(eta, qber)) - f_th)
    return DmaxResult(d_max=d, method="closed_form", residual=residual, feasible=True)


def bisect_decreasing(f: Callable[[float], float], lo: float, hi: float,
                      max_iter: int = 200, xtol: float = 0.0):
    """
    Root of a function that is positive at ``lo`` and negative at ``hi``.

    Runs until the bracket can no longer be split in floating point (or is
    narrower than ``xtol``). Returns ``(root, f(root), iterations)``.
    """
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo, f_lo, 0
    if f_hi == 0:
        return hi, f_hi, 0
    if not (f_lo > 0 > f_hi):
        raise NoRootInBracketError(
            f"no sign change on [{lo:.6g}, {hi:.6g}]: f = {f_lo:.3e}, {f_hi:.3e}")
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            break
        f_mid = f(mid)
        if f_mid == 0:
            return mid, f_mid, it
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    root, f_root = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
    return root, f_root, it


def _solve(residual_fn, f_th, qber, optics, method):
    closed = dmax_closed_form(f_th, qber, optics).d_max
    root, res, it = bisect_decreasing(residual_fn, 1.0, 4.0 * closed)
    if abs(res) > RESIDUAL_TOL:
        raise NoRootInBracketError(f"bisection stalled with residual {res:.3e}")
    return DmaxResult(d_max=root, method=method, residual=abs(res), feasible=True, iterations=it)


def dmax_with_rotation(f_th: float, qber: float, optics: OpticsParams, orbit: OrbitParams,
                       mode: SpotMode = "far_field", light_speed: float = LIGHT_SPEED) -> DmaxResult:
    """
    Distance where rotation factor x loss fidelity equals F_th.

    The transmittance inside is the unpointed one, far-field by default so
    the result is directly comparable with :func:`dmax_closed_form`.
    """
    _ensure_feasible(f_th, qber)

    def residual(d):
        rot = expected_rotation_fidelity(systematic_rotation(d / light_speed, orbit),
                                         orbit.rotation_sigma)
        eta = transmittance_ideal(d, optics, mode)
        return float(rot * loss_fidelity(eta, qber)) - f_th

    return _solve(residual, f_th, qber, optics, "transcendental")


def dmax_link_model(params: ScenarioParams, mode: SpotMode = "exact") -> DmaxResult:
    """Threshold distance of the full delivered-fidelity model (pointing error and rotation)."""
    f_th, qber = params.noise.fidelity_threshold, params.noise.qber
    _ensure_feasible(f_th, qber)

    def residual(d):
        return float(initial_fidelity(d, params, mode)) - f_th

    return _solve(residual, f_th, qber, params.optics, "link_model")


def min_aperture_for_range(target_d: float, f_th: float, qber: float,
                           grid: Sequence[float], optics: OpticsParams) -> float:
    """Smallest aperture radius on ``grid`` whose closed-form d_max reaches ``target_d``."""
    if len(grid) == 0:
        raise ValueError("aperture grid is empty")
    if any(a >= b for a, b in zip(grid, grid[1:])):
        raise ValueError("aperture grid must be increasing")
    for r_ap in grid:
        candidate = OpticsParams(optics.wavelength, optics.divergence_half_angle,
                                 float(r_ap), optics.pointing_sigma)
        if dmax_closed_form(f_th, qber, candidate).d_max >= target_d:
            return float(r_ap)
    raise NotAchievableError(
        f"no aperture up to {grid[-1] * 1e3:.6g} mm reaches {target_d / 1e3:.6g} km")


def max_threshold_for_range(target_d: float, params: ScenarioParams, grid: Sequence[float],
                            mode: SpotMode = "exact") -> float:
    """
    Largest F_th on ``grid`` for which the full link model still reaches ``target_d``.

    The delivered fidelity decreases with distance, so this is the largest grid
    value not exceeding F0'(target_d).
    """
    f0 = float(initial_fidelity(target_d, params, mode))
    ok = [f for f in grid if f <= f0 and dmax_feasible(f, params.noise.qber).feasible]
    if not ok:
        raise NotAchievableError(f"F0'({target_d / 1e3:.6g} km) = {f0:.6g} is below every grid value")
    return float(max(ok))
