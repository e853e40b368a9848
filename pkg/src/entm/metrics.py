"""
Closed-form performance metrics of the two-node chain.

Satisfaction rate and waiting time need the chain's no-link probability;
utilization, consumption age and consumed fidelity only depend on the
truncated-geometric lifetime of a stored link (consumed at age k with
probability lambda (1 - lambda)^(k-1), k = 1..K).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateGenerationError, InfeasibleLinkError
from .feasibility import fidelity_qualifies
from .fidelity import AgeConvention, link_budget
from .markov import (StateSpace, build_state_space, cold_start, evolve, no_link_probability,
                     steady_state, transition_matrix)
from .optics import SpotMode, capture_probability
from .params import ScenarioParams


def _log_survive(lam: float) -> float:
    """log(1 - lambda); -inf at lambda = 1."""
    return -math.inf if lam >= 1 else math.log1p(-lam)


def _one_minus_pow(log_x: float, k: int) -> float:
    """1 - x^k from log x, without cancellation for x near 1."""
    if log_x == -math.inf:
        return 1.0
    return -math.expm1(k * log_x)


def _check_rate(lam, allow_zero):
    lo_ok = lam >= 0 if allow_zero else lam > 0
    if not (lo_ok and lam <= 1):
        raise ValueError(f"lambda must lie in {'[0' if allow_zero else '(0'}, 1], got {lam!r}")


def _check_k(k):
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k!r}")


def link_p_prime(d_new: float, params: ScenarioParams, mode: SpotMode = "exact") -> float:
    """End-to-end per-attempt success p * q(d_new) * P_success(d_new)."""
    q = float(capture_probability(d_new, params.optics, mode))
    return params.noise.gen_success * q * fidelity_qualifies(d_new, params, mode)


def no_link_series(space: StateSpace, T: np.ndarray, steps: int, p0=None, d_new=None) -> np.ndarray:
    """P0(t) for t = 0..steps (cold start at ``d_new`` unless ``p0`` is given)."""
    if p0 is None:
        p0 = cold_start(space, space.distances[0] if d_new is None else d_new)
    traj = evolve(p0, T, steps)
    return traj[:, space.no_link_indices()].sum(axis=1)


def satisfaction_rate(t: int, d_new: float, p_prime: float, space: StateSpace, T: np.ndarray,
                      p0=None) -> float:
    """R(t) = 1 - P0(t) (1 - p') for a request meeting the distribution P(t)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    p0_t = float(no_link_series(space, T, t, p0, d_new)[t])
    return 1.0 - p0_t * (1.0 - p_prime)


def avg_satisfaction_rate(window: int, d_new: float, p_prime: float, space: StateSpace,
                          T: np.ndarray, p0=None) -> float:
    """Mean of R(t) over t = 1..window."""
    if window < 1:
        raise ValueError("window must be >= 1")
    series = no_link_series(space, T, window, p0, d_new)[1:]
    return 1.0 - (1.0 - p_prime) * float(series.mean())


def steady_satisfaction_rate(p_prime: float, space: StateSpace, T: np.ndarray) -> float:
    return 1.0 - no_link_probability(steady_state(T), space) * (1.0 - p_prime)


def expected_waiting_time(p_prime: float, slot_dt: float, space: StateSpace, T: np.ndarray) -> float:
    """E[W] = P0(inf) dt / p' (geometric retries, one per slot)."""
    if p_prime <= 0:
        raise DegenerateGenerationError("p' = 0: a request finding no link is never served")
    return no_link_probability(steady_state(T), space) * slot_dt / p_prime


def utilization(lam: float, k: int) -> float:
    """Fraction of stored links consumed before expiry, 1 - (1 - lambda)^K."""
    _check_rate(lam, allow_zero=True)
    _check_k(k)
    return _one_minus_pow(_log_survive(lam), k)


def expected_consumption_age(lam: float, k: int, slot_dt: float) -> float:
    """
    Mean age (seconds) of a link at the moment a request consumes it.

    Mean of a geometric law truncated to 1..K:
    1/lambda - K x^K / (1 - x^K), x = 1 - lambda. For lambda K below 1e-6 the
    two-term expansion (K + 1)/2 - lambda (K^2 - 1)/12 is used instead.
    """
    _check_rate(lam, allow_zero=False)
    _check_k(k)
    if lam * k < 1e-6:
        slots = (k + 1) / 2 - lam * (k * k - 1) / 12
    else:
        log_x = _log_survive(lam)
        tail = _one_minus_pow(log_x, k)
        x_k = 0.0 if log_x == -math.inf else math.exp(k * log_x)
        slots = 1.0 / lam - k * x_k / tail
    return slots * slot_dt


def consumed_fidelity_ratio(lam: float, k: int, slot_dt: float, gamma: float) -> tuple[float, float]:
    """Return ``(ratio, iota)`` with E[F_consumed] = F0' * ratio."""
    decay = math.exp(-2.0 * gamma * slot_dt)
    log_x = _log_survive(lam)
    log_iota = log_x - 2.0 * gamma * slot_dt
    iota = 0.0 if log_iota == -math.inf else math.exp(log_iota)
    consumed = _one_minus_pow(log_x, k)
    if log_iota == 0.0:
        return decay * lam * k / consumed, iota
    # Two well-scaled quotients; the plain product of denominators underflows for tiny lambda.
    ratio = decay * (lam / consumed) * (_one_minus_pow(log_iota, k) / -math.expm1(log_iota))
    return ratio, iota


def expected_consumed_fidelity(lam: float, k: int, slot_dt: float, gamma: float,
                               f0_prime: float) -> float:
    """
    Mean fidelity of consumed links,
    F0' e^{-2 gamma dt} lambda (1 - iota^K) / ((1 - (1 - lambda)^K)(1 - iota)),
    iota = (1 - lambda) e^{-2 gamma dt}; the iota = 1 limit is handled analytically.
    """
    _check_rate(lam, allow_zero=False)
    _check_k(k)
    ratio, _ = consumed_fidelity_ratio(lam, k, slot_dt, gamma)
    return f0_prime * ratio


@dataclass(frozen=True)
class MetricsReport:
    lam: float
    p_prime: float
    max_age: int
    convention: str
    window: int
    satisfaction_rate_at: float
    avg_satisfaction: float
    steady_satisfaction: float
    expected_wait: float
    utilization: float
    expected_age: float
    expected_consumed_fidelity: float
    iota: float
    f0_prime: float

    def as_dict(self) -> dict:
        return asdict(self)


def chain_metrics(space: StateSpace, d_new: float, p_prime: float, lam: float, slot_dt: float,
                  gamma: float, f0_prime: float, window: int = 1000,
                  convention: str = "storage_budget") -> MetricsReport:
    """Metrics for an explicit chain (state space, p', lambda) and link constants."""
    if window < 1:
        raise ValueError("window must be >= 1")
    k = space.max_ages[space.distance_index(d_new)]
    T = transition_matrix(space, d_new, p_prime, lam)
    series = no_link_series(space, T, window, d_new=d_new)
    pi0 = no_link_probability(steady_state(T), space)
    if lam > 0:
        age = expected_consumption_age(lam, k, slot_dt)
        ratio, iota = consumed_fidelity_ratio(lam, k, slot_dt, gamma)
        fid = f0_prime * ratio
    else:
        age = fid = math.nan
        iota = math.exp(-2.0 * gamma * slot_dt)
    return MetricsReport(
        lam=lam,
        p_prime=p_prime,
        max_age=k,
        convention=convention,
        window=window,
        satisfaction_rate_at=1.0 - float(series[window]) * (1.0 - p_prime),
        avg_satisfaction=1.0 - (1.0 - p_prime) * float(series[1:].mean()),
        steady_satisfaction=1.0 - pi0 * (1.0 - p_prime),
        expected_wait=pi0 * slot_dt / p_prime if p_prime > 0 else math.inf,
        utilization=utilization(lam, k),
        expected_age=age,
        expected_consumed_fidelity=fid,
        iota=iota,
        f0_prime=f0_prime,
    )


def analyze(params: ScenarioParams, window: int = 1000, lam: float | None = None,
            mode: SpotMode = "exact", convention: AgeConvention = "storage_budget") -> MetricsReport:
    """
    All metrics for the scenario's request distance.

    ``window`` is the averaging horizon (slots) for the transient
    satisfaction rate. Quantities undefined at lambda = 0 are NaN; the
    waiting time is infinite when p' = 0.
    """
    lam = params.request_rate if lam is None else lam
    d_new = params.request_distance
    budget = link_budget(d_new, params, mode, convention)
    if not budget.feasible or budget.max_age < 1:
        raise InfeasibleLinkError(
            f"no storable link at {d_new / 1e3:.6g} km (F0' = {budget.f0_prime:.6g}, K = {budget.max_age})")
    space = build_state_space(params, mode, convention)
    return chain_metrics(space, d_new, link_p_prime(d_new, params, mode), lam, params.timing.slot_dt,
                         params.noise.damping_rate, budget.f0_prime, window, convention)
