"""
Fidelity budget of a freshly delivered EPR pair and its decay in memory.

Initial fidelity combines loss/QBER and the expected polarization-rotation
factor; storage decay is amplitude damping on both qubits. The cutoff time and
the discrete maximum storage age K follow from requiring the stored fidelity
to stay at or above the application threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import InfeasibleLinkError
from .optics import SpotMode, channel_transmittance, transmittance_avg
from .params import ScenarioParams
from .polarization import expected_rotation_fidelity, systematic_rotation

AgeConvention = Literal["storage_budget", "lifetime_floor"]
AGE_CONVENTIONS = ("storage_budget", "lifetime_floor")
DecayModel = Literal["survival", "werner"]


def loss_fidelity(eta, qber):
    """Bell-state fidelity after a channel of transmittance ``eta`` with error rate ``qber``."""
    eta = np.asarray(eta, dtype=float)
    lost = 1.0 - eta
    return (eta + lost * qber) / (1.0 + 3.0 * lost * qber)


def transmission_time(d, light_speed: float):
    return np.asarray(d, dtype=float) / light_speed


def rotation_fidelity(d, params: ScenarioParams):
    """Expected rotation factor for a photon in flight over distance ``d``."""
    t = transmission_time(d, params.timing.light_speed)
    return expected_rotation_fidelity(systematic_rotation(t, params.orbit), params.orbit.rotation_sigma)


def initial_fidelity(d, params: ScenarioParams, mode: SpotMode = "exact"):
    """
    F0' at distance ``d``: rotation factor times loss fidelity.

    The transmittance fed to the loss fidelity is the pointing-averaged one,
    which reduces to the ideal transmittance when the pointing sigma is 0.
    """
    eta = transmittance_avg(d, params.optics, mode)
    return rotation_fidelity(d, params) * loss_fidelity(eta, params.noise.qber)


def damping_probability(t, gamma):
    """alpha(t) = 1 - exp(-gamma t)."""
    return -np.expm1(-gamma * np.asarray(t, dtype=float))


def survival_probability(t, gamma):
    """Both qubits undamped after ``t``: exp(-2 gamma t)."""
    return np.exp(-2.0 * gamma * np.asarray(t, dtype=float))


def stored_fidelity(f0_prime, t_store, gamma, model: DecayModel = "survival"):
    """
    Fidelity after ``t_store`` seconds in memory.

    ``survival`` (default) is F0' * exp(-2 gamma t). ``werner`` is the
    alternative (1 + (2 F0' - 1) exp(-4 gamma t)) / 2, kept for comparison
    only; no metric uses it.
    """
    t_store = np.asarray(t_store, dtype=float)
    if model == "survival":
        return f0_prime * survival_probability(t_store, gamma)
    if model == "werner":
        return 0.5 * (1.0 + (2.0 * f0_prime - 1.0) * np.exp(-4.0 * gamma * t_store))
    raise ValueError(f"unknown decay model {model!r}")


def _require_feasible(f0_prime, f_th):
    if f0_prime < f_th:
        raise InfeasibleLinkError(
            f"F0' = {f0_prime:.6g} < F_th = {f_th:.6g}: fidelity below threshold on arrival"
        )


def storage_budget(f0_prime: float, gamma: float, f_th: float) -> float:
    """Longest storage time keeping F0' exp(-2 gamma t) >= F_th."""
    _require_feasible(f0_prime, f_th)
    if gamma == 0:
        return math.inf
    return math.log(f0_prime / f_th) / (2.0 * gamma)


def cutoff_time(d: float, f0_prime: float, gamma: float, f_th: float,
                light_speed: float = 2.99792458e8) -> float:
    """Maximum pair lifetime including flight time, d/c + ln(F0'/F_th) / (2 gamma)."""
    return float(d) / light_speed + storage_budget(f0_prime, gamma, f_th)


def max_age(d: float, f0_prime: float, gamma: float, f_th: float, slot_dt: float,
            convention: AgeConvention = "storage_budget",
            light_speed: float = 2.99792458e8) -> int:
    """
    Discrete maximum storage age K.

    ``storage_budget`` floors the storage time alone; ``lifetime_floor`` floors
    the whole lifetime (flight time included), as the formula is printed.
    The storage-budget value is nudged by at most one slot so that
    ``stored_fidelity(F0', K dt) >= F_th > stored_fidelity(F0', (K+1) dt)``
    holds exactly in floating point.
    """
    if convention not in AGE_CONVENTIONS:
        raise ValueError(f"unknown age convention {convention!r}")
    budget = storage_budget(f0_prime, gamma, f_th)
    if math.isinf(budget):
        raise InfeasibleLinkError("no decay: storage age is unbounded")
    if convention == "lifetime_floor":
        return int(math.floor((float(d) / light_speed + budget) / slot_dt))

    k = int(math.floor(budget / slot_dt))
    while k > 0 and stored_fidelity(f0_prime, k * slot_dt, gamma) < f_th:
        k -= 1
    while stored_fidelity(f0_prime, (k + 1) * slot_dt, gamma) >= f_th:
        k += 1
    return k


@dataclass(frozen=True)
class LinkBudget:
    """Every derived per-distance quantity; cutoff/K are None when infeasible."""

    distance: float
    eta_ideal: float
    beta: float
    eta_eff: float
    q: float
    f_rot: float
    f0_loss: float
    f0_prime: float
    t_trans: float
    t_cutoff: float | None
    max_age: int
    feasible: bool
    convention: str

    def as_dict(self) -> dict:
        return {
            "distance_km": self.distance / 1e3,
            "eta": self.eta_ideal,
            "beta": self.beta,
            "eta_eff": self.eta_eff,
            "q": self.q,
            "f_rot": self.f_rot,
            "f0_loss": self.f0_loss,
            "f0_prime": self.f0_prime,
            "t_trans_s": self.t_trans,
            "t_cutoff_s": self.t_cutoff,
            "K": self.max_age,
            "feasible": self.feasible,
            "convention": self.convention,
        }


def link_budget(d: float, params: ScenarioParams, mode: SpotMode = "exact",
                convention: AgeConvention = "storage_budget") -> LinkBudget:
    """Evaluate the whole per-distance chain; infeasible links get K = 0."""
    ch = channel_transmittance(d, params.optics, mode)
    f_rot = float(rotation_fidelity(d, params))
    f0_loss = float(loss_fidelity(ch.eta_avg, params.noise.qber))
    f0p = f_rot * f0_loss
    c = params.timing.light_speed
    noise = params.noise
    feasible = f0p >= noise.fidelity_threshold
    if feasible:
        t_cut = cutoff_time(d, f0p, noise.damping_rate, noise.fidelity_threshold, c)
        k = max_age(d, f0p, noise.damping_rate, noise.fidelity_threshold,
                    params.timing.slot_dt, convention, c)
    else:
        t_cut, k = None, 0
    return LinkBudget(
        distance=float(d), eta_ideal=ch.eta_ideal, beta=ch.beta, eta_eff=ch.eta_avg,
        q=ch.q_error, f_rot=f_rot, f0_loss=f0_loss, f0_prime=f0p,
        t_trans=float(d) / c, t_cutoff=t_cut, max_age=k, feasible=feasible,
        convention=convention,
    )
