"""
The (storage age, distance) Markov chain.

States are ``(i, d_j)`` with ``0 <= i <= K(d_j)``; age 0 means "no usable
link, last request was for d_j". They are laid out block by block in the
order of the distance list, ages ascending inside a block.

Matrices and distribution vectors are plain read-only numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DimensionMismatchError, EmptySpaceError, NotConvergedError,
                     UnknownDistanceError)
from .fidelity import AgeConvention, link_budget
from .optics import SpotMode
from .params import ScenarioParams

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    distances: tuple[float, ...]
    max_ages: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        object.__setattr__(self, "max_ages", tuple(int(k) for k in self.max_ages))
        if not self.distances:
            raise EmptySpaceError("state space needs at least one distance")
        if len(self.distances) != len(self.max_ages):
            raise DimensionMismatchError("one max age per distance is required")
        if any(k < 0 for k in self.max_ages):
            raise ValueError("max ages must be >= 0")
        offsets = np.concatenate(([0], np.cumsum([k + 1 for k in self.max_ages])))
        object.__setattr__(self, "_offsets", tuple(int(o) for o in offsets))

    @property
    def size(self) -> int:
        return self._offsets[-1]

    def __len__(self) -> int:
        return self.size

    def distance_index(self, d: float) -> int:
        for j, dj in enumerate(self.distances):
            if dj == d or abs(dj - d) <= 1e-9 * max(abs(dj), 1.0):
                return j
        raise UnknownDistanceError(f"distance {d!r} m is not in the state space")

    def index(self, age: int, j: int) -> int:
        """Dense index of state (age, d_j); ``j`` is the distance position."""
        if not 0 <= age <= self.max_ages[j]:
            raise IndexError(f"age {age} outside [0, {self.max_ages[j]}] for distance #{j}")
        return self._offsets[j] + age

    def state(self, idx: int) -> tuple[int, int]:
        if not 0 <= idx < self.size:
            raise IndexError(idx)
        j = int(np.searchsorted(self._offsets, idx, side="right")) - 1
        return idx - self._offsets[j], j

    def block(self, j: int) -> slice:
        return slice(self._offsets[j], self._offsets[j + 1])

    def no_link_indices(self) -> list[int]:
        return list(self._offsets[:-1])

    def point_mass(self, age: int, j: int) -> np.ndarray:
        p = np.zeros(self.size)
        p[self.index(age, j)] = 1.0
        return _frozen(p)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def build_state_space(params: ScenarioParams, mode: SpotMode = "exact",
                      convention: AgeConvention = "storage_budget") -> StateSpace:
    """Per-distance K from the link budget; distances failing the threshold get K = 0."""
    if not params.distances:
        raise EmptySpaceError("no distances")
    ages = [link_budget(d, params, mode, convention).max_age for d in params.distances]
    return StateSpace(params.distances, tuple(ages))


def check_stochastic(T: np.ndarray, tol: float = STOCHASTIC_TOL) -> None:
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DimensionMismatchError(f"transition matrix must be square, got {T.shape}")
    if np.any(T < -tol) or np.any(T > 1 + tol):
        raise ValueError("transition probabilities must lie in [0, 1]")
    worst = np.max(np.abs(T.sum(axis=1) - 1.0))
    if worst > tol:
        raise ValueError(f"rows do not sum to 1 (max deviation {worst:.3e})")


def build_request_matrix(space: StateSpace, d_new: float, p_prime: float) -> np.ndarray:
    """
    Request-slot dynamics: from any state, consume/skip and try to generate at d_new.

    Every row is identical: (0, d_new) with 1 - p', (1, d_new) with p'. When
    K(d_new) = 0 a generated pair cannot even be stored for one slot, so all
    mass lands on (0, d_new).
    """
    if not 0 <= p_prime <= 1:
        raise ValueError(f"p' must lie in [0, 1], got {p_prime!r}")
    j = space.distance_index(d_new)
    T = np.zeros((space.size, space.size))
    if space.max_ages[j] == 0:
        T[:, space.index(0, j)] = 1.0
    else:
        T[:, space.index(0, j)] = 1.0 - p_prime
        T[:, space.index(1, j)] = p_prime
    return _frozen(T)


def build_no_request_matrix(space: StateSpace) -> np.ndarray:
    """Idle-slot dynamics: links age by one slot and are discarded past K."""
    T = np.zeros((space.size, space.size))
    for j, k in enumerate(space.max_ages):
        zero = space.index(0, j)
        T[zero, zero] = 1.0
        for age in range(1, k):
            T[space.index(age, j), space.index(age + 1, j)] = 1.0
        if k >= 1:
            T[space.index(k, j), zero] = 1.0
    return _frozen(T)


def combine(t_req: np.ndarray, t_norq: np.ndarray, lam: float) -> np.ndarray:
    """lambda * T_req + (1 - lambda) * T_norq."""
    if t_req.shape != t_norq.shape:
        raise DimensionMismatchError(f"{t_req.shape} vs {t_norq.shape}")
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    return _frozen(lam * t_req + (1.0 - lam) * t_norq)


def transition_matrix(space: StateSpace, d_new: float, p_prime: float, lam: float) -> np.ndarray:
    return combine(build_request_matrix(space, d_new, p_prime), build_no_request_matrix(space), lam)


def evolve(p0: np.ndarray, T: np.ndarray, steps: int) -> np.ndarray:
    """
    Transient distributions ``P(t + 1) = P(t) T``.

    Returns an array of shape ``(steps + 1, |S|)`` whose row ``t`` is P(t);
    row 0 is ``p0``. Each row is renormalized to guard against drift.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    p = np.asarray(p0, dtype=float)
    if p.shape != (T.shape[0],):
        raise DimensionMismatchError(f"vector of length {p.shape} vs matrix {T.shape}")
    if abs(p.sum() - 1.0) > 1e-10 or np.any(p < 0):
        raise ValueError("initial distribution must be non-negative and sum to 1")
    out = np.empty((steps + 1, p.size))
    out[0] = p
    for t in range(1, steps + 1):
        p = p @ T
        p /= p.sum()
        out[t] = p
    return _frozen(out)


def _direct_solve(T: np.ndarray) -> np.ndarray:
    n = T.shape[0]
    A = T.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def steady_state(T: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000,
                 stall_window: int = 5_000) -> np.ndarray:
    """
    Stationary distribution by power iteration from the uniform vector.

    Converged when ||pi T - pi||_1 <= tol. If the residual stops shrinking
    (periodic chains) or ``max_iter`` runs out, a direct solve of
    pi (T - I) = 0, sum(pi) = 1 is tried and accepted only if it meets ``tol``.

    Raises
    ------
    NotConvergedError
        Neither route reached the tolerance.
    """
    n = T.shape[0]
    pi = np.full(n, 1.0 / n)
    best, best_at = np.inf, 0
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        nxt = pi @ T
        nxt /= nxt.sum()
        residual = np.abs(nxt - pi).sum()
        pi = nxt
        if residual <= tol:
            return _frozen(pi)
        if residual < 0.5 * best:
            best, best_at = residual, it
        elif it - best_at > stall_window:
            break
    direct = _direct_solve(T)
    direct_res = np.abs(direct @ T - direct).sum()
    if direct_res <= tol:
        return _frozen(direct)
    raise NotConvergedError(it, min(residual, direct_res))


def no_link_probability(p: np.ndarray, space: StateSpace) -> float:
    """P0: total mass on the age-0 states of every distance."""
    return float(np.asarray(p)[space.no_link_indices()].sum())


def cold_start(space: StateSpace, d_new: float) -> np.ndarray:
    """Default initial distribution: no link, last request for d_new."""
    return space.point_mass(0, space.distance_index(d_new))

