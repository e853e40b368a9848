"""
Independent reference computations used only by the tests.

Nothing here imports the transition-matrix or closed-form code paths of the
package: the Markov oracles follow the protocol rules slot by slot, the
metric oracles sum the age law term by term.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict

import numpy as np
import scipy.linalg


def _step(age, K, request, success):
    """Protocol rules for one slot of a single-distance link."""
    if request:
        return 1 if (success and K >= 1) else 0
    if age == 0:
        return 0
    return age + 1 if age < K else 0


def merged_paths(K, lam, p, steps, start_age=0):
    """Age distribution after 0..steps slots, branching every event and merging equal ages."""
    dist = {start_age: 1.0}
    history = []
    for _ in range(steps + 1):
        vec = np.zeros(K + 1)
        for age, pr in dist.items():
            vec[age] += pr
        history.append(vec)
        nxt = defaultdict(float)
        for age, pr in dist.items():
            nxt[_step(age, K, True, True)] += pr * lam * p
            nxt[_step(age, K, True, False)] += pr * lam * (1 - p)
            nxt[_step(age, K, False, False)] += pr * (1 - lam)
        dist = nxt
    return np.array(history)


def unmerged_paths(K, lam, p, t, start_age=0):
    """Distribution at slot t by summing over every one of the 3^t event sequences."""
    events = [((True, True), lam * p), ((True, False), lam * (1 - p)), ((False, False), 1 - lam)]
    vec = np.zeros(K + 1)
    for path in itertools.product(events, repeat=t):
        age, weight = start_age, 1.0
        for (request, success), w in path:
            weight *= w
            age = _step(age, K, request, success)
        vec[age] += weight
    return vec


def stationary_by_eigenvector(T):
    """Left eigenvector of T for the eigenvalue closest to 1, normalized."""
    vals, vecs = scipy.linalg.eig(T.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def stationary_by_lstsq(T):
    n = T.shape[0]
    A = np.vstack([T.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    return scipy.linalg.lstsq(A, b)[0]


def age_law(lam, K):
    """P(consumed at age k), k = 1..K (unnormalized: total is the consumed fraction)."""
    return [lam * (1 - lam) ** (k - 1) for k in range(1, K + 1)]


def utilization_sum(lam, K):
    return math.fsum(age_law(lam, K))


def age_sum(lam, K, dt):
    w = age_law(lam, K)
    return math.fsum(k * wk for k, wk in zip(range(1, K + 1), w)) / math.fsum(w) * dt


def fidelity_sum(lam, K, dt, gamma, f0):
    w = age_law(lam, K)
    return math.fsum(f0 * math.exp(-2 * gamma * k * dt) * wk
                     for k, wk in zip(range(1, K + 1), w)) / math.fsum(w)


def stationary_single_chain(K, lam, p):
    """Balance equations solved by hand: pi_a = lam p (1-lam)^(a-1), pi_0 the rest."""
    pi = np.array([0.0] + [lam * p * (1 - lam) ** (a - 1) for a in range(1, K + 1)])
    pi[0] = 1.0 - math.fsum(pi[1:])
    return pi
