import math

import numpy as np
import pytest

from entm.markov import StateSpace, steady_state, transition_matrix
from entm.mcsim import (Estimate, SimConfig, SimLink, compare, run_simulation, total_variation)
from entm.metrics import analyze, chain_metrics, utilization
from entm.params import default_scenario

D40 = 40e3
LINK = SimLink(p_prime=0.6, max_age=5, f0_prime=0.65, gamma=0.5, slot_dt=0.01, f_th=0.615)


def _cfg(n=20_000, reps=1, seed=3, link=LINK, lam=0.4, variant="matrix_semantics", **kw):
    return SimConfig(default_scenario(), n, reps, seed, variant, link=link, lam=lam, **kw)


def test_same_seed_same_result():
    a, b = run_simulation(_cfg()), run_simulation(_cfg())
    assert a == b
    assert run_simulation(_cfg(seed=4)) != a


def test_parallel_matches_serial(monkeypatch):
    monkeypatch.setenv("ENTM_THREADS", "1")
    serial = run_simulation(_cfg(n=5_000, reps=3))
    monkeypatch.setenv("ENTM_THREADS", "2")
    assert run_simulation(_cfg(n=5_000, reps=3)) == serial


def test_metadata_and_error_units():
    sim = run_simulation(_cfg(n=1_000))
    assert sim.metadata["generator"] == "PCG64" and sim.metadata["error_units"] == 20
    assert sim.metadata["lambda"] == 0.4 and sim.metadata["max_age"] == 5
    assert run_simulation(_cfg(n=500, reps=25)).metadata["error_units"] == 25
    assert run_simulation(_cfg(n=5)).metadata["error_units"] == 5


def test_no_requests():
    sim = run_simulation(_cfg(lam=0.0))
    assert math.isnan(sim.satisfaction_frequency.value)
    assert sim.consumed_fraction.value == 0.0
    assert math.isnan(sim.mean_consumed_age.value)
    assert sim.empirical_state_histogram[(0, 0)] == 1.0


def test_every_slot_requests_with_certain_generation():
    link = SimLink(1.0, 5, 0.65, 0.5, 0.01, 0.615)
    n = 10_000
    sim = run_simulation(_cfg(n=n, link=link, lam=1.0))
    assert sim.satisfaction_frequency.value == 1.0
    assert sim.consumed_fraction.value == 1.0
    assert sim.mean_consumed_age.value == pytest.approx(0.01)
    assert sim.mean_consumed_fidelity.value == pytest.approx(0.65 * math.exp(-2 * 0.5 * 0.01))
    # Only the first request finds an empty memory; it waits exactly its own slot.
    assert sim.mean_wait.value == pytest.approx(0.01 / n)


def test_consumed_links_respect_threshold():
    sim = run_simulation(_cfg())
    lowest = LINK.f0_prime * math.exp(-2 * LINK.gamma * LINK.max_age * LINK.slot_dt)
    assert sim.mean_consumed_fidelity.value >= lowest


def test_threshold_violation_is_detected():
    bad = SimLink(0.6, 50, 0.65, 0.5, 0.01, 0.615)
    with pytest.raises(AssertionError):
        run_simulation(_cfg(link=bad, lam=0.05))
    run_simulation(_cfg(link=bad, lam=0.05, check_threshold=False))


@pytest.mark.parametrize("lam", [0.1, 0.3, 0.6])
@pytest.mark.parametrize("max_age", [1, 4, 9])
def test_consumed_fraction_grid(lam, max_age):
    link = SimLink(0.6, max_age, 0.65, 0.5, 0.001, 0.5)
    sim = run_simulation(_cfg(n=60_000, seed=11, link=link, lam=lam))
    est = sim.consumed_fraction
    assert abs(est.value - utilization(lam, max_age)) <= 4 * est.stderr


def test_small_chain_against_closed_forms():
    space = StateSpace((D40,), (5,))
    T = transition_matrix(space, D40, LINK.p_prime, 0.4)
    analytic = chain_metrics(space, D40, LINK.p_prime, 0.4, LINK.slot_dt, LINK.gamma, LINK.f0_prime)
    sim = run_simulation(_cfg(n=200_000, seed=5))
    report = compare(sim, analytic, z=4.0)
    assert report.passed, report
    assert total_variation(sim.empirical_state_histogram, steady_state(T), space) < 0.01


def test_retry_variant_shortens_waits():
    matrix = run_simulation(_cfg(n=50_000, lam=0.1))
    retry = run_simulation(_cfg(n=50_000, lam=0.1, variant="retry_every_slot"))
    assert retry.mean_wait.value < matrix.mean_wait.value


def test_scenario_link_is_used_by_default():
    sc = default_scenario()
    sim = run_simulation(SimConfig(sc, 2_000, 1, 1))
    assert sim.metadata["max_age"] == 223
    assert sim.metadata["p_prime"] == pytest.approx(analyze(sc).p_prime)


@pytest.mark.parametrize("kw", [dict(n=0), dict(reps=0), dict(seed=-1), dict(seed=2**64),
                                dict(variant="eager"), dict(lam=1.5), dict(n=2.5)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        _cfg(**kw)


def test_total_variation():
    space = StateSpace((D40,), (2,))
    pi = np.array([0.5, 0.25, 0.25])
    assert total_variation({(0, 0): 0.5, (1, 0): 0.25, (2, 0): 0.25}, pi, space) == 0.0
    assert total_variation({(0, 0): 1.0}, pi, space) == pytest.approx(0.5)


def test_compare_verdicts():
    space = StateSpace((D40,), (5,))
    analytic = chain_metrics(space, D40, 0.6, 0.4, 0.01, 0.5, 0.65)
    sim = run_simulation(_cfg(n=2_000))
    fake = sim.__class__(**{**sim.__dict__,
                            "consumed_fraction": Estimate(analytic.utilization + 1.0, 0.01),
                            "mean_consumed_age": Estimate(math.nan, 0.0),
                            "mean_wait": Estimate(analytic.expected_wait * 2, 0.0)})
    verdicts = {r.name: r.verdict for r in compare(fake, analytic)}
    assert verdicts["consumed_fraction"] == "FAIL"
    assert verdicts["mean_consumed_age"] == "SKIP"
    assert verdicts["mean_wait"] == "FLAG"
    assert not compare(fake, analytic).passed
