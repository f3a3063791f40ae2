from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agegame.adversary import make_cbs
from agegame.engine import exact_age
from agegame.model import STANDARD, BlockingMatrix, Diversity, GeneralK, SchedulingPolicy, SystemConfig
from agegame.policies import uniform_policy
from agegame.simulation import (
    BLOCK_REPS,
    check_alpha_sq_optimality,
    check_diversity_bound,
    check_lower_bounds,
    check_upper_bound_no_diversity,
    round_robin_blocked,
    simulate,
)


def _empty(cfg):
    return BlockingMatrix.empty(cfg.n_targets, cfg.horizon)


def test_single_user_always_fresh():
    cfg = SystemConfig(1, 10, 0.3)
    res = simulate(cfg, SchedulingPolicy([1.0]), _empty(cfg), seed=3, reps=50)
    assert res.mean_system_age == 1.0
    assert res.stderr == 0.0


def test_single_user_fully_blocked_standard():
    cfg = SystemConfig(1, 10, 0.5, age_indexing=STANDARD, budget=10)
    sigma = make_cbs(cfg, 0, 10)
    res = simulate(cfg, SchedulingPolicy([1.0]), sigma, seed=0, reps=5)
    assert res.mean_system_age == 5.5
    np.testing.assert_array_equal(res.per_rep, 5.5)


def test_two_users_short_horizon_matches_exact():
    cfg = SystemConfig(2, 3, 0.2)
    pol = uniform_policy(cfg)
    res = simulate(cfg, pol, _empty(cfg), seed=1, reps=20_000)
    exact = exact_age(cfg, pol, _empty(cfg)).system_average
    assert abs(res.mean_system_age - exact) <= 4 * res.stderr


def test_diversity_and_general_k_match_exact():
    cases = [
        (SystemConfig(3, 30, 0.3, variant=Diversity(2)), None),
        (SystemConfig(4, 30, 0.3, variant=GeneralK(2, 1)), None),
    ]
    for cfg, _ in cases:
        pol = uniform_policy(cfg)
        sigma = make_cbs(cfg, 0, cfg.budget)
        res = simulate(cfg, pol, sigma, seed=7, reps=20_000)
        exact = exact_age(cfg, pol, sigma).system_average
        assert abs(res.mean_system_age - exact) <= 4 * res.stderr


def test_fractional_blocking_matches_exact():
    cfg = SystemConfig(2, 20, Fraction(1, 2))
    w = np.zeros((2, 20))
    w[:, 5:15] = 0.5
    sigma = BlockingMatrix(w)
    pol = SchedulingPolicy([0.7, 0.3])
    res = simulate(cfg, pol, sigma, seed=2, reps=30_000)
    exact = exact_age(cfg, pol, sigma).system_average
    assert abs(res.mean_system_age - exact) <= 4 * res.stderr


def test_seed_reproducible_and_sensitive():
    cfg = SystemConfig(3, 40, 0.25)
    pol = uniform_policy(cfg)
    sigma = make_cbs(cfg, 1, cfg.budget)
    a = simulate(cfg, pol, sigma, seed=11, reps=500)
    b = simulate(cfg, pol, sigma, seed=11, reps=500)
    c = simulate(cfg, pol, sigma, seed=12, reps=500)
    assert a.identical(b)
    assert not a.identical(c)


@settings(max_examples=10)
@given(threads=st.integers(1, 6), extra=st.integers(0, 50))
def test_thread_count_does_not_change_results(threads, extra):
    cfg = SystemConfig(2, 15, 0.3, variant=Diversity(2))
    pol = uniform_policy(cfg)
    w = np.zeros((2, 15))
    w[0, 4:8] = 0.5
    w[1, 4:8] = 0.5
    reps = 2 * BLOCK_REPS + extra
    one = simulate(cfg, pol, BlockingMatrix(w), seed=5, reps=reps, threads=1)
    many = simulate(cfg, pol, BlockingMatrix(w), seed=5, reps=reps, threads=threads)
    assert one.identical(many)


def test_prefix_of_blocks_is_stable():
    cfg = SystemConfig(2, 10, 0.2)
    pol = uniform_policy(cfg)
    short = simulate(cfg, pol, _empty(cfg), seed=9, reps=BLOCK_REPS)
    long = simulate(cfg, pol, _empty(cfg), seed=9, reps=BLOCK_REPS + 10)
    np.testing.assert_array_equal(long.per_rep[:BLOCK_REPS], short.per_rep)


def test_simulate_rejects_bad_arguments():
    cfg = SystemConfig(2, 10, 0.2)
    pol = uniform_policy(cfg)
    with pytest.raises(ValueError):
        simulate(cfg, pol, _empty(cfg), seed=0, reps=0)
    with pytest.raises(ValueError):
        simulate(cfg, pol, _empty(cfg), seed=-1, reps=5)


def test_upper_bound_example():
    rep = check_upper_bound_no_diversity(5, 999, 0.2, seed=0, reps=500)
    assert rep.bound == 104.0
    assert rep.passed and rep.margin > 0
    assert rep.details["unblocked_user_mean"] == pytest.approx(5, rel=0.05)


def test_lower_bound_examples():
    reports = {r.name: r for r in check_lower_bounds(5, 1000, 0.2)}
    assert reports["lower_randomized"].bound == pytest.approx(4.0)
    assert reports["lower_diversity"].bound == 3.0
    assert all(r.passed for r in reports.values())
    small = {r.name: r for r in check_lower_bounds(2, 100, 0.2)}
    assert small["lower_deterministic"].bound == pytest.approx(2.0)
    assert small["lower_deterministic"].passed


def test_round_robin_adversary_hits_scheduled_user():
    cfg = SystemConfig(3, 12, Fraction(1, 2))
    schedule, sigma = round_robin_blocked(cfg)
    w = np.asarray(sigma.weights)
    assert w.sum() == 6
    for t in np.flatnonzero(w.sum(axis=0)):
        assert w[schedule[t], t] == 1


def test_diversity_bound_examples():
    reports = {r.name: r for r in check_diversity_bound(4, 2, 2000, reps=100)}
    assert reports["upper_diversity"].bound == 8.0
    assert reports["lower_diversity_simulated"].bound == 2.5
    assert reports["ratio_diversity"].bound == 4.0
    assert all(r.passed for r in reports.values())
    three = {r.name: r for r in check_diversity_bound(4, 3, 2000, reps=100)}
    assert three["upper_diversity"].bound == 6.0
    assert three["upper_diversity"].passed


@pytest.mark.parametrize("alpha, bound", [(0.5, 4.4), (0.9, 1.1 / 0.81)])
def test_alpha_squared_ratio(alpha, bound):
    rep = check_alpha_sq_optimality(4, None, alpha)
    assert rep.bound == pytest.approx(bound)
    assert rep.passed
    assert rep.measured == pytest.approx(1.0, abs=0.01)
