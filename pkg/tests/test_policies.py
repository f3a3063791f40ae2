import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agegame.adversary import make_cbs
from agegame.model import BlockingMatrix, Diversity, GeneralK, SystemConfig
from agegame.policies import (
    ConvergenceWarning,
    InfeasiblePolicyError,
    group_pmf_from_marginals,
    groups,
    marginals_from_group_pmf,
    numeric_best_policy,
    optimal_policy_general_k,
    optimal_policy_vs_cbs,
    stackelberg_leader_policy,
    systematic_selection,
    uniform_subcarrier,
)


def test_closed_form_example():
    p = optimal_policy_vs_cbs(3, 0.44, 0).user_pmf
    np.testing.assert_allclose(p, [0.375, 0.3125, 0.3125], rtol=1e-15)


def test_closed_form_two_users():
    p = optimal_policy_vs_cbs(2, 0.44, 0).user_pmf
    assert p[0] == pytest.approx(1.2 / 2.2, rel=1e-15)
    assert math.fsum(p) == 1.0


def test_closed_form_small_alpha_is_uniform():
    p = optimal_policy_vs_cbs(4, 1e-12, 2).user_pmf
    np.testing.assert_allclose(p, 0.25, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
@pytest.mark.parametrize("alpha", [0.05, 0.44, 0.95])
def test_closed_form_stationarity(n, alpha):
    blocked = n - 1
    p = optimal_policy_vs_cbs(n, alpha, blocked).user_pmf
    terms = 1 / p**2
    terms[blocked] *= 1 + alpha
    assert np.ptp(terms) / terms.mean() < 1e-9
    others = np.delete(p, blocked)
    assert np.all(p[blocked] > others)


def test_closed_form_rejects_bad_input():
    with pytest.raises(ValueError):
        optimal_policy_vs_cbs(1, 0.5, 0)
    with pytest.raises(ValueError):
        optimal_policy_vs_cbs(3, 1.0, 0)
    with pytest.raises(ValueError):
        optimal_policy_vs_cbs(3, 0.5, 3)


def test_general_k_reduces_to_single_user():
    a = optimal_policy_general_k(3, 1, 0.44, 0).user_pmf
    b = optimal_policy_vs_cbs(3, 0.44, 0).user_pmf
    np.testing.assert_allclose(a, b, rtol=1e-15)


def test_general_k_pair_example():
    p = optimal_policy_general_k(3, 2, 0.44, 0).user_pmf
    np.testing.assert_allclose(p, [0.75, 0.625, 0.625], rtol=1e-14)
    assert math.fsum(p) == pytest.approx(2.0, abs=1e-12)


def test_general_k_all_served():
    assert optimal_policy_general_k(4, 4, 0.3, 1).user_pmf.tolist() == [1.0] * 4


def test_general_k_infeasible():
    with pytest.raises(InfeasiblePolicyError):
        optimal_policy_general_k(5, 4, 0.9, 0)


def test_leader_and_subcarrier_policies():
    assert stackelberg_leader_policy(4).user_pmf.tolist() == [0.25] * 4
    assert stackelberg_leader_policy(1).user_pmf.tolist() == [1.0]
    np.testing.assert_allclose(uniform_subcarrier(3), [1 / 3] * 3)


def test_marginals_from_groups():
    np.testing.assert_allclose(marginals_from_group_pmf(3, 2, [1 / 3] * 3), [2 / 3] * 3)
    assert marginals_from_group_pmf(3, 2, [0, 1, 0]).tolist() == [1, 0, 1]
    with pytest.raises(ValueError):
        marginals_from_group_pmf(3, 2, [0.5, 0.5])


@given(st.integers(2, 6), st.data())
def test_group_marginals_sum_to_k(n, data):
    k = data.draw(st.integers(1, n))
    weights = data.draw(
        st.lists(st.floats(0.01, 1.0), min_size=math.comb(n, k), max_size=math.comb(n, k))
    )
    pmf = np.array(weights) / math.fsum(weights)
    assert math.fsum(marginals_from_group_pmf(n, k, pmf)) == pytest.approx(k, abs=1e-12)


@given(st.integers(2, 6), st.data())
def test_systematic_sampling_round_trip(n, data):
    k = data.draw(st.integers(1, n - 1))
    raw = np.array(data.draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    p = raw / raw.sum() * k
    if p.max() > 1:
        return
    pmf = group_pmf_from_marginals(p)
    assert pmf.shape == (math.comb(n, k),)
    np.testing.assert_allclose(marginals_from_group_pmf(n, k, pmf), p, atol=1e-12)


def test_systematic_selection_picks_exactly_k():
    p = np.array([0.9, 0.6, 0.3, 0.2])
    u = np.linspace(0, 1, 1001, endpoint=False)
    chosen = systematic_selection(p, u)
    assert np.all(chosen.sum(axis=1) == 2)
    np.testing.assert_allclose(chosen.mean(axis=0), p, atol=2e-3)


def test_groups_lexicographic():
    assert groups(3, 2) == [(0, 1), (0, 2), (1, 2)]


def test_numeric_matches_closed_form():
    cfg = SystemConfig(3, 10_000, 0.44)
    sigma = make_cbs(cfg, 0, cfg.budget)
    p = numeric_best_policy(cfg, sigma).user_pmf
    np.testing.assert_allclose(p, [0.375, 0.3125, 0.3125], atol=1e-3)
    assert abs(math.fsum(p) - 1) <= 1e-12


def test_numeric_general_k_matches_closed_form():
    cfg = SystemConfig(3, 10_000, 0.44, variant=GeneralK(2, 1))
    p = numeric_best_policy(cfg, make_cbs(cfg, 0, cfg.budget)).user_pmf
    np.testing.assert_allclose(p, optimal_policy_general_k(3, 2, 0.44, 0).user_pmf, atol=1e-3)


def test_numeric_unblocked_is_uniform():
    cfg = SystemConfig(4, 500, 0.3)
    p = numeric_best_policy(cfg, BlockingMatrix.empty(4, 500)).user_pmf
    np.testing.assert_allclose(p, 0.25, atol=1e-6)


def test_numeric_single_user():
    cfg = SystemConfig(1, 50, 0.3)
    assert numeric_best_policy(cfg, make_cbs(cfg, 0, 15)).user_pmf.tolist() == [1.0]


def test_numeric_ordered_is_uniform():
    cfg = SystemConfig(3, 10_000, 0.44)
    sigma = make_cbs(cfg, 2, cfg.budget)
    p = numeric_best_policy(cfg, sigma, ordered=True).user_pmf
    np.testing.assert_allclose(p, 1 / 3, atol=1e-6)


def test_numeric_diversity_keeps_q():
    cfg = SystemConfig(3, 2000, 0.3, variant=Diversity(2))
    pol = numeric_best_policy(cfg, make_cbs(cfg, 0, cfg.budget))
    np.testing.assert_allclose(pol.user_pmf, 1 / 3, atol=1e-6)
    assert pol.subcarrier_pmf.tolist() == [0.5, 0.5]


def test_numeric_warns_when_capped():
    cfg = SystemConfig(3, 1000, 0.44)
    sigma = make_cbs(cfg, 0, cfg.budget)
    with pytest.warns(ConvergenceWarning):
        pol = numeric_best_policy(cfg, sigma, max_iter=1)
    assert abs(math.fsum(pol.user_pmf) - 1) <= 1e-12


def test_numeric_is_deterministic():
    cfg = SystemConfig(3, 3000, 0.2)
    sigma = make_cbs(cfg, 1, cfg.budget)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert numeric_best_policy(cfg, sigma) == numeric_best_policy(cfg, sigma)
