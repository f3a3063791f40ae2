from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agegame.adversary import (
    EnumerationCapExceeded,
    as_cbs,
    brute_force_best_adversary,
    cbs_scan_best_adversary,
    cbs_spec,
    enumeration_size,
    is_centered,
    make_cbs,
    mirror_blocking,
    shift_cbs,
)
from agegame.engine import exact_age, exact_age_rational
from agegame.equilibrium import spread_block
from agegame.model import (
    BlockingMatrix,
    CbsSpec,
    Diversity,
    GeneralK,
    SchedulingPolicy,
    SystemConfig,
    validate_blocking,
)
from agegame.policies import uniform_policy


def blocked_slots(sigma):
    return [s + 1 for s in range(sigma.horizon) if sigma.blocked_targets(s)]


@pytest.mark.parametrize(
    "horizon, length, placement, slots",
    [(10, 4, "centered", [4, 5, 6, 7]), (9, 4, "centered", [3, 4, 5, 6]), (6, 2, 0, [1, 2])],
)
def test_make_cbs(horizon, length, placement, slots):
    cfg = SystemConfig(2, horizon, 0.5)
    sigma = make_cbs(cfg, 0, length, placement)
    assert blocked_slots(sigma) == slots
    assert sigma.blocked_targets(slots[0] - 1) == (0,)


def test_make_cbs_rejects_bad_placement():
    cfg = SystemConfig(2, 6, 0.5)
    with pytest.raises(ValueError):
        make_cbs(cfg, 0, 2, 5)
    with pytest.raises(ValueError):
        make_cbs(cfg, 0, 4)
    with pytest.raises(ValueError):
        make_cbs(cfg, 2, 2)


def test_mirror():
    cfg = SystemConfig(1, 5, 0.4)
    sigma = BlockingMatrix.from_pairs(1, 5, [(0, 1), (0, 2)])
    assert blocked_slots(mirror_blocking(cfg, sigma)) == [3, 4]
    sym = BlockingMatrix.from_pairs(1, 5, [(0, 2)])
    assert mirror_blocking(cfg, sym) == sym


@given(st.integers(1, 4), st.integers(2, 50), st.integers(0, 2**32 - 1))
def test_mirror_preserves_value_exactly(n, horizon, seed):
    rng = np.random.default_rng(seed)
    cfg = SystemConfig(n, horizon, 0.5)
    if cfg.budget == 0:
        return
    length = int(rng.integers(1, cfg.budget + 1))
    sigma = make_cbs(cfg, int(rng.integers(n)), length, int(rng.integers(horizon - length + 1)))
    pol = SchedulingPolicy(rng.dirichlet(np.ones(n)))
    assert exact_age_rational(cfg, pol, sigma)[1] == exact_age_rational(
        cfg, pol, mirror_blocking(cfg, sigma)
    )[1]


def test_shift_cbs():
    assert shift_cbs(CbsSpec(0, 1, 3), "right", 10) == CbsSpec(0, 2, 3)
    assert shift_cbs(CbsSpec(0, 1, 3), "left", 10) == CbsSpec(0, 0, 3)
    with pytest.raises(ValueError):
        shift_cbs(CbsSpec(0, 0, 3), "left", 10)
    with pytest.raises(ValueError):
        shift_cbs(CbsSpec(0, 7, 3), "right", 10)


def test_shift_toward_center_raises_age():
    cfg = SystemConfig(2, 20, 0.25)
    pol = SchedulingPolicy([0.6, 0.4])
    spec = CbsSpec(1, 0, 5)
    values = []
    while True:
        values.append(exact_age_rational(cfg, pol, spec.to_blocking(cfg))[1])
        if spec.left_free() >= spec.right_free(cfg.horizon):
            break
        spec = shift_cbs(spec, "right", cfg.horizon)
    assert values == sorted(values)
    # and away from the center it falls again
    away = [exact_age_rational(cfg, pol, CbsSpec(1, s, 5).to_blocking(cfg))[1] for s in range(8, 16)]
    assert away == sorted(away, reverse=True)


@pytest.mark.parametrize("beta", [0.1, 0.5, 0.9])
def test_power_difference_inequality(beta):
    for a in range(1, 21):
        for c in range(a):
            for b in range(c + 1):
                lhs = beta ** (a - b) - beta**a
                rhs = beta ** (c - b) - beta**c
                assert lhs <= rhs + 1e-15


def test_brute_force_symmetric_users():
    cfg = SystemConfig(2, 6, Fraction(1, 3))
    res = brute_force_best_adversary(cfg, uniform_policy(cfg))
    run = as_cbs(res.blocking)
    assert run is not None and run.length == 2 and is_centered(run, 6)
    targets = {as_cbs(m).target for m in res.argmax}
    assert targets == {0, 1}


def test_brute_force_targets_lower_probability():
    cfg = SystemConfig(2, 8, Fraction(3, 8))
    res = brute_force_best_adversary(cfg, SchedulingPolicy([0.7, 0.3]))
    assert as_cbs(res.blocking).target == 1


def test_brute_force_zero_budget():
    cfg = SystemConfig(2, 5, 0.1)
    assert cfg.budget == 0
    pol = SchedulingPolicy([0.5, 0.5])
    res = brute_force_best_adversary(cfg, pol)
    assert res.blocking == BlockingMatrix.empty(2, 5)
    assert res.value == exact_age(cfg, pol, res.blocking).system_average


def test_brute_force_parallel_matches_serial():
    cfg = SystemConfig(3, 7, Fraction(3, 7))
    pol = SchedulingPolicy([0.5, 0.3, 0.2])
    a = brute_force_best_adversary(cfg, pol, n_jobs=1)
    b = brute_force_best_adversary(cfg, pol, n_jobs=3)
    assert a.blocking == b.blocking and a.value == b.value
    assert a.argmax == b.argmax


def test_enumeration_size_and_cap():
    cfg = SystemConfig(2, 3, 0.5)  # budget 1
    assert enumeration_size(cfg) == 1 + 2 * 3
    with pytest.raises(EnumerationCapExceeded) as err:
        brute_force_best_adversary(SystemConfig(2, 30, 0.2), SchedulingPolicy([0.5, 0.5]), cap=1000)
    assert err.value.size > 1000


def test_brute_force_general_k():
    cfg = SystemConfig(3, 5, 0.4, variant=GeneralK(2, 2))
    pol = SchedulingPolicy([0.8, 0.7, 0.5])
    res = brute_force_best_adversary(cfg, pol)
    assert validate_blocking(cfg, res.blocking) == []
    assert res.value >= exact_age(cfg, pol, make_cbs(cfg, 2, 2)).system_average


def test_cbs_scan_picks_lower_probability():
    cfg = SystemConfig(2, 1000, 0.2)
    spec, _ = cbs_scan_best_adversary(cfg, SchedulingPolicy([0.7, 0.3]))
    assert spec.target == 1 and spec.length == 200


def test_cbs_scan_uniform_tie_goes_to_first():
    cfg = SystemConfig(3, 100, 0.3)
    pol = uniform_policy(cfg)
    spec, value = cbs_scan_best_adversary(cfg, pol)
    assert spec.target == 0
    for t in range(3):
        assert exact_age(cfg, pol, make_cbs(cfg, t, 30)).system_average == value


def test_cbs_scan_diversity_symmetric():
    cfg = SystemConfig(2, 100, 0.3, variant=Diversity(3))
    pol = uniform_policy(cfg)
    values = {exact_age(cfg, pol, make_cbs(cfg, j, 30)).system_average for j in range(3)}
    assert len(values) == 1
    spec, _ = cbs_scan_best_adversary(cfg, pol)
    assert spec.target == 0


def test_cbs_scan_zero_budget():
    cfg = SystemConfig(2, 5, 0.1)
    spec, value = cbs_scan_best_adversary(cfg, SchedulingPolicy([0.5, 0.5]))
    assert spec is None and value > 1


def interleaved(cfg, target_runs):
    w = np.zeros((cfg.n_targets, cfg.horizon))
    for target, start, length in target_runs:
        w[target, start : start + length] = 1.0
    return BlockingMatrix(w)


@pytest.mark.parametrize("horizon", [8, 10, 12])
def test_merging_split_blocks_onto_one_user(horizon):
    # two runs per user, interleaved; merging all blocked slots into one
    # centered run on one user never lowers the value
    rng = np.random.default_rng(horizon)
    cfg = SystemConfig(2, horizon, 0.5)
    for _ in range(20):
        pol = SchedulingPolicy(rng.dirichlet(np.ones(2)))
        a, b, c, d = (int(x) for x in rng.integers(1, 3, size=4))
        total = a + b + c + d
        if total > cfg.budget:
            continue
        gaps = rng.integers(0, 2, size=4)
        runs, pos = [], 0
        for (target, length), gap in zip([(0, a), (1, b), (0, c), (1, d)], gaps):
            pos += int(gap)
            runs.append((target, pos, length))
            pos += length
        if pos > horizon:
            continue
        split = exact_age(cfg, pol, interleaved(cfg, runs)).system_average
        merged = max(
            exact_age(cfg, pol, make_cbs(cfg, t, total)).system_average for t in range(2)
        )
        assert merged >= split - 1e-12


def test_multi_block_never_beats_single_run():
    rng = np.random.default_rng(7)
    cfg = SystemConfig(2, 9, Fraction(1, 3))
    for _ in range(30):
        pol = SchedulingPolicy(rng.dirichlet(np.ones(2)))
        slots = np.sort(rng.choice(9, size=3, replace=False))
        sigma = BlockingMatrix.from_pairs(2, 9, [(int(rng.integers(2)), int(s)) for s in slots])
        _, best = cbs_scan_best_adversary(cfg, pol)
        assert exact_age(cfg, pol, sigma).system_average <= best + 1e-12


def test_spread_block_is_feasible():
    cfg = SystemConfig(2, 20, 0.3, variant=Diversity(3))
    sigma = spread_block(cfg, 7, 6)
    assert validate_blocking(cfg, sigma) == []
    assert not sigma.is_deterministic
    assert cbs_spec(cfg, 0, 6).length == 6
