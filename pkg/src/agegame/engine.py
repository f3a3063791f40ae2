"""Exact expected ages under a stationary policy and a blocking matrix.

The expected age of user ``i`` obeys ``Δ(t+1) = Δ(t)·s_i(t) + 1`` with
``Δ(1) = 1``, where the survival factor ``s_i(t)`` is the probability that the
user is *not* refreshed in slot ``t``. Survival factors are piecewise
constant for the blocking patterns of interest, so the recursion is solved in
closed form over each maximal run of identical factors instead of slot by
slot. That keeps a 10^6-slot horizon at a handful of numpy calls.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .model import (
    SHIFTED,
    AgeReport,
    BlockingMatrix,
    CbsSpec,
    Diversity,
    SchedulingPolicy,
    SystemConfig,
    ValidationError,
    check_blocking,
    check_policy,
)


def step_age(delta: float, survival: float) -> float:
    """One slot of the expected-age recursion."""
    return delta * survival + 1.0


def availability(config: SystemConfig, policy: SchedulingPolicy, sigma: BlockingMatrix):
    """Per-user, per-slot probability that a scheduled packet gets through.

    Without diversity this is ``1 - w_i(t)``; with diversity every user sees
    the same value ``sum_j q_j (1 - w_j(t))``.
    """
    w = sigma.weights
    if isinstance(config.variant, Diversity):
        r = policy.subcarrier_pmf @ (1.0 - w)
        return np.broadcast_to(r, (config.n_users, config.horizon))
    return 1.0 - w


def delivery_probabilities(config, policy, sigma, user_pmf=None) -> np.ndarray:
    p = policy.user_pmf if user_pmf is None else user_pmf
    return p[:, None] * availability(config, policy, sigma)


def _run_bounds(d: np.ndarray) -> list[tuple[int, int]]:
    horizon = d.shape[1]
    if horizon == 0:
        return []
    change = np.flatnonzero(np.any(d[:, 1:] != d[:, :-1], axis=0)) + 1
    edges = np.concatenate(([0], change, [horizon]))
    return list(zip(edges[:-1].tolist(), edges[1:].tolist()))


def _run_values(d0: np.ndarray, d: np.ndarray, m: int) -> np.ndarray:
    """Ages after 1..m slots of constant delivery probability ``d``, from ``d0``.

    Works for complex input too (used for complex-step derivatives).
    """
    k = np.arange(1, m + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_s = np.log1p(-d)[:, None] * k
        power = np.exp(log_s)
        geo = -np.expm1(log_s) / d[:, None]
    geo = np.where(d[:, None] == 0, k.astype(geo.dtype), geo)
    return power * d0[:, None] + geo


def post_step_ages(d: np.ndarray) -> np.ndarray:
    """``Δ(t+1)`` for t = 1..T, given per-slot delivery probabilities ``d``."""
    n, horizon = d.shape
    out = np.empty((n, horizon), dtype=np.result_type(d, float))
    current = np.ones(n, dtype=out.dtype)
    for a, b in _run_bounds(d):
        vals = _run_values(current, d[:, a], b - a)
        out[:, a:b] = vals
        current = vals[:, -1]
    return out


def ages_from_delivery(d: np.ndarray, age_indexing: str) -> np.ndarray:
    post = post_step_ages(d)
    if age_indexing == SHIFTED:
        return post
    standard = np.empty_like(post)
    standard[:, 0] = 1.0
    standard[:, 1:] = post[:, :-1]
    return standard


def exact_age(config: SystemConfig, policy: SchedulingPolicy, sigma: BlockingMatrix) -> AgeReport:
    """Exact expected age of every user in every slot.

    Standard indexing reports ``Δ(1..T)``. Shifted indexing reports
    ``Δ(2..T+1)``, so every slot's jamming decision (including the last one)
    enters the average and reversing time leaves the objective unchanged.
    """
    check_policy(config, policy)
    check_blocking(config, sigma)
    d = delivery_probabilities(config, policy, sigma)
    return AgeReport.from_per_slot(ages_from_delivery(d, config.age_indexing))


def exact_age_rational(
    config: SystemConfig, policy: SchedulingPolicy, sigma: BlockingMatrix
) -> tuple[list[Fraction], Fraction]:
    """Slot-by-slot recursion in exact rational arithmetic.

    Every float input is converted exactly, so two instances that are equal
    in exact arithmetic compare equal here. Returns per-user averages and
    the system average.
    """
    check_policy(config, policy)
    check_blocking(config, sigma)
    p = [Fraction(float(x)) for x in policy.user_pmf]
    w = [[Fraction(float(x)) for x in row] for row in sigma.weights]
    horizon = config.horizon
    if isinstance(config.variant, Diversity):
        q = [Fraction(float(x)) for x in policy.subcarrier_pmf]
        shared = [sum(qj * (1 - w[j][t]) for j, qj in enumerate(q)) for t in range(horizon)]
        avail = [shared] * config.n_users
    else:
        avail = [[1 - x for x in row] for row in w]
    shifted = config.age_indexing == SHIFTED
    per_user = []
    for i in range(config.n_users):
        delta = Fraction(1)
        total = Fraction(0) if shifted else Fraction(1)
        steps = horizon if shifted else horizon - 1
        for t in range(steps):
            delta = delta * (1 - p[i] * avail[i][t]) + 1
            total += delta
        per_user.append(total / horizon)
    return per_user, sum(per_user) / config.n_users


def train_value(
    config: SystemConfig,
    policy: SchedulingPolicy,
    user: int,
    sigma: BlockingMatrix,
    start: int,
    end: int,
) -> float:
    """Product of the survival factors of ``user`` over slots ``start..end``.

    Slots are 0-based and inclusive on both ends.
    """
    if not 0 <= start <= end < config.horizon:
        raise IndexError(f"train [{start}, {end}] outside horizon {config.horizon}")
    if not 0 <= user < config.n_users:
        raise IndexError(f"user {user} out of range")
    d = delivery_probabilities(config, policy, sigma)[user, start : end + 1]
    return math.prod((1.0 - d).tolist())


def schedule_age(config: SystemConfig, schedule, sigma: BlockingMatrix) -> AgeReport:
    """Ages under a deterministic schedule (``schedule[t]`` = user served at t).

    The path is deterministic for a 0/1 blocking matrix, so the "expected"
    ages are just the realized ages.
    """
    if isinstance(config.variant, Diversity):
        raise ValueError("deterministic schedules are defined for the no-diversity model")
    check_blocking(config, sigma)
    schedule = np.asarray(schedule, dtype=int)
    horizon = config.horizon
    d = np.zeros((config.n_users, horizon))
    d[schedule, np.arange(horizon)] = 1.0
    d *= 1.0 - sigma.weights
    return AgeReport.from_per_slot(ages_from_delivery(d, config.age_indexing))


def asymptotic_age(
    config: SystemConfig,
    policy: SchedulingPolicy,
    cbs: CbsSpec,
    spread: bool = False,
) -> tuple[np.ndarray, float]:
    """Large-horizon approximation of per-user and system ages.

    Without diversity, unblocked users sit at ``1/p_j`` and the blocked user
    at ``(1+a)(1-p)/p + a(1+aT)/2 + 1``. With diversity every user sees three
    blocks, and inside the middle one its delivery probability drops from
    ``p_i`` to ``p_i (1 - q_target)`` (or ``p_i (1 - 1/N_sub)`` when
    ``spread`` jams a uniformly random sub-carrier per slot).
    """
    p = np.asarray(policy.user_pmf, dtype=float)
    if np.any(p <= 0):
        raise ValueError("asymptotic ages need every p_i > 0")
    if not 0 <= cbs.target < config.n_targets:
        raise ValueError(f"target {cbs.target + 1} out of range")
    a = config.alpha_float
    horizon = config.horizon
    if isinstance(config.variant, Diversity):
        q = policy.subcarrier_pmf
        lost = 1.0 / len(q) if spread else q[cbs.target]
        if lost >= 1:
            raise ValueError("the jammed sub-carrier carries all traffic; age is unbounded")
        per_user = (1 - a) / p + a / (p * (1 - lost))
    else:
        per_user = 1.0 / p
        pt = p[cbs.target]
        per_user[cbs.target] = (1 + a) * (1 - pt) / pt + a * (1 + a * horizon) / 2 + 1
    return per_user, math.fsum(per_user) / len(per_user)


__all__ = [
    "ValidationError",
    "ages_from_delivery",
    "asymptotic_age",
    "availability",
    "delivery_probabilities",
    "exact_age",
    "exact_age_rational",
    "post_step_ages",
    "schedule_age",
    "step_age",
    "train_value",
]
