"""Slot-by-slot Monte Carlo simulation and the bound checks built on it.

Random numbers come from numpy's Philox4x64 counter-based generator. The
replications are cut into blocks of ``BLOCK_REPS``; block ``b`` draws from
``Philox(key=seed, counter=[0, 0, b, 0])``, so every block has its own
stream no matter which worker runs it, and results are concatenated in
replication order. Within a block the draws are, in this order: one
uniform per (rep, slot) for the user choice, one per (rep, slot) for the
sub-carrier choice (diversity only), and one per (rep, target, slot) for
fractional blocking entries (only when the matrix is not 0/1). Changing
any of this changes the numbers and needs a major version bump.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adversary import cbs_scan_best_adversary, centered_start, make_cbs
from .engine import schedule_age
from .model import (
    SHIFTED,
    BlockingMatrix,
    Diversity,
    GeneralK,
    SchedulingPolicy,
    SystemConfig,
    check_blocking,
    check_policy,
)
from .policies import systematic_selection, uniform_policy

BLOCK_REPS = 4096


@dataclass(frozen=True, eq=False)
class SimResult:
    reps: int
    mean_system_age: float
    stderr: float
    per_user_means: np.ndarray
    seed: int
    per_rep: np.ndarray = field(repr=False)  # (reps, N) per-user time averages

    def identical(self, other: "SimResult") -> bool:
        """Bit-for-bit equality of every field."""
        return (
            self.reps == other.reps
            and self.seed == other.seed
            and np.array_equal(self.per_rep, other.per_rep)
            and self.mean_system_age.hex() == other.mean_system_age.hex()
            and np.float64(self.stderr).tobytes() == np.float64(other.stderr).tobytes()
            and self.per_user_means.tobytes() == other.per_user_means.tobytes()
        )


def _generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, block, 0]))


def _served(config, policy, u):
    """Boolean (reps, T, N) mask of scheduled users for uniforms ``u``."""
    p = policy.user_pmf
    if isinstance(config.variant, GeneralK):
        return systematic_selection(p, u)
    cdf = np.cumsum(p)
    cdf[-1] = np.inf
    chosen = np.searchsorted(cdf, u, side="right")
    return chosen[..., None] == np.arange(config.n_users)


def _simulate_block(config, policy, w, seed, block, size):
    rng = _generator(seed, block)
    horizon, n = config.horizon, config.n_users
    served = _served(config, policy, rng.random((size, horizon)))
    if isinstance(config.variant, Diversity):
        qcdf = np.cumsum(policy.subcarrier_pmf)
        qcdf[-1] = np.inf
        sub = np.searchsorted(qcdf, rng.random((size, horizon)), side="right")
    deterministic = np.all((w == 0) | (w == 1))
    if deterministic:
        blocked = np.broadcast_to(w.astype(bool), (size,) + w.shape)
    else:
        blocked = rng.random((size,) + w.shape) < w
    if isinstance(config.variant, Diversity):
        hit = np.take_along_axis(blocked, sub[:, None, :], axis=1)[:, 0, :]
        delivered = served & ~hit[..., None]
    else:
        delivered = served & ~np.swapaxes(blocked, 1, 2)

    age = np.ones((size, n))
    total = np.zeros((size, n))
    shifted = config.age_indexing == SHIFTED
    for t in range(horizon):
        if not shifted:
            total += age
        age = np.where(delivered[:, t, :], 1.0, age + 1.0)
        if shifted:
            total += age
    return total / horizon


def simulate(
    config: SystemConfig,
    policy: SchedulingPolicy,
    sigma: BlockingMatrix,
    seed: int,
    reps: int,
    threads: int | None = None,
) -> SimResult:
    """Simulate ``reps`` independent sample paths and average their ages.

    A delivery resets the age to 1, any other slot adds 1. The result is
    identical for every ``threads`` value.
    """
    check_policy(config, policy)
    check_blocking(config, sigma)
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    w = np.asarray(sigma.weights)
    sizes = [min(BLOCK_REPS, reps - start) for start in range(0, reps, BLOCK_REPS)]
    jobs = [(config, policy, w, seed, b, size) for b, size in enumerate(sizes)]
    threads = threads or os.cpu_count() or 1
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: _simulate_block(*job), jobs))
    else:
        parts = [_simulate_block(*job) for job in jobs]
    per_rep = np.concatenate(parts)
    system = per_rep.mean(axis=1)
    mean = float(np.sum(system) / reps)
    stderr = float(np.std(system, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    per_user = np.sum(per_rep, axis=0) / reps
    per_rep.setflags(write=False)
    return SimResult(reps, mean, stderr, per_user, seed, per_rep)


# --------------------------------------------------------------------------
# bound checks


@dataclass
class BoundReport:
    name: str
    bound: float
    measured: float
    stderr: float
    kind: str  # "upper" or "lower"
    passed: bool
    details: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        """Distance to the bound on the safe side; negative means violated."""
        if self.kind == "upper":
            return self.bound - self.measured
        return self.measured - self.bound


def _upper(name, bound, measured, stderr, slack=3.0, **details):
    ok = measured <= bound + slack * stderr
    return BoundReport(name, bound, measured, stderr, "upper", bool(ok), details)


def _lower(name, bound, measured, stderr=0.0, **details):
    return BoundReport(name, bound, measured, stderr, "lower", bool(measured >= bound), details)


def check_upper_bound_no_diversity(
    n_users: int, horizon: int, alpha: float, seed: int = 0, reps: int = 2000, threads=None
) -> BoundReport:
    """Uniform policy against a centered full-budget run on user 1, simulated.

    Also reports the mean age of the unblocked users, which renewal reward
    puts at N.
    """
    config = SystemConfig(n_users, horizon, alpha)
    policy = uniform_policy(config)
    sigma = make_cbs(config, 0, min(config.budget, horizon))
    res = simulate(config, policy, sigma, seed, reps, threads)
    bound = (horizon + 1) / (2 * n_users) + (n_users - 1)
    unblocked = float(np.mean(res.per_user_means[1:])) if n_users > 1 else float("nan")
    return _upper(
        "upper_no_diversity",
        bound,
        res.mean_system_age,
        res.stderr,
        unblocked_user_mean=unblocked,
        renewal_mean=float(n_users),
        reps=reps,
        seed=seed,
    )


def round_robin_blocked(config: SystemConfig) -> tuple[np.ndarray, BlockingMatrix]:
    """Round-robin schedule and the adversary that jams whoever is scheduled.

    The jammed slots form one centered run of ``budget`` slots.
    """
    horizon = config.horizon
    schedule = np.arange(horizon) % config.n_users
    length = min(config.budget, horizon)
    start = centered_start(horizon, length)
    w = np.zeros((config.n_users, horizon))
    slots = np.arange(start, start + length)
    w[schedule[slots], slots] = 1.0
    return schedule, BlockingMatrix(w)


def check_lower_bounds(
    n_users: int, horizon: int, alpha: float, n_subcarriers: int = 2
) -> list[BoundReport]:
    """Exact values under worst-case adversaries against the three lower bounds."""
    a = float(alpha)
    config = SystemConfig(n_users, horizon, alpha)
    _, randomized = cbs_scan_best_adversary(config, uniform_policy(config))
    schedule, sigma = round_robin_blocked(config)
    deterministic = schedule_age(config, schedule, sigma).system_average
    div = SystemConfig(n_users, horizon, alpha, variant=Diversity(n_subcarriers))
    _, diversity = cbs_scan_best_adversary(div, uniform_policy(div))
    return [
        _lower("lower_randomized", horizon * a * a / (2 * n_users), randomized),
        _lower("lower_deterministic", horizon * a * a / 2, deterministic),
        _lower("lower_diversity", (n_users + 1) / 2, diversity),
    ]


def check_diversity_bound(
    n_users: int,
    n_subcarriers: int,
    horizon: int,
    alpha: float = 0.3,
    seed: int = 0,
    reps: int = 200,
    threads=None,
) -> list[BoundReport]:
    """Uniform p and q against a centered full-budget run on sub-carrier 1, simulated.

    Returns the upper bound N*N_sub/(N_sub-1), the (N+1)/2 lower bound and
    the ratio of the measured mean to that lower bound against
    2*N_sub/(N_sub-1).
    """
    config = SystemConfig(n_users, horizon, alpha, variant=Diversity(n_subcarriers))
    policy = uniform_policy(config)
    sigma = make_cbs(config, 0, min(config.budget, horizon))
    res = simulate(config, policy, sigma, seed, reps, threads)
    m, se = res.mean_system_age, res.stderr
    lower = (n_users + 1) / 2
    return [
        _upper("upper_diversity", n_users * n_subcarriers / (n_subcarriers - 1), m, se),
        _lower("lower_diversity_simulated", lower, m, se),
        _upper(
            "ratio_diversity",
            2 * n_subcarriers / (n_subcarriers - 1),
            m / lower,
            se / lower,
            slack=0.0,
        ),
    ]


def check_alpha_sq_optimality(
    n_users: int, horizon: int | None, alpha: float, seed: int = 0, reps: int = 0, threads=None
) -> BoundReport:
    """Worst-case value of the uniform policy over the Tα²/(2N) lower bound.

    The default horizon is ``ceil(1e5 / α²)``. ``reps=0`` uses the exact
    engine; a positive ``reps`` simulates instead.
    """
    a = float(alpha)
    if horizon is None:
        horizon = math.ceil(1e5 / (a * a))
    config = SystemConfig(n_users, horizon, alpha)
    policy = uniform_policy(config)
    cbs, value = cbs_scan_best_adversary(config, policy)
    stderr = 0.0
    if reps > 0:
        res = simulate(config, policy, cbs.to_blocking(config), seed, reps, threads)
        value, stderr = res.mean_system_age, res.stderr
    lower = horizon * a * a / (2 * n_users)
    return _upper(
        "ratio_alpha_sq",
        1.1 / (a * a),
        value / lower,
        stderr / lower,
        slack=0.0,
        horizon=horizon,
        value=value,
    )


def run_bound_grid(seed: int = 0, threads=None) -> list[BoundReport]:
    """Every bound check on the documented instance grid."""
    reports = [check_upper_bound_no_diversity(5, 999, 0.2, seed, 2000, threads)]
    reports += check_lower_bounds(5, 1000, 0.2, n_subcarriers=3)
    reports += check_lower_bounds(2, 100, 0.2)
    reports += check_diversity_bound(4, 3, 10_000, 0.3, seed, 200, threads)
    reports += check_diversity_bound(4, 2, 10_000, 0.3, seed, 200, threads)
    for a in (0.2, 0.5, 0.9):
        reports.append(check_alpha_sq_optimality(4, None, a))
    return reports


__all__ = [
    "BLOCK_REPS",
    "BoundReport",
    "SimResult",
    "check_alpha_sq_optimality",
    "check_diversity_bound",
    "check_lower_bounds",
    "check_upper_bound_no_diversity",
    "round_robin_blocked",
    "run_bound_grid",
    "simulate",
]
