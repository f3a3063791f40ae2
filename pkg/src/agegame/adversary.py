"""Adversary strategies: consecutive blocking runs and exhaustive search."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import exact_age
from .model import (
    SHIFTED,
    BlockingMatrix,
    CbsSpec,
    Diversity,
    SchedulingPolicy,
    SystemConfig,
    check_policy,
)

DEFAULT_CAP = 10**8
TIE_RTOL = 1e-12


class EnumerationCapExceeded(RuntimeError):
    """The exhaustive search would evaluate more matrices than allowed."""

    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"search space has {size} blocking matrices, cap is {cap}")


def centered_start(horizon: int, length: int) -> int:
    """0-based start that leaves ``floor`` free slots on the left, the rest on the right."""
    return (horizon - length) // 2


def make_cbs(config: SystemConfig, target: int, length: int, placement="centered") -> BlockingMatrix:
    """A single run of ``length`` blocked slots on ``target``.

    ``placement`` is ``"centered"`` or a 0-based start slot.
    """
    return cbs_spec(config, target, length, placement).to_blocking(config)


def cbs_spec(config: SystemConfig, target: int, length: int, placement="centered") -> CbsSpec:
    if length > config.budget:
        raise ValueError(f"run of {length} slots exceeds budget {config.budget}")
    if length > config.horizon:
        raise ValueError("run longer than the horizon")
    start = centered_start(config.horizon, length) if placement == "centered" else int(placement)
    if start < 0 or start + length > config.horizon:
        raise ValueError(f"run [{start + 1}, {start + length}] does not fit in 1..{config.horizon}")
    if not 0 <= target < config.n_targets:
        raise ValueError(f"target {target + 1} out of range")
    return CbsSpec(target, start, length)


def mirror_blocking(config: SystemConfig, sigma: BlockingMatrix) -> BlockingMatrix:
    """Reflect the schedule in time: slot t moves to slot T+1-t."""
    return BlockingMatrix(sigma.weights[:, ::-1])


def shift_cbs(cbs: CbsSpec, direction: str, horizon: int) -> CbsSpec:
    step = {"left": -1, "right": 1}[direction.lower()]
    start = cbs.start + step
    if start < 0 or start + cbs.length > horizon:
        raise ValueError(f"shifting {direction} leaves the horizon")
    return CbsSpec(cbs.target, start, cbs.length)


def as_cbs(sigma: BlockingMatrix) -> CbsSpec | None:
    """The CBS ``sigma`` consists of, or None if it is not one contiguous run on one target."""
    w = sigma.weights
    if not sigma.is_deterministic:
        return None
    rows = np.flatnonzero(w.any(axis=1))
    if len(rows) != 1:
        return None
    slots = np.flatnonzero(w[rows[0]])
    if slots[-1] - slots[0] + 1 != len(slots):
        return None
    return CbsSpec(int(rows[0]), int(slots[0]), len(slots))


def is_centered(cbs: CbsSpec, horizon: int) -> bool:
    return abs(cbs.left_free() - cbs.right_free(horizon)) <= 1


# --------------------------------------------------------------------------
# exhaustive search


def _slot_options(config: SystemConfig) -> list[tuple[int, ...]]:
    targets = range(config.n_targets)
    limit = min(config.per_slot_limit, config.n_targets)
    opts = [()]
    for size in range(1, limit + 1):
        opts.extend(itertools.combinations(targets, size))
    return sorted(opts)


def enumeration_size(config: SystemConfig) -> int:
    """Number of feasible deterministic blocking matrices."""
    costs = [len(o) for o in _slot_options(config)]
    budget = config.budget
    ways = [1] + [0] * budget
    for _ in range(config.horizon):
        nxt = [0] * (budget + 1)
        for used, count in enumerate(ways):
            if count:
                for c in costs:
                    if used + c <= budget:
                        nxt[used + c] += count
        ways = nxt
    return sum(ways)


def _survival_table(config: SystemConfig, policy: SchedulingPolicy, options) -> list[list[float]]:
    p = policy.user_pmf.tolist()
    table = []
    for opt in options:
        if isinstance(config.variant, Diversity):
            q = policy.subcarrier_pmf
            avail = math.fsum(q[j] for j in range(len(q)) if j not in opt)
            table.append([1.0 - pi * avail for pi in p])
        else:
            table.append([1.0 if i in opt else 1.0 - pi for i, pi in enumerate(p)])
    return table


def _search(args):
    """DFS over slots ``first..T``; returns (best value, [(value, choice indices)])."""
    options, table, costs, horizon, budget, shifted, prefix = args
    n = len(table[0])
    best = -math.inf
    hits: list[tuple[float, tuple[int, ...]]] = []

    delta = [1.0] * n
    acc = [0.0] * n
    choice: list[int] = []
    for idx in prefix:
        s = table[idx]
        delta = [d * si + 1.0 for d, si in zip(delta, s)]
        acc = [a + d for a, d in zip(acc, delta)]
        budget -= costs[idx]
        choice.append(idx)

    def leaf(acc, delta):
        if shifted:
            return sum(acc) / (n * horizon)
        return sum(1.0 + a - d for a, d in zip(acc, delta)) / (n * horizon)

    def dfs(t, left, delta, acc):
        nonlocal best, hits
        if t == horizon:
            v = leaf(acc, delta)
            if v >= best - TIE_RTOL * abs(best):
                if v > best:
                    best = v
                    hits = [h for h in hits if h[0] >= v - TIE_RTOL * abs(v)]
                hits.append((v, tuple(choice)))
            return
        for idx, c in enumerate(costs):
            if c > left:
                continue
            s = table[idx]
            nd = [d * si + 1.0 for d, si in zip(delta, s)]
            choice.append(idx)
            dfs(t + 1, left - c, nd, [a + d for a, d in zip(acc, nd)])
            choice.pop()

    dfs(len(prefix), budget, delta, acc)
    return best, hits


@dataclass(frozen=True)
class BruteForceResult:
    blocking: BlockingMatrix
    value: float
    argmax: list[BlockingMatrix]
    evaluated: int


def brute_force_best_adversary(
    config: SystemConfig,
    policy: SchedulingPolicy,
    cap: int = DEFAULT_CAP,
    n_jobs: int = 1,
) -> BruteForceResult:
    """Evaluate every feasible deterministic blocking matrix and keep the best.

    Values within a relative 1e-12 of the maximum count as ties; all tied
    matrices are returned in ``argmax`` and the lexicographically smallest
    (per-slot tuples of 1-based targets) is the reported maximizer. The
    search is split by first-slot choice across ``n_jobs`` processes; the
    merge is order independent.
    """
    check_policy(config, policy)
    size = enumeration_size(config)
    if size > cap:
        raise EnumerationCapExceeded(size, cap)
    options = _slot_options(config)
    costs = [len(o) for o in options]
    table = _survival_table(config, policy, options)
    shifted = config.age_indexing == SHIFTED
    common = (options, table, costs, config.horizon, config.budget, shifted)
    tasks = [common + ((i,),) for i, c in enumerate(costs) if c <= config.budget]
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_search, tasks))
    else:
        parts = [_search(t) for t in tasks]

    best = max(b for b, _ in parts)
    hits = [
        choice
        for _, part in parts
        for v, choice in part
        if v >= best - TIE_RTOL * abs(best)
    ]

    def to_matrix(choice):
        w = np.zeros((config.n_targets, config.horizon))
        for t, idx in enumerate(choice):
            for target in options[idx]:
                w[target, t] = 1.0
        return BlockingMatrix(w)

    matrices = sorted((to_matrix(c) for c in hits), key=BlockingMatrix.key)
    winner = matrices[0]
    value = exact_age(config, policy, winner).system_average
    return BruteForceResult(winner, value, matrices, size)


def cbs_scan_best_adversary(
    config: SystemConfig, policy: SchedulingPolicy
) -> tuple[CbsSpec | None, float]:
    """Best centered full-budget run over all targets; ties go to the lowest index.

    Returns ``(None, unblocked value)`` when the budget is zero.
    """
    length = min(config.budget, config.horizon)
    if length == 0:
        empty = BlockingMatrix.empty(config.n_targets, config.horizon)
        return None, exact_age(config, policy, empty).system_average
    best_spec, best_value = None, -math.inf
    for target in range(config.n_targets):
        spec = cbs_spec(config, target, length)
        value = exact_age(config, policy, spec.to_blocking(config)).system_average
        if best_spec is None or value > best_value + TIE_RTOL * abs(best_value):
            best_spec, best_value = spec, value
    return best_spec, best_value
