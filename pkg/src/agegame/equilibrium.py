"""Best-response dynamics, the Stackelberg point and the diversity Nash audit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversary import cbs_scan_best_adversary, centered_start
from .engine import exact_age
from .model import (
    BlockingMatrix,
    CbsSpec,
    Diversity,
    NoDiversity,
    SchedulingPolicy,
    SystemConfig,
)
from .policies import (
    numeric_best_policy,
    optimal_policy_vs_cbs,
    uniform_policy,
)

NASH_VERIFIED = "NashVerified"
NASH_ABSENT = "NashAbsent"
NASH_REJECTED = "NashRejected"
STACKELBERG = "Stackelberg"

AUDIT_TOL = 1e-9
REVISIT_TOL = 1e-6
BUMPS = (0.01, 0.05, 0.1)


@dataclass
class Deviation:
    side: str  # "bs" or "adversary"
    label: str
    value: float
    improving: bool
    detail: dict = field(default_factory=dict)


@dataclass
class EquilibriumResult:
    kind: str
    bs_policy: SchedulingPolicy
    adversary: BlockingMatrix | CbsSpec | None
    value: float
    evidence: list = field(default_factory=list)

    @property
    def violations(self) -> list[Deviation]:
        return [d for d in self.evidence if isinstance(d, Deviation) and d.improving]

    @property
    def passed(self) -> bool:
        return self.kind != NASH_REJECTED and not self.violations


# --------------------------------------------------------------------------
# best-response dynamics


@dataclass(frozen=True)
class Round:
    policy: SchedulingPolicy
    cbs: CbsSpec | None
    value: float


@dataclass
class DynamicsTrace:
    rounds: list[Round]
    outcome: str  # "fixed_point", "cycle" or "max_rounds"
    period: int = 0

    @property
    def targets(self) -> list[int | None]:
        return [None if r.cbs is None else r.cbs.target for r in self.rounds]


def _bs_response(config, cbs, bs_response):
    if cbs is None:
        return uniform_policy(config)
    if bs_response == "closed_form" and cbs.length == config.budget:
        return optimal_policy_vs_cbs(config.n_users, config.alpha_float, cbs.target)
    return numeric_best_policy(config, cbs.to_blocking(config))


def best_response_dynamics(
    config: SystemConfig,
    start_policy: SchedulingPolicy | None = None,
    max_rounds: int = 20,
    bs_response: str = "closed_form",
) -> DynamicsTrace:
    """Alternate adversary and base-station best responses.

    Each round the adversary picks the best centered full-budget run against
    the current policy, then the base station answers that run (closed form
    by default, ``bs_response="numeric"`` for the numerical optimizer). A
    round whose policy and target repeat an earlier round, per-coordinate
    within 1e-6, closes a cycle; period 1 is a fixed point.
    """
    if not isinstance(config.variant, NoDiversity):
        raise ValueError("best-response dynamics are defined for the no-diversity model")
    if config.n_users < 2:
        raise ValueError("need at least two users")
    if bs_response not in ("closed_form", "numeric"):
        raise ValueError("bs_response must be 'closed_form' or 'numeric'")
    policy = start_policy or uniform_policy(config)
    rounds: list[Round] = []
    for _ in range(max_rounds):
        cbs, value = cbs_scan_best_adversary(config, policy)
        current = Round(policy, cbs, value)
        for back, earlier in enumerate(reversed(rounds), start=1):
            same_target = (earlier.cbs is None) == (cbs is None) and (
                cbs is None or earlier.cbs.target == cbs.target
            )
            close = np.max(np.abs(earlier.policy.user_pmf - policy.user_pmf)) <= REVISIT_TOL
            if same_target and close:
                outcome = "fixed_point" if back == 1 else "cycle"
                return DynamicsTrace(rounds, outcome, back)
        rounds.append(current)
        policy = _bs_response(config, cbs, bs_response)
    return DynamicsTrace(rounds, "max_rounds")


def nash_no_diversity(config: SystemConfig, max_rounds: int = 20) -> EquilibriumResult:
    """Search for a pure equilibrium with best-response dynamics from uniform."""
    trace = best_response_dynamics(config, max_rounds=max_rounds)
    last = trace.rounds[-1]
    sigma = None if last.cbs is None else last.cbs.to_blocking(config)
    if trace.outcome == "cycle":
        kind = NASH_ABSENT
    elif trace.outcome == "fixed_point":
        kind = NASH_VERIFIED
    else:
        kind = NASH_REJECTED
    return EquilibriumResult(kind, last.policy, sigma, last.value, [trace])


# --------------------------------------------------------------------------
# Stackelberg


def _ordered_vertices(n_users: int, k: int) -> np.ndarray:
    """Columns ``(k/m, ..., k/m, 0, ..., 0)`` for m = k..N; their hull is the ordered region."""
    sizes = np.arange(k, n_users + 1)
    return np.array([[k / m if i < m else 0.0 for m in sizes] for i in range(n_users)])


def ordered_deviations(n_users: int, k: int, count: int, seed: int) -> list[np.ndarray]:
    """Non-uniform policies with ``p_1 >= ... >= p_N`` and marginals summing to ``k``.

    Starts with structured tilts of the uniform policy towards each
    ordered vertex, then fills up with seeded random points of the ordered
    region.
    """
    basis = _ordered_vertices(n_users, k)
    m = basis.shape[1]
    if m == 1:
        return []
    uniform = np.full(n_users, k / n_users)
    out = []
    for j in range(m - 1):
        for eps in BUMPS:
            out.append((1 - eps) * uniform + eps * basis[:, j])
    rng = np.random.default_rng(seed)
    while len(out) < count:
        x = rng.dirichlet(np.ones(m))
        p = basis @ x
        if np.max(p) - np.min(p) > 1e-9:
            out.append(p)
    return out[:count]


def stackelberg_point(config: SystemConfig, n_policies: int = 50, seed: int = 0) -> EquilibriumResult:
    """Uniform leader with the follower's centered full-budget run on user 1.

    Every audited ordered deviation is answered by the follower's best run;
    the leader must not do better than with the uniform policy.
    """
    if isinstance(config.variant, Diversity):
        raise ValueError("the Stackelberg point is defined without diversity")
    leader = uniform_policy(config)
    cbs, value = cbs_scan_best_adversary(config, leader)
    k = config.users_per_slot
    evidence = []
    for p in ordered_deviations(config.n_users, k, n_policies, seed):
        reply, cost = cbs_scan_best_adversary(config, SchedulingPolicy(p))
        evidence.append(
            Deviation(
                "bs",
                "ordered",
                cost,
                cost < value - AUDIT_TOL,
                {
                    "policy": p.tolist(),
                    "follower_target": None if reply is None else reply.target,
                    "margin": cost - value,
                },
            )
        )
    return EquilibriumResult(STACKELBERG, leader, cbs, value, evidence)


# --------------------------------------------------------------------------
# diversity Nash audit


def spread_block(config: SystemConfig, start: int, length: int) -> BlockingMatrix:
    """A run of blocked slots whose jammed sub-carrier is uniformly random each slot."""
    nsub = config.n_targets
    w = np.zeros((nsub, config.horizon))
    w[:, start : start + length] = 1.0 / nsub
    return BlockingMatrix(w)


def _bumped(x: np.ndarray, i: int, delta: float) -> np.ndarray:
    y = x.copy()
    y[i] = max(0.0, y[i] + delta)
    return y / y.sum()


def _split_block(config, rng, length) -> BlockingMatrix:
    """Budget split into 2 or 3 runs at random places on random sub-carriers."""
    nsub, horizon = config.n_targets, config.horizon
    parts = int(rng.integers(2, 4))
    cuts = np.sort(rng.choice(np.arange(1, length), size=min(parts - 1, length - 1), replace=False))
    sizes = np.diff(np.concatenate(([0], cuts, [length])))
    free = horizon - length
    gaps = np.sort(rng.integers(0, free + 1, size=len(sizes)))
    w = np.zeros((nsub, horizon))
    pos = 0
    prev_gap = 0
    for size, gap in zip(sizes, gaps):
        pos += gap - prev_gap
        prev_gap = gap
        w[int(rng.integers(nsub)), pos : pos + size] = 1.0
        pos += size
    return BlockingMatrix(w)


def verify_nash_diversity(
    config: SystemConfig, n_deviations: int = 200, seed: int = 0
) -> EquilibriumResult:
    """Audit (uniform p, uniform q, centered spread block) for profitable deviations.

    The base station deviates in p and in q against the fixed block; the
    adversary deviates against the fixed uniform policy with every
    single-run placement and length on every sub-carrier, with split
    budgets and with per-slot sub-carrier reassignments. ``n_deviations``
    sets how many base-station deviations and how many sampled adversary
    deviations are drawn (structured ones come first).
    """
    if not isinstance(config.variant, Diversity):
        raise ValueError("the diversity audit needs the diversity model")
    nsub = config.variant.n_subcarriers
    n = config.n_users
    length = min(config.budget, config.horizon)
    start = centered_start(config.horizon, length)
    candidate = uniform_policy(config)
    sigma = spread_block(config, start, length)
    value = exact_age(config, candidate, sigma).system_average
    rng = np.random.default_rng(seed)
    evidence: list[Deviation] = []

    def bs(label, p, q):
        v = exact_age(config, SchedulingPolicy(p, q), sigma).system_average
        evidence.append(
            Deviation("bs", label, v, v < value - AUDIT_TOL, {"p": p.tolist(), "q": q.tolist()})
        )

    def adv(label, w, detail):
        v = exact_age(config, candidate, w).system_average
        evidence.append(Deviation("adversary", label, v, v > value + AUDIT_TOL, detail))

    p0, q0 = candidate.user_pmf, candidate.subcarrier_pmf
    structured = [
        (f"p[{i + 1}]{d:+g}", _bumped(p0, i, d), q0)
        for i in range(n)
        for b in BUMPS
        for d in (b, -b)
    ] + [
        (f"q[{j + 1}]{d:+g}", p0, _bumped(q0, j, d))
        for j in range(nsub)
        for b in BUMPS
        for d in (b, -b)
    ]
    for label, p, q in structured[:n_deviations]:
        bs(label, p, q)
    for _ in range(max(0, n_deviations - len(structured))):
        which = rng.integers(3)
        p = rng.dirichlet(np.ones(n)) if which != 1 else p0
        q = rng.dirichlet(np.ones(nsub)) if which != 0 else q0
        bs("random", p, q)

    if length > 0:
        # every placement of the full-budget run, and every shorter centered run
        placements = [(s, length) for s in range(config.horizon - length + 1)]
        placements += [(centered_start(config.horizon, run), run) for run in range(1, length)]
        for s, run in placements:
            for j in range(nsub):
                adv(
                    "single",
                    CbsSpec(j, s, run).to_blocking(config),
                    {"target": j + 1, "start": s + 1, "length": run},
                )
        for _ in range(n_deviations):
            if length >= 2:
                adv("split", _split_block(config, rng, length), {})
            w = np.zeros((nsub, config.horizon))
            w[rng.integers(nsub, size=length), np.arange(start, start + length)] = 1.0
            adv("reassigned", BlockingMatrix(w), {})
    kind = NASH_VERIFIED if not any(d.improving for d in evidence) else NASH_REJECTED
    return EquilibriumResult(kind, candidate, sigma, value, evidence)

