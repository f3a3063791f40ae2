"""Domain types shared by every part of the package.

Indices are 0-based internally. Everything that crosses a file or CLI
boundary is 1-based (users, sub-carriers and slots alike).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

PMF_ATOL = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates one of the model invariants."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class NoDiversity:
    name = "no_diversity"


@dataclass(frozen=True)
class Diversity:
    n_subcarriers: int
    name = "diversity"


@dataclass(frozen=True)
class GeneralK:
    k: int
    k_a: int
    name = "general_k"


Variant = Union[NoDiversity, Diversity, GeneralK]

SHIFTED = "shifted"
STANDARD = "standard"


def _as_fraction(alpha) -> Fraction:
    if isinstance(alpha, Fraction):
        return alpha
    if isinstance(alpha, str):
        return Fraction(alpha)
    if isinstance(alpha, int):
        return Fraction(alpha)
    # str() round-trips the shortest decimal, so 0.29 -> 29/100 rather than
    # the binary expansion that would floor 0.29*100 down to 28.
    return Fraction(str(float(alpha)))


@dataclass(frozen=True)
class SystemConfig:
    """Parameters of one game instance.

    ``budget`` defaults to ``floor(alpha * horizon)``; pass it explicitly to
    model a different number of blockable channel-slots.
    """

    n_users: int
    horizon: int
    alpha: Fraction
    variant: Variant = field(default_factory=NoDiversity)
    age_indexing: str = SHIFTED
    budget: int = None  # type: ignore[assignment]

    def __post_init__(self):
        self._normalize()
        problems = validate_config(self)
        if problems:
            raise ValidationError(problems)

    def _normalize(self):
        object.__setattr__(self, "alpha", _as_fraction(self.alpha))
        if self.budget is None:
            object.__setattr__(self, "budget", math.floor(self.alpha * self.horizon))

    @classmethod
    def unchecked(cls, **fields) -> "SystemConfig":
        """Construct without validation, e.g. to inspect what is wrong with it."""
        obj = object.__new__(cls)
        defaults = dict(variant=NoDiversity(), age_indexing=SHIFTED, budget=None)
        defaults.update(fields)
        for name, value in defaults.items():
            object.__setattr__(obj, name, value)
        obj._normalize()
        return obj

    @property
    def alpha_float(self) -> float:
        return float(self.alpha)

    @property
    def n_targets(self) -> int:
        """Rows of the blocking matrix: sub-carriers with diversity, users otherwise."""
        if isinstance(self.variant, Diversity):
            return self.variant.n_subcarriers
        return self.n_users

    @property
    def per_slot_limit(self) -> int:
        if isinstance(self.variant, GeneralK):
            return self.variant.k_a
        return 1

    @property
    def users_per_slot(self) -> int:
        if isinstance(self.variant, GeneralK):
            return self.variant.k
        return 1

    def replace(self, **changes) -> "SystemConfig":
        values = dict(
            n_users=self.n_users,
            horizon=self.horizon,
            alpha=self.alpha,
            variant=self.variant,
            age_indexing=self.age_indexing,
            budget=self.budget,
        )
        if ("alpha" in changes or "horizon" in changes) and "budget" not in changes:
            values["budget"] = None
        values.update(changes)
        return SystemConfig(**values)


def validate_config(config: SystemConfig) -> list[str]:
    """Return human-readable descriptions of every violated invariant.

    An empty list means the configuration is valid. A budget of zero is
    accepted; it describes an adversary with nothing to spend.
    """
    problems = []
    if not isinstance(config.n_users, (int, np.integer)) or config.n_users < 1:
        problems.append("n_users must be a positive integer")
    if not isinstance(config.horizon, (int, np.integer)) or config.horizon < 1:
        problems.append("horizon must be a positive integer")
    if not (0 < config.alpha < 1):
        problems.append("alpha must lie strictly between 0 and 1")
    if config.age_indexing not in (SHIFTED, STANDARD):
        problems.append(f"age_indexing must be '{SHIFTED}' or '{STANDARD}'")
    variant = config.variant
    if isinstance(variant, Diversity):
        if variant.n_subcarriers < 2:
            problems.append("diversity requires n_subcarriers >= 2")
    elif isinstance(variant, GeneralK):
        if variant.k < 1 or variant.k_a < 1:
            problems.append("k and k_a must be positive")
        if variant.k > config.n_users:
            problems.append("k <= N required")
        if variant.k_a > config.n_users:
            problems.append("k_a <= N required")
    elif not isinstance(variant, NoDiversity):
        problems.append(f"unknown variant {variant!r}")
    if not isinstance(config.budget, (int, np.integer)) or config.budget < 0:
        problems.append("budget must be a non-negative integer")
    elif not problems:
        limit = config.horizon * config.per_slot_limit
        if config.budget > limit:
            problems.append("budget exceeds horizon x per-slot limit")
    return problems


@dataclass(frozen=True, eq=False)
class SchedulingPolicy:
    """Stationary randomized policy of the base station.

    ``user_pmf`` holds per-user scheduling probabilities (marginals that sum
    to ``k`` when ``k`` users are served per slot). ``subcarrier_pmf`` is
    present only for the diversity model.
    """

    user_pmf: np.ndarray
    subcarrier_pmf: np.ndarray | None = None

    def __post_init__(self):
        p = np.array(self.user_pmf, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "user_pmf", p)
        if self.subcarrier_pmf is not None:
            q = np.array(self.subcarrier_pmf, dtype=float)
            q.setflags(write=False)
            object.__setattr__(self, "subcarrier_pmf", q)

    @property
    def n_users(self) -> int:
        return len(self.user_pmf)

    def __eq__(self, other):
        if not isinstance(other, SchedulingPolicy):
            return NotImplemented
        if (self.subcarrier_pmf is None) != (other.subcarrier_pmf is None):
            return False
        same_q = self.subcarrier_pmf is None or np.array_equal(
            self.subcarrier_pmf, other.subcarrier_pmf
        )
        return np.array_equal(self.user_pmf, other.user_pmf) and same_q

    def __repr__(self):
        q = "" if self.subcarrier_pmf is None else f", q={self.subcarrier_pmf.tolist()}"
        return f"SchedulingPolicy(p={self.user_pmf.tolist()}{q})"


def validate_policy(config: SystemConfig, policy: SchedulingPolicy) -> list[str]:
    problems = []
    p = policy.user_pmf
    if p.shape != (config.n_users,):
        return [f"user_pmf has {p.size} entries, expected {config.n_users}"]
    if np.any(p < 0) or np.any(p > 1):
        problems.append("user_pmf entries must lie in [0, 1]")
    target = config.users_per_slot
    if abs(math.fsum(p) - target) > PMF_ATOL:
        problems.append(f"user_pmf must sum to {target}")
    q = policy.subcarrier_pmf
    if isinstance(config.variant, Diversity):
        if q is None:
            problems.append("diversity model requires a subcarrier_pmf")
        elif q.shape != (config.variant.n_subcarriers,):
            problems.append(
                f"subcarrier_pmf has {q.size} entries, expected {config.variant.n_subcarriers}"
            )
        else:
            if np.any(q < 0) or np.any(q > 1):
                problems.append("subcarrier_pmf entries must lie in [0, 1]")
            if abs(math.fsum(q) - 1.0) > PMF_ATOL:
                problems.append("subcarrier_pmf must sum to 1")
    elif q is not None:
        problems.append("subcarrier_pmf is only allowed in the diversity model")
    return problems


def check_policy(config: SystemConfig, policy: SchedulingPolicy) -> None:
    problems = validate_policy(config, policy)
    if problems:
        raise ValidationError(problems)


class BlockingMatrix:
    """Jamming schedule of the adversary.

    Stored as a dense ``(n_targets, horizon)`` array of blocking
    probabilities. A deterministic schedule has entries in {0, 1}; a
    fractional entry means the target is jammed in that slot with that
    probability, independently of everything else (used for the diversity
    adversary that spreads a blocked slot uniformly over sub-carriers).
    """

    __slots__ = ("_w",)

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if w.ndim != 2:
            raise ValueError("blocking weights must be a 2-D (targets x slots) array")
        if np.any(w < 0) or np.any(w > 1):
            raise ValueError("blocking weights must lie in [0, 1]")
        w.setflags(write=False)
        self._w = w

    @classmethod
    def empty(cls, n_targets: int, horizon: int) -> "BlockingMatrix":
        return cls(np.zeros((n_targets, horizon)))

    @classmethod
    def from_pairs(
        cls, n_targets: int, horizon: int, pairs: Iterable[tuple[int, int]]
    ) -> "BlockingMatrix":
        """Build from 0-based ``(target, slot)`` pairs."""
        w = np.zeros((n_targets, horizon))
        for target, slot in pairs:
            w[target, slot] = 1.0
        return cls(w)

    @classmethod
    def from_slots(
        cls, n_targets: int, horizon: int, slots: Mapping[int, Iterable[int]]
    ) -> "BlockingMatrix":
        """Build from a 0-based ``{slot: targets}`` mapping."""
        return cls.from_pairs(
            n_targets, horizon, ((tg, s) for s, tgs in slots.items() for tg in tgs)
        )

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def n_targets(self) -> int:
        return self._w.shape[0]

    @property
    def horizon(self) -> int:
        return self._w.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self._w == 0) | (self._w == 1)))

    @property
    def total_blocked(self) -> float:
        return math.fsum(self._w.ravel())

    def blocked_targets(self, slot: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self._w[:, slot]))

    def key(self) -> tuple:
        """Per-slot tuples of 1-based blocked targets; the tie-break order."""
        return tuple(
            tuple(i + 1 for i in self.blocked_targets(s)) for s in range(self.horizon)
        )

    def __eq__(self, other):
        if not isinstance(other, BlockingMatrix):
            return NotImplemented
        return self._w.shape == other._w.shape and np.array_equal(self._w, other._w)

    def __hash__(self):
        return hash((self._w.shape, self._w.tobytes()))

    def __repr__(self):
        runs = {s + 1: list(t) for s, t in enumerate(self.key()) if t}
        return f"BlockingMatrix(targets={self.n_targets}, T={self.horizon}, blocked={runs})"


def validate_blocking(config: SystemConfig, sigma: BlockingMatrix) -> list[str]:
    problems = []
    if sigma.weights.shape != (config.n_targets, config.horizon):
        return [
            f"blocking matrix shape {sigma.weights.shape} does not match "
            f"({config.n_targets}, {config.horizon})"
        ]
    if sigma.total_blocked > config.budget + 1e-9:
        problems.append(
            f"budget exceeded: {sigma.total_blocked:g} blocked pairs > budget {config.budget}"
        )
    per_slot = sigma.weights.sum(axis=0)
    worst = int(np.argmax(per_slot)) if per_slot.size else 0
    if per_slot.size and per_slot[worst] > config.per_slot_limit + 1e-9:
        problems.append(
            f"per-slot limit exceeded at slot {worst + 1}: "
            f"{per_slot[worst]:g} > {config.per_slot_limit}"
        )
    return problems


def check_blocking(config: SystemConfig, sigma: BlockingMatrix) -> None:
    problems = validate_blocking(config, sigma)
    if problems:
        raise ValidationError(problems)


@dataclass(frozen=True)
class CbsSpec:
    """A single consecutive run of blocked slots on one target (0-based)."""

    target: int
    start: int
    length: int

    def __post_init__(self):
        if self.start < 0:
            raise ValueError("CBS start must be >= slot 1")
        if self.length < 1:
            raise ValueError("CBS length must be positive")

    @property
    def stop(self) -> int:
        return self.start + self.length

    def left_free(self) -> int:
        return self.start

    def right_free(self, horizon: int) -> int:
        return horizon - self.stop

    def to_blocking(self, config: SystemConfig) -> BlockingMatrix:
        if self.stop > config.horizon:
            raise ValueError("CBS extends past the horizon")
        if self.target >= config.n_targets:
            raise ValueError(f"target {self.target + 1} out of range")
        w = np.zeros((config.n_targets, config.horizon))
        w[self.target, self.start : self.stop] = 1.0
        return BlockingMatrix(w)


@dataclass(frozen=True, eq=False)
class AgeReport:
    """Expected ages of every user in every slot, and their averages."""

    per_slot: np.ndarray
    per_user: np.ndarray
    system_average: float

    @classmethod
    def from_per_slot(cls, per_slot: np.ndarray) -> "AgeReport":
        per_slot = np.asarray(per_slot, dtype=float)
        horizon = per_slot.shape[1]
        per_user = np.array([math.fsum(row) / horizon for row in per_slot])
        system = math.fsum(per_user) / len(per_user)
        per_slot.setflags(write=False)
        per_user.setflags(write=False)
        return cls(per_slot, per_user, system)
