"""Base-station scheduling policies: closed forms and a numerical optimizer."""

from __future__ import annotations

import itertools
import math
import warnings
from math import comb

import numpy as np

from .engine import ages_from_delivery, availability
from .model import (
    PMF_ATOL,
    BlockingMatrix,
    Diversity,
    GeneralK,
    SchedulingPolicy,
    SystemConfig,
    check_blocking,
)

_COMPLEX_STEP = 1e-30


class InfeasiblePolicyError(ValueError):
    """A closed-form marginal falls outside [0, 1]."""


class ConvergenceWarning(UserWarning):
    pass


def optimal_policy_vs_cbs(n_users: int, alpha: float, blocked_user: int) -> SchedulingPolicy:
    """Best stationary response to a long centered run on ``blocked_user``.

    Stationarity gives ``(1+a)/p_b**2 == 1/p_j**2``, so the blocked user is
    served ``sqrt(1+a)`` times as often as each of the others.
    """
    if n_users < 2:
        raise ValueError("need at least two users")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 <= blocked_user < n_users:
        raise ValueError("blocked_user out of range")
    root = math.sqrt(1 + alpha)
    other = 1.0 / (n_users - 1 + root)
    p = np.full(n_users, other)
    p[blocked_user] = max(0.0, 1.0 - (n_users - 1) * other)
    return SchedulingPolicy(p)


def optimal_policy_general_k(
    n_users: int, k: int, alpha: float, blocked_user: int
) -> SchedulingPolicy:
    """Marginals of the best ``k``-user policy against a run on ``blocked_user``.

    Same stationarity conditions as the single-user case with the marginals
    summing to ``k``: ``p_b = k sqrt(1+a) / (N - 1 + sqrt(1+a))``.
    """
    if not 1 <= k <= n_users:
        raise ValueError("need 1 <= k <= N")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 <= blocked_user < n_users:
        raise ValueError("blocked_user out of range")
    if k == n_users:
        return SchedulingPolicy(np.ones(n_users))
    root = math.sqrt(1 + alpha)
    p_b = k * root / (n_users - 1 + root)
    if p_b > 1:
        raise InfeasiblePolicyError(
            f"blocked-user marginal {p_b:.6g} exceeds 1 for N={n_users}, k={k}, alpha={alpha}"
        )
    p = np.full(n_users, (k - p_b) / (n_users - 1))
    p[blocked_user] = p_b
    return SchedulingPolicy(p)


def stackelberg_leader_policy(n_users: int, k: int = 1) -> SchedulingPolicy:
    return SchedulingPolicy(np.full(n_users, k / n_users))


def uniform_subcarrier(n_subcarriers: int) -> np.ndarray:
    return np.full(n_subcarriers, 1.0 / n_subcarriers)


def uniform_policy(config: SystemConfig) -> SchedulingPolicy:
    q = None
    if isinstance(config.variant, Diversity):
        q = uniform_subcarrier(config.variant.n_subcarriers)
    return SchedulingPolicy(np.full(config.n_users, config.users_per_slot / config.n_users), q)


# --------------------------------------------------------------------------
# groups of k users


def groups(n_users: int, k: int) -> list[tuple[int, ...]]:
    """All k-subsets of users in lexicographic order."""
    return list(itertools.combinations(range(n_users), k))


def marginals_from_group_pmf(n_users: int, k: int, group_pmf) -> np.ndarray:
    group_pmf = np.asarray(group_pmf, dtype=float)
    if group_pmf.shape != (comb(n_users, k),):
        raise ValueError(
            f"expected {comb(n_users, k)} group probabilities for N={n_users}, k={k}"
        )
    if np.any(group_pmf < 0) or abs(math.fsum(group_pmf) - 1) > PMF_ATOL:
        raise ValueError("group probabilities must be non-negative and sum to 1")
    p = np.zeros(n_users)
    for prob, members in zip(group_pmf, groups(n_users, k)):
        p[list(members)] += prob
    return p


def systematic_selection(marginals: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Users served for offsets ``u`` in [0, 1) under systematic sampling.

    Lay the marginals end to end on [0, k) and serve every user whose
    segment contains one of ``u, u+1, ..., u+k-1``. Each user is served with
    exactly its marginal probability and exactly ``k`` distinct users are
    picked, provided every marginal is at most 1. Returns a boolean array of
    shape ``u.shape + (N,)``.
    """
    edges = np.concatenate(([0.0], np.cumsum(marginals)))
    # the marginals sum to an integer; pin the last edge to it so rounding
    # in the cumulative sum cannot leave a sliver with nobody selected
    edges[-1] = round(edges[-1])
    u = np.asarray(u, dtype=float)[..., None]
    hits = np.ceil(edges[1:] - u) - np.ceil(edges[:-1] - u)
    return hits > 0


def group_pmf_from_marginals(marginals) -> np.ndarray:
    """Group distribution induced by systematic sampling, in lexicographic group order."""
    p = np.asarray(marginals, dtype=float)
    k = int(round(math.fsum(p)))
    if abs(math.fsum(p) - k) > 1e-9 or np.any(p < 0) or np.any(p > 1 + 1e-12):
        raise ValueError("marginals must lie in [0, 1] and sum to an integer k")
    cuts = np.mod(np.cumsum(p)[:-1], 1.0)
    cuts = np.unique(np.concatenate(([0.0, 1.0], cuts)))
    index = {g: n for n, g in enumerate(groups(len(p), k))}
    out = np.zeros(len(index))
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0:
            continue
        chosen = systematic_selection(p, np.array((lo + hi) / 2))
        members = tuple(int(i) for i in np.flatnonzero(chosen))
        out[index[members]] += hi - lo
    return out


# --------------------------------------------------------------------------
# numerical best response


def _objective(config, avail, p):
    """System average age and its gradient in ``p`` via a complex step."""
    z = p + 1j * _COMPLEX_STEP
    ages = ages_from_delivery(z[:, None] * avail, config.age_indexing)
    totals = ages.sum(axis=1) / (config.horizon * config.n_users)
    return float(totals.real.sum()), totals.imag / _COMPLEX_STEP


def _capped_normalize(x: np.ndarray, total: float) -> np.ndarray:
    """Rescale positive weights to sum to ``total`` with every entry capped at 1."""
    x = x.copy()
    capped = np.zeros(x.size, dtype=bool)
    for _ in range(x.size + 1):
        free = ~capped
        x[free] *= (total - capped.sum()) / x[free].sum()
        over = free & (x > 1)
        if not over.any():
            break
        capped |= over
        x[capped] = 1.0
    return x


def numeric_best_policy(
    config: SystemConfig,
    sigma: BlockingMatrix,
    tolerance: float = 1e-10,
    max_iter: int = 100_000,
    ordered: bool = False,
    subcarrier_pmf=None,
) -> SchedulingPolicy:
    """Minimize the exact system average age over stationary user policies.

    Exponentiated-gradient (multiplicative) descent from the uniform policy
    with an adaptive step; a step is accepted when the gradient at the trial
    point does not point back along the move. Stops once the objective moves
    less than ``tolerance`` and the Frank-Wolfe gap is below
    ``10 * tolerance`` (scaled by the objective). With ``ordered=True`` the search is restricted to
    ``p_1 >= ... >= p_N`` by descending over mixtures of the vertices
    ``(1/m, ..., 1/m, 0, ..., 0)``. In the diversity model the sub-carrier
    pmf is held fixed (uniform unless given).
    """
    check_blocking(config, sigma)
    n = config.n_users
    k = config.users_per_slot
    q = None
    if isinstance(config.variant, Diversity):
        nsub = config.variant.n_subcarriers
        q = uniform_subcarrier(nsub) if subcarrier_pmf is None else np.asarray(subcarrier_pmf)
    if n == k:
        return SchedulingPolicy(np.ones(n), q)
    avail = np.asarray(availability(config, SchedulingPolicy(np.ones(n), q), sigma))

    if ordered:
        sizes = np.arange(1, n + 1)
        sizes = sizes[sizes >= k]
        basis = np.array([[k / m if i < m else 0.0 for m in sizes] for i in range(n)])
        x = np.full(len(sizes), 1.0 / len(sizes))

        def to_p(x):
            return basis @ x

        def normalize(x):
            return x / x.sum()

        def fw_vertex(grad):
            v = np.zeros_like(grad)
            v[np.argmin(grad)] = 1.0
            return v

    else:
        x = np.full(n, k / n)

        def to_p(x):
            return x

        def normalize(x):
            return _capped_normalize(x, k) if k > 1 else x / x.sum()

        def fw_vertex(grad):
            v = np.zeros_like(grad)
            v[np.argsort(grad, kind="stable")[:k]] = 1.0
            return v

    def evaluate(x):
        f, gp = _objective(config, avail, to_p(x))
        return f, (basis.T @ gp if ordered else gp)

    f, grad = evaluate(x)
    step = 1.0 / max(1e-12, float(np.max(np.abs(grad))))
    converged = False
    for _ in range(max_iter):
        scaled = -step * (grad - grad.min())
        trial = normalize(x * np.exp(scaled))
        f_new, grad_new = evaluate(trial)
        # For a convex objective grad(trial).(trial - x) <= 0 implies no
        # increase; unlike comparing f values this survives a large constant
        # term in f swamping the last digits. The weights keep a fixed sum, so
        # the common part of the gradient is dropped: otherwise rounding in
        # the renormalization times that common part drowns the signal.
        centered = grad_new - grad_new.mean()
        if centered @ (trial - x) <= 0:
            change = abs(f - f_new)
            x, f, grad = trial, f_new, grad_new
            step *= 1.5
            gap = float(grad @ (x - fw_vertex(grad)))
            if change < tolerance and gap < 10 * tolerance * max(1.0, abs(f)):
                converged = True
                break
        else:
            step *= 0.5
            if step < 1e-300:
                break
    if not converged:
        warnings.warn(
            f"policy optimizer stopped without meeting tolerance {tolerance}",
            ConvergenceWarning,
            stacklevel=2,
        )
    p = to_p(x)
    if k == 1:
        p = p / p.sum()
    return SchedulingPolicy(p, q)
