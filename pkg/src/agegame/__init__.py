"""Age-of-information scheduling against a jamming adversary.

Exact expected ages, best responses for both players, equilibrium checks
and a Monte Carlo simulator for the discrete-time game between a base
station that schedules users and an adversary that jams a budget of
channel-slots.
"""

from .adversary import (
    BruteForceResult,
    EnumerationCapExceeded,
    brute_force_best_adversary,
    cbs_scan_best_adversary,
    make_cbs,
    mirror_blocking,
    shift_cbs,
)
from .engine import asymptotic_age, exact_age, exact_age_rational, step_age, train_value
from .equilibrium import (
    EquilibriumResult,
    best_response_dynamics,
    stackelberg_point,
    verify_nash_diversity,
)
from .model import (
    SHIFTED,
    STANDARD,
    AgeReport,
    BlockingMatrix,
    CbsSpec,
    Diversity,
    GeneralK,
    NoDiversity,
    SchedulingPolicy,
    SystemConfig,
    ValidationError,
    validate_blocking,
    validate_config,
)
from .policies import (
    ConvergenceWarning,
    InfeasiblePolicyError,
    marginals_from_group_pmf,
    numeric_best_policy,
    optimal_policy_general_k,
    optimal_policy_vs_cbs,
    stackelberg_leader_policy,
    uniform_policy,
    uniform_subcarrier,
)
from .simulation import (
    SimResult,
    check_alpha_sq_optimality,
    check_diversity_bound,
    check_lower_bounds,
    check_upper_bound_no_diversity,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "SHIFTED",
    "STANDARD",
    "AgeReport",
    "BlockingMatrix",
    "BruteForceResult",
    "CbsSpec",
    "ConvergenceWarning",
    "Diversity",
    "EnumerationCapExceeded",
    "EquilibriumResult",
    "GeneralK",
    "InfeasiblePolicyError",
    "NoDiversity",
    "SchedulingPolicy",
    "SimResult",
    "SystemConfig",
    "ValidationError",
    "asymptotic_age",
    "best_response_dynamics",
    "brute_force_best_adversary",
    "cbs_scan_best_adversary",
    "check_alpha_sq_optimality",
    "check_diversity_bound",
    "check_lower_bounds",
    "check_upper_bound_no_diversity",
    "exact_age",
    "exact_age_rational",
    "make_cbs",
    "marginals_from_group_pmf",
    "mirror_blocking",
    "numeric_best_policy",
    "optimal_policy_general_k",
    "optimal_policy_vs_cbs",
    "shift_cbs",
    "simulate",
    "stackelberg_leader_policy",
    "stackelberg_point",
    "step_age",
    "train_value",
    "uniform_policy",
    "uniform_subcarrier",
    "validate_blocking",
    "validate_config",
]
