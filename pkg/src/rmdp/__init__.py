"""Robust MDP solvers for discounted and average-reward criteria."""

from .average import (
    AvgSolveTrace,
    ReferenceNotStationary,
    ScheduleConfig,
    algo1_limit_discounted,
    algo2_increasing_horizon,
    algo3_increasing_discount,
    extract_average_policy,
    worst_case_gain,
)
from .core import (
    Distribution,
    Policy,
    RmdpInstance,
    average_return,
    discounted_return,
    evaluate_average,
    evaluate_discounted,
)
from .robust_dp import (
    NonConvergenceError,
    SolveReport,
    adversarial_policy_iteration,
    bellman_apply,
    robust_value_iteration,
    strategy_iteration,
)
from .uncertainty import apply_support_mask, check_assumption1, inner_min

__version__ = "0.1.0"
