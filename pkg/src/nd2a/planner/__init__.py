"""Bound-based planning over belief trees."""

from .cases import (
    ExactTable,
    baseline_full_evaluation,
    component_usage,
    exact_table,
    intervals_contain_exact,
    plan_case1,
    plan_case2,
    plan_case3,
    policy_value,
    regret,
)
from .core import (
    DecisionRule,
    PlanningBudget,
    PlanNode,
    PlanReport,
    SimplificationHeuristic,
    evaluate,
    nd2a_plan,
    objective_bounds,
)
