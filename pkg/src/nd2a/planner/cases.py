"""Entry points for the budget regimes and the full-evaluation oracle.

Case 1: no budget anywhere, refine until the decision is provably optimal.
Case 2: planning may use at most ``max_components_per_node`` components.
Case 3: inference keeps at most C hypotheses; the tree is built explicitly.
Case 4 lives in :mod:`nd2a.planner.case4`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import belief as _belief
from ..belief import ContradictionError, InferenceBudget, MixtureBelief, unnormalized_update
from ..bounds import entropy
from ..env import World
from ..models import Action, Models
from ..tree import TreeShape, build_explicit_tree, build_skeleton, iter_nodes
from .core import (
    DecisionRule,
    PlanNode,
    PlanReport,
    PlanningBudget,
    SimplificationHeuristic,
    TIE_TOL,
    explicit_plan_tree,
    iter_plan,
    lazy_plan_tree,
    nd2a_plan,
)

DEFAULT_COMPONENT_CAP = 200_000


def _mean_by_depth(values: dict, horizon: int) -> list[float]:
    out = []
    for d in range(1, horizon + 1):
        v = values.get(d, [])
        out.append(float(np.mean(v)) if v else 1.0)
    return out


def component_usage(root: PlanNode, horizon: int, materialized: Optional[dict] = None) -> list[float]:
    """Fraction of each node's posterior components that were materialized, averaged per depth.

    Exhausts every lazy source to learn the true counts, so call it only after
    timing. Nodes without any surviving component are skipped.
    """
    if materialized is None:
        materialized = {n.id: n.cost.materialized for n in iter_plan(root) if n.cost is not None}
    per_depth: dict[int, list[float]] = {}
    for n in iter_plan(root):
        if n.cost is None:
            continue
        total = n.cost.source.exhaust()
        if total == 0:
            continue
        per_depth.setdefault(n.depth, []).append(min(1.0, materialized[n.id] / total))
    return _mean_by_depth(per_depth, horizon)


def plan_case1(
    b_k: MixtureBelief,
    shape: TreeShape,
    h: SimplificationHeuristic,
    world: World,
    models: Models,
    rng: Optional[np.random.Generator] = None,
    skeleton=None,
    R: Optional[DecisionRule] = None,
    action_cost: Optional[Callable[[Action], float]] = None,
) -> PlanReport:
    """Unbudgeted bounds on a sampled skeleton, refined under the no-overlap rule."""
    return _plan_lazy(b_k, shape, h, None, world, models, rng, skeleton, R or DecisionRule(), 1, action_cost)


def plan_case2(
    b_k: MixtureBelief,
    shape: TreeShape,
    h: SimplificationHeuristic,
    budget: PlanningBudget,
    world: World,
    models: Models,
    rng: Optional[np.random.Generator] = None,
    skeleton=None,
    R: Optional[DecisionRule] = None,
    action_cost: Optional[Callable[[Action], float]] = None,
) -> PlanReport:
    """As Case 1 but no node subset may exceed the planning budget."""
    if budget is None:
        raise ValueError("Case 2 needs a planning budget")
    return _plan_lazy(b_k, shape, h, budget, world, models, rng, skeleton, R or DecisionRule(), 2, action_cost)


def _plan_lazy(b_k, shape, h, budget, world, models, rng, skeleton, R, label, action_cost) -> PlanReport:
    if skeleton is None:
        if rng is None:
            raise ValueError("need an rng or a prebuilt skeleton")
        skeleton = build_skeleton(b_k, shape, world, models, rng)
    start = _belief.UPDATE_COUNT[0]
    t0 = time.perf_counter()
    root = lazy_plan_tree(b_k, skeleton, world, models, h, action_cost, shape.actions)
    report = nd2a_plan(root, shape.actions, h, R, budget, label)
    report.wall_time = time.perf_counter() - t0
    report.updates = _belief.UPDATE_COUNT[0] - start
    materialized = {n.id: n.cost.materialized for n in iter_plan(root) if n.cost is not None}
    report.extra["materialized"] = materialized
    report.per_level_component_usage = component_usage(root, shape.horizon, materialized)
    report.extra["plan_tree"] = root
    return report


def plan_case3(
    b_k: MixtureBelief,
    shape: TreeShape,
    h: SimplificationHeuristic,
    inf_budget: InferenceBudget,
    world: World,
    models: Models,
    rng: Optional[np.random.Generator] = None,
    skeleton=None,
    R: Optional[DecisionRule] = None,
    action_cost: Optional[Callable[[Action], float]] = None,
) -> PlanReport:
    """Bounds over the explicit, inference-budgeted tree.

    Each node's bounds are conditioned on its parent's budgeted posterior, so
    optimality holds with respect to the inference heuristic.
    """
    if inf_budget is None:
        raise ValueError("Case 3 needs an inference budget")
    if skeleton is None and rng is None:
        raise ValueError("need an rng or a prebuilt skeleton")
    t0 = time.perf_counter()
    tree = build_explicit_tree(b_k, shape, inf_budget, world, models, rng, skeleton)
    build_time = time.perf_counter() - t0
    root = explicit_plan_tree(tree, models, h, action_cost, shape.actions)
    report = nd2a_plan(root, shape.actions, h, R or DecisionRule(), None, 3)
    report.wall_time = time.perf_counter() - t0
    materialized = {n.id: n.cost.level for n in iter_plan(root) if n.cost is not None}
    report.per_level_component_usage = component_usage(root, shape.horizon, materialized)
    report.extra["build_time"] = build_time
    report.extra["explicit_tree"] = tree
    report.extra["plan_tree"] = root
    return report


# -------------------------------------------------------------------- oracle


@dataclass
class ExactTable:
    """Exact costs and values of every node of one tree."""

    cost: dict = field(default_factory=dict)
    value: dict = field(default_factory=dict)
    q: dict = field(default_factory=dict)
    sel: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)
    beliefs: dict = field(default_factory=dict)


def _exact_cost(b: MixtureBelief) -> float:
    if not any(hh.weight > 0 for hh in b.hypotheses):
        return 0.0
    return entropy(b.weights)


def exact_table(
    b_k: MixtureBelief,
    skeleton,
    actions: Sequence[Action],
    world: World,
    models: Models,
    keep_beliefs: bool = False,
    component_cap: int = DEFAULT_COMPONENT_CAP,
    action_cost: Optional[Callable[[Action], float]] = None,
) -> ExactTable:
    """Run the full branching update along every sampled path; exact Bellman values."""
    tab = ExactTable()
    total = [0]

    def rec(node, b: MixtureBelief) -> float:
        if node.depth > 0:
            c = _exact_cost(b)
            if action_cost is not None:
                c += action_cost(actions[node.action_index])
            tab.cost[node.id] = c
            tab.components[node.id] = len(b)
            total[0] += len(b)
            if total[0] > component_cap:
                raise ValueError(f"full evaluation exceeds the component cap ({component_cap})")
        else:
            c = 0.0
        if keep_beliefs:
            tab.beliefs[node.id] = b
        if not node.children:
            tab.value[node.id] = c
            return c
        q = []
        for a in sorted(node.children):
            vals = [
                rec(ch, unnormalized_update(b, actions[a], ch.sampled_observation, world, models.motion, models.obs, models.gate))
                for ch in node.children[a]
            ]
            q.append(sum(vals) / len(vals))
        best = min(q)
        sel = next(a for a, v in enumerate(q) if v <= best + TIE_TOL)
        tab.q[node.id] = q
        tab.sel[node.id] = sel
        tab.value[node.id] = c + q[sel]
        return tab.value[node.id]

    rec(skeleton, b_k)
    return tab


def baseline_full_evaluation(
    b_k: MixtureBelief,
    shape: TreeShape,
    world: World,
    models: Models,
    rng: Optional[np.random.Generator] = None,
    skeleton=None,
    component_cap: int = DEFAULT_COMPONENT_CAP,
    action_cost: Optional[Callable[[Action], float]] = None,
) -> PlanReport:
    """Materialize every posterior component at every node and pick the exact argmin."""
    if skeleton is None:
        if rng is None:
            raise ValueError("need an rng or a prebuilt skeleton")
        skeleton = build_skeleton(b_k, shape, world, models, rng)
    start = _belief.UPDATE_COUNT[0]
    t0 = time.perf_counter()
    tab = exact_table(b_k, skeleton, shape.actions, world, models, component_cap=component_cap, action_cost=action_cost)
    wall = time.perf_counter() - t0
    seq, idx = [], []
    n = skeleton
    while n.children:
        a = tab.sel[n.id]
        idx.append(a)
        seq.append(shape.actions[a])
        n = n.children[sorted(n.children)[a]][0]
    q = tab.q[skeleton.id]
    report = PlanReport(
        best_sequence=seq,
        loss_bound=0.0,
        per_level_component_usage=[1.0] * shape.horizon,
        wall_time=wall,
        node_count=sum(1 for _ in iter_nodes(skeleton)),
        case_label=0,
        selected_indices=idx,
        root_intervals=[(v, v) for v in q],
        normalized_loss=0.0,
        per_depth_overlap=[0.0] * shape.horizon,
        updates=_belief.UPDATE_COUNT[0] - start,
        policy=dict(tab.sel),
        max_subset_size=max(tab.components.values(), default=0),
    )
    report.extra["table"] = tab
    return report


def policy_value(tab: ExactTable, skeleton, policy: dict) -> float:
    """Exact objective of following ``policy`` (node id -> action index) on the tree."""

    def rec(node) -> float:
        c = tab.cost.get(node.id, 0.0)
        if not node.children:
            return c
        a = policy.get(node.id, tab.sel[node.id])
        kids = node.children[sorted(node.children)[a]]
        return c + sum(rec(k) for k in kids) / len(kids)

    return rec(skeleton)


def regret(tab: ExactTable, skeleton, policy: dict) -> float:
    """Exact objective of ``policy`` minus the optimal value (>= 0 up to round-off)."""
    return policy_value(tab, skeleton, policy) - tab.value[skeleton.id]


def intervals_contain_exact(plan_root: PlanNode, tab: ExactTable, tol: float = 1e-9) -> list[int]:
    """Ids of nodes whose subtree interval misses the exact value (empty when sound)."""
    bad = []
    for n in iter_plan(plan_root):
        v = tab.value[n.id]
        if not (n.lo - tol <= v <= n.hi + tol):
            bad.append(n.id)
    return bad
