"""Bound propagation over a belief tree and the refinement loop.

Every non-root node owns a :class:`NodeCost`: a growing prefix of the node's
posterior components (the simplified subset) together with the running sums
the entropy bounds need. Components come from a *source*. A
:class:`LazySource` produces posterior components on demand by expanding its
parent's components one association realization at a time, so a component at
depth n only exists once something asked for it. A :class:`ListSource` wraps
components that were already computed (explicit trees).

Subtree values follow the sampled Bellman recursion with interval arithmetic:
``J = c + V``, ``V = min_a Q_a``, ``Q_a = mean of child J``. The planner picks
the action with the smallest upper bound and reports a loss bound that is
propagated along the selected policy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ..belief import Hypothesis, MixtureBelief, child_hypothesis, predict_hypothesis
from ..bounds import BoundInterval, cost_interval, eta_interval
from ..env import World, enumerate_associations
from ..models import Action, Models, max_likelihood_value

TIE_TOL = 1e-9
EXACT_TOL = 1e-9


# ---------------------------------------------------------------- strategies


@dataclass(frozen=True)
class SimplificationHeuristic:
    """Order in which prior lineages enter the simplified subsets.

    Level l of a node is the first l components of that node in this order,
    so subsets are nested across levels.
    """

    name: str = "greedy-prior-weight"

    def __post_init__(self):
        if self.name not in ("greedy-prior-weight", "lineage-order"):
            raise ValueError(f"unknown simplification heuristic {self.name!r}")

    def anchor_order(self, prior_weights: Sequence[float]) -> list[int]:
        idx = range(len(prior_weights))
        if self.name == "lineage-order":
            return list(idx)
        return sorted(idx, key=lambda j: (-prior_weights[j], j))


@dataclass(frozen=True)
class DecisionRule:
    """When refinement may stop.

    ``no-overlap`` refines until the selected action provably wins at every
    decision point on the selected policy; ``time-budget`` does the same but
    gives up after ``time_limit`` seconds; ``max-level`` additionally caps
    every subset at ``max_level`` components.
    """

    name: str = "no-overlap"
    time_limit: float = math.inf
    max_level: Optional[int] = None

    def __post_init__(self):
        if self.name not in ("no-overlap", "time-budget", "max-level"):
            raise ValueError(f"unknown decision rule {self.name!r}")
        if self.name == "time-budget" and not self.time_limit > 0:
            raise ValueError("time-budget rule needs a positive time_limit")
        if self.name == "max-level" and (self.max_level is None or self.max_level < 1):
            raise ValueError("max-level rule needs max_level >= 1")


@dataclass(frozen=True)
class PlanningBudget:
    max_components_per_node: Optional[int] = None

    def __post_init__(self):
        if self.max_components_per_node is not None and self.max_components_per_node < 1:
            raise ValueError("max_components_per_node must be >= 1")


@dataclass
class PlanReport:
    best_sequence: list[Action]
    loss_bound: float
    per_level_component_usage: list[float]
    wall_time: float
    node_count: int
    case_label: int
    selected_indices: list[int] = field(default_factory=list)
    root_intervals: list[tuple[float, float]] = field(default_factory=list)
    normalized_loss: float = 0.0
    per_depth_overlap: list[float] = field(default_factory=list)
    updates: int = 0
    rounds: int = 0
    policy: dict = field(default_factory=dict)
    max_subset_size: int = 0
    extra: dict = field(default_factory=dict)


# ------------------------------------------------------------------ sources


class RootSource:
    """The prior components in heuristic order (time k, nothing to expand)."""

    def __init__(self, prior: MixtureBelief, order: Sequence[int]):
        self.comps = [prior.hypotheses[j] for j in order]
        self.exhausted = True
        self.max_branching = 1

    def get(self, i: int) -> Optional[Hypothesis]:
        return self.comps[i] if i < len(self.comps) else None

    def frontier(self) -> float:
        return math.inf


class LazySource:
    """Posterior components of one skeleton node, produced on demand.

    Components appear grouped by prior lineage in the heuristic's rank order,
    because the parent's components do. ``frontier()`` is the rank below
    which every lineage is known to be fully materialized here.
    """

    def __init__(self, parent, action: Action, observation, world: World, models: Models, rank: dict):
        self.parent = parent
        self.action = action
        self.z = tuple(observation)
        self.classes = [m.landmark_class for m in self.z]
        self.world = world
        self.models = models
        self.rank = rank
        self.comps: list[Hypothesis] = []
        self.exhausted = False
        self.max_branching = 0
        self._next = 0
        self._cur: Optional[Hypothesis] = None
        self._pred: Optional[Hypothesis] = None
        self._betas: list = []
        self._bi = 0

    def get(self, i: int) -> Optional[Hypothesis]:
        while len(self.comps) <= i and not self.exhausted:
            self._advance()
        return self.comps[i] if i < len(self.comps) else None

    def _advance(self) -> None:
        if self._bi >= len(self._betas):
            p = self.parent.get(self._next)
            if p is None:
                self.exhausted = True
                return
            self._cur = p
            self._pidx = self._next
            self._next += 1
            self._pred = predict_hypothesis(p, self.action, self.models.motion)
            self._betas = enumerate_associations(
                self.world, self._pred.mean, self.classes, self.models.obs, self.models.gate
            )
            self._bi = 0
            self.max_branching = max(self.max_branching, len(self._betas))
            return
        beta = self._betas[self._bi]
        self._bi += 1
        p = self._cur
        self.comps.append(child_hypothesis(self._pred, p, self._pidx, self.z, beta, self.world, self.models.obs))

    def frontier(self) -> float:
        if self.exhausted:
            return math.inf
        if self._cur is None:
            return 0.0
        if self._bi >= len(self._betas) and self._next >= len(self.parent.comps):
            # everything the parent has produced so far is expanded
            return max(self.rank[self._cur.anchor], self.parent.frontier())
        return self.rank[self._cur.anchor]

    def exhaust(self) -> int:
        while not self.exhausted:
            self._advance()
        return len(self.comps)


class ListSource:
    """Components that are already known (explicit-tree nodes)."""

    def __init__(self, comps: Sequence[Hypothesis], rank: dict, branching: int):
        self.comps = sorted(comps, key=lambda h: rank[h.anchor])
        self.exhausted = True
        self.max_branching = branching

    def get(self, i: int) -> Optional[Hypothesis]:
        return self.comps[i] if i < len(self.comps) else None

    def frontier(self) -> float:
        return math.inf

    def exhaust(self) -> int:
        return len(self.comps)


# ----------------------------------------------------------------- node cost


class NodeCost:
    """Subset prefix of a node's components plus running sums for the bounds.

    ``anchor_weights[j]`` is the weight of lineage j at the belief the bounds
    are conditioned on; ``rank`` orders lineages; ``descendant_bound`` returns
    the current cap on components per unfinished lineage.

    Weights are summed relative to ``exp(ref)``, the log weight of the first
    member (rescaled when a much larger one arrives), so deep nodes whose raw
    weights would underflow keep full precision. The bounds only depend on
    ratios, so the scale drops out.
    """

    def __init__(self, source, anchor_weights, rank, log_sigma: float, descendant_bound: Callable[[], float],
                 cap: Optional[int] = None, extra_cost: float = 0.0):
        self.source = source
        self.anchor_weights = list(anchor_weights)
        self.rank = rank
        self.log_sigma = log_sigma
        self.ref: Optional[float] = None
        self.descendant_bound = descendant_bound
        self.cap = cap
        self.extra_cost = extra_cost
        self.level = 0
        self.w_ms = 0.0
        self.wlogw = 0.0
        self.prior_mass = 0.0
        self.counts: dict[int, int] = {}
        self._iv: Optional[BoundInterval] = None
        self._iv_key = None

    def refinable(self) -> bool:
        if self.cap is not None and self.level >= self.cap:
            return False
        return not (self.source.exhausted and self.level >= len(self.source.comps))

    def refine(self) -> bool:
        if self.cap is not None and self.level >= self.cap:
            return False
        h = self.source.get(self.level)
        if h is None:
            return False
        lw = h.log_weight
        self.level += 1
        if lw > -math.inf:
            if self.ref is None:
                self.ref = lw
            elif lw - self.ref > 600.0:
                d = lw - self.ref
                f = math.exp(-d)
                self.wlogw = f * (self.wlogw - d * self.w_ms)
                self.w_ms *= f
                self.ref = lw
            w = math.exp(lw - self.ref)
            self.w_ms += w
            if w > 0:
                self.wlogw += w * (lw - self.ref)
        self.prior_mass += self.anchor_weights[h.anchor]
        self.counts[h.anchor] = self.counts.get(h.anchor, 0) + 1
        return True

    def _boundary(self) -> float:
        comps = self.source.comps
        if self.level < len(comps):
            return self.rank[comps[self.level].anchor]
        return self.source.frontier()

    def interval(self) -> BoundInterval:
        boundary = self._boundary()
        B = self.descendant_bound()
        key = (self.level, boundary, B)
        if key == self._iv_key:
            return self._iv
        mass, total = self._lineage(boundary, B)
        if total == 0:
            iv = BoundInterval(0.0, 0.0)
        else:
            iv = cost_interval(self.w_ms, self.wlogw, self.prior_mass, mass, self._sigma(), self.level, total)
        if self.extra_cost:
            iv = BoundInterval(iv.lower + self.extra_cost, iv.upper + self.extra_cost)
        self._iv, self._iv_key = iv, key
        return iv

    def _lineage(self, boundary: float, B: float) -> tuple[float, float]:
        """(lineage mass, component count) bounds; finished lineages use exact counts."""
        mass, total = 0.0, 0.0
        for j, wj in enumerate(self.anchor_weights):
            c = self.counts.get(j, 0)
            n = c if self.rank[j] < boundary else max(B, c)
            mass += wj * n
            total += n
        return mass, total

    def _sigma(self) -> float:
        e = self.log_sigma - (self.ref if self.ref is not None else 0.0)
        return math.exp(e) if e < 700.0 else math.inf

    def eta_interval(self) -> tuple[BoundInterval, float]:
        """Interval on the sum of all component weights, in units of ``exp(ref)``; returns (interval, ref)."""
        mass, _ = self._lineage(self._boundary(), self.descendant_bound())
        lo, hi = eta_interval(self.w_ms, self.prior_mass, mass, self._sigma())
        return BoundInterval(lo, hi), (self.ref if self.ref is not None else 0.0)

    @property
    def materialized(self) -> int:
        return len(self.source.comps)


class FixedCost:
    """A node cost whose interval is given (used by exhaustive searches and tests)."""

    def __init__(self, lower: float, upper: float):
        self._iv = BoundInterval(lower, upper)
        self.level = 0
        self.cap = None

    def interval(self) -> BoundInterval:
        return self._iv

    def refinable(self) -> bool:
        return False

    def refine(self) -> bool:
        return False


# ----------------------------------------------------------------- plan tree


@dataclass(eq=False)
class PlanNode:
    id: int
    depth: int
    action_index: Optional[int]
    cost: Optional[object]
    children: dict = field(default_factory=dict)
    tree_node: object = None
    # filled by evaluate()
    lo: float = 0.0
    hi: float = 0.0
    q: list = field(default_factory=list)
    sel: Optional[int] = None
    risk: float = 0.0
    overlap: float = 0.0

    def child_list(self):
        for a in sorted(self.children):
            yield from self.children[a]


def iter_plan(root: PlanNode):
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(list(n.child_list())))


def select_action(q: Sequence[tuple[float, float]], tol: float = TIE_TOL) -> int:
    """Lowest-index action whose upper bound is within ``tol`` of the smallest."""
    best = min(hi for _, hi in q)
    for a, (_, hi) in enumerate(q):
        if hi <= best + tol:
            return a
    raise AssertionError("unreachable")


def decision_overlap(q: Sequence[tuple[float, float]], sel: int, tol: float = TIE_TOL) -> float:
    """UB of the selected action minus the smallest LB among the others (>= 0)."""
    if len(q) < 2:
        return 0.0
    other = min(lo for a, (lo, _) in enumerate(q) if a != sel)
    v = q[sel][1] - other
    return v if v > tol else 0.0


def decision_resolved(q: Sequence[tuple[float, float]], sel: int, tol: float = TIE_TOL) -> bool:
    """True when every plausible exact objective would pick ``sel`` too.

    Actions with a smaller index must be strictly worse (or both intervals
    exact); actions with a larger index only need to not be better.
    """
    lo_s, hi_s = q[sel]
    exact_s = hi_s - lo_s <= EXACT_TOL
    for a, (lo, hi) in enumerate(q):
        if a == sel:
            continue
        if a < sel:
            if lo > hi_s + tol or (exact_s and hi - lo <= EXACT_TOL):
                continue
            return False
        if lo < hi_s - tol:
            return False
    return True


def evaluate(node: PlanNode) -> None:
    """Bottom-up interval Bellman recursion; fills lo/hi/q/sel/risk/overlap."""
    for c in node.child_list():
        evaluate(c)
    own = node.cost.interval() if node.cost is not None else None
    c_lo, c_hi = (own.lower, own.upper) if own is not None else (0.0, 0.0)
    if not node.children:
        node.lo, node.hi, node.q, node.sel, node.risk, node.overlap = c_lo, c_hi, [], None, 0.0, 0.0
        return
    q, risks = [], []
    for a in sorted(node.children):
        kids = node.children[a]
        q.append((sum(k.lo for k in kids) / len(kids), sum(k.hi for k in kids) / len(kids)))
        risks.append(sum(k.risk for k in kids) / len(kids))
    sel = select_action(q)
    node.q, node.sel = q, sel
    node.overlap = decision_overlap(q, sel)
    node.risk = max(risks[sel], node.overlap)
    node.lo = c_lo + min(lo for lo, _ in q)
    node.hi = c_hi + q[sel][1]


def policy_nodes(root: PlanNode):
    """Decision nodes reachable from the root by following selected actions."""
    stack = [root]
    while stack:
        n = stack.pop()
        if not n.children:
            continue
        yield n
        stack.extend(reversed(n.children[sorted(n.children)[n.sel]]))


def objective_bounds(node: PlanNode, level: Optional[int] = None) -> BoundInterval:
    """Interval on the subtree objective J at ``node``.

    With ``level`` given, every node cost in the subtree is first refined up
    to that many components.
    """
    if level is not None:
        for n in iter_plan(node):
            if n.cost is not None:
                while n.cost.level < level and n.cost.refine():
                    pass
    evaluate(node)
    return BoundInterval(node.lo, node.hi)


def _targets(n: PlanNode) -> list[PlanNode]:
    """Widest refinable node under each action that blocks the decision at ``n``.

    Width is weighted by the node's share in the action value (1/o per level).
    Ties go to the shallower node, then the lower id.
    """
    keys = sorted(n.children)
    critical = [n.sel]
    for a, (lo, hi) in enumerate(n.q):
        if a == n.sel:
            continue
        pair = [n.q[n.sel], (lo, hi)] if a > n.sel else [(lo, hi), n.q[n.sel]]
        if not decision_resolved(pair, 1 if a < n.sel else 0):
            critical.append(a)
    out = []
    for a in critical:
        best, best_key = None, None
        stack = [(c, 1.0 / len(n.children[keys[a]])) for c in n.children[keys[a]]]
        while stack:
            m, scale = stack.pop()
            if m.cost is not None and m.cost.refinable():
                score = m.cost.interval().width * scale
                key = (-score, m.depth, m.id)
                if score > 0 and (best_key is None or key < best_key):
                    best, best_key = m, key
            for kids in m.children.values():
                stack.extend((k, scale / len(kids)) for k in kids)
        if best is not None:
            out.append(best)
    return out


def nd2a_plan(
    root: PlanNode,
    actions: Sequence[Action],
    h: SimplificationHeuristic,
    R: DecisionRule,
    budget: Optional[PlanningBudget] = None,
    case_label: int = 1,
) -> PlanReport:
    """Refine node subsets until the decision rule holds, then select and report."""
    if not actions:
        raise ValueError("empty action set")
    cap = budget.max_components_per_node if budget is not None else None
    if R.name == "max-level":
        cap = R.max_level if cap is None else min(cap, R.max_level)
    for n in iter_plan(root):
        if n.cost is not None:
            n.cost.cap = cap
    t0 = time.perf_counter()
    rounds = 0
    while True:
        evaluate(root)
        failing = [n for n in policy_nodes(root) if not decision_resolved(n.q, n.sel)]
        if not failing:
            break
        if R.name == "time-budget" and time.perf_counter() - t0 > R.time_limit:
            break
        chosen = {}
        for n in failing:
            for m in _targets(n):
                chosen[m.id] = m
        if not chosen:
            break
        for m in chosen.values():
            m.cost.refine()
        rounds += 1
    wall = time.perf_counter() - t0
    return assemble_report(root, actions, wall, case_label, rounds)


def assemble_report(root: PlanNode, actions: Sequence[Action], wall: float, case_label: int, rounds: int = 0) -> PlanReport:
    evaluate(root)
    seq, idx = [], []
    n = root
    while n.children:
        idx.append(n.sel)
        seq.append(actions[n.sel])
        n = n.children[sorted(n.children)[n.sel]][0]
    spread = max(hi for _, hi in root.q) - min(lo for lo, _ in root.q)
    loss = root.risk
    horizon = max(m.depth for m in iter_plan(root))
    per_depth = [[] for _ in range(horizon)]
    for m in policy_nodes(root):
        per_depth[m.depth].append(m.overlap)
    max_subset = max((m.cost.level for m in iter_plan(root) if m.cost is not None), default=0)
    return PlanReport(
        best_sequence=seq,
        loss_bound=loss,
        per_level_component_usage=[],
        wall_time=wall,
        node_count=sum(1 for _ in iter_plan(root)),
        case_label=case_label,
        selected_indices=idx,
        root_intervals=list(root.q),
        normalized_loss=loss / spread if spread > 0 else 0.0,
        per_depth_overlap=[float(np.mean(v)) if v else 0.0 for v in per_depth],
        rounds=rounds,
        policy={m.id: m.sel for m in iter_plan(root) if m.children},
        max_subset_size=max_subset,
    )


# ------------------------------------------------------------ tree builders


def path_log_sigma(obs, counts: Sequence[int]) -> float:
    """log of the product of per-step likelihood suprema along a path."""
    return sum(c * math.log(obs.peak_density) for c in counts)


def lazy_plan_tree(
    b_k: MixtureBelief,
    skeleton,
    world: World,
    models: Models,
    h: SimplificationHeuristic,
    action_cost: Optional[Callable[[Action], float]] = None,
    actions: Optional[Sequence[Action]] = None,
) -> PlanNode:
    """Mirror a skeleton with lazily expanded posterior components at each node."""
    prior_w = list(b_k.weights)
    order = h.anchor_order(prior_w)
    rank = {j: r for r, j in enumerate(order)}
    # anchors are indices into b_k
    prior = MixtureBelief(b_k.time_index, tuple(replace(hh, anchor=j) for j, hh in enumerate(b_k.hypotheses)))
    root_src = RootSource(prior, order)
    root = PlanNode(skeleton.id, 0, None, None, tree_node=skeleton)
    root.source = root_src
    stack = [(skeleton, root, root_src, [], [])]
    while stack:
        sk, pn, src, branch, nmeas = stack.pop()
        for a in sorted(sk.children):
            for child in sk.children[a]:
                u = actions[a] if actions is not None else None
                if u is None:
                    raise ValueError("actions are required to expand the skeleton")
                csrc = LazySource(src, u, child.sampled_observation, world, models, rank)
                c_branch = branch + [(child, csrc)]
                c_meas = nmeas + [len(child.sampled_observation)]

                def bound(path=tuple(c_branch)):
                    return float(math.prod(max(nd.realization_count, s.max_branching) for nd, s in path))

                cost = NodeCost(
                    csrc, prior_w, rank, path_log_sigma(models.obs, c_meas), bound,
                    extra_cost=action_cost(u) if action_cost is not None else 0.0,
                )
                cn = PlanNode(child.id, child.depth, a, cost, tree_node=child)
                cn.source = csrc
                pn.children.setdefault(a, []).append(cn)
                stack.append((child, cn, csrc, c_branch, c_meas))
    return root


def explicit_plan_tree(
    root_tree,
    models: Models,
    h: SimplificationHeuristic,
    action_cost: Optional[Callable[[Action], float]] = None,
    actions: Optional[Sequence[Action]] = None,
) -> PlanNode:
    """Mirror an explicit tree; each node's bounds are conditioned on its parent's posterior."""
    root = PlanNode(root_tree.id, 0, None, None, tree_node=root_tree)
    stack = [(root_tree, root)]
    while stack:
        tn, pn = stack.pop()
        parent_w = list(tn.posterior.weights)
        order = h.anchor_order(parent_w)
        rank = {j: r for r, j in enumerate(order)}
        for a in sorted(tn.children):
            for child in tn.children[a]:
                full = child.unpruned
                # weights are already relative to the parent's normalized posterior
                comps = [replace(full.hypotheses[i], anchor=full.hypotheses[i].parent_index) for i in child.survivors]
                counts: dict[int, int] = {}
                for hh in full.hypotheses:
                    counts[hh.parent_index] = counts.get(hh.parent_index, 0) + 1
                branching = max(counts.values(), default=0)
                src = ListSource(comps, rank, branching)
                D = max(child.realization_count, branching)
                u = actions[a] if actions is not None else None
                cost = NodeCost(
                    src, parent_w, rank, path_log_sigma(models.obs, [len(child.sampled_observation)]),
                    (lambda D=D: float(D)),
                    extra_cost=action_cost(u) if (action_cost is not None and u is not None) else 0.0,
                )
                cn = PlanNode(child.id, child.depth, a, cost, tree_node=child)
                pn.children.setdefault(a, []).append(cn)
                stack.append((child, cn))
    return root
