"""Budgets in both inference and planning: search over valid inference heuristics.

A selection keeps at most C components at every node of the tree, and every
kept component must descend from a kept component of the parent node (so it
is a pruning some inference heuristic could have produced). Each selection
induces node-cost bounds on the *unbudgeted* objective and hence a loss
bound. ``h_p_star`` is the selection with the smallest loss bound, found by
exhaustive search; ``h_inf`` is the keep-highest-weight pruning inference
would do.

What a selection may know: the weights of the components it keeps, their
siblings (children of kept parents are computed before choosing), and exact
component counts for prior lineages that were never pruned along the path.
Every other lineage is capped by the per-step branching bound.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..belief import MixtureBelief
from ..bounds import cost_interval
from ..env import World
from ..models import Models
from ..tree import TreeShape, build_skeleton
from .cases import exact_table
from .core import (
    FixedCost,
    PlanNode,
    PlanReport,
    TIE_TOL,
    assemble_report,
)

DEFAULT_OPTION_CAP = 2_000_000


@dataclass
class _Node:
    id: int
    depth: int
    action_index: Optional[int]
    log_w: np.ndarray
    anchors: np.ndarray
    parents: np.ndarray
    log_sigma: float
    branch_bound: float
    children: dict = field(default_factory=dict)


@dataclass
class SelectionDescription:
    """Which components a heuristic keeps; ``per_node`` maps node id -> kept indices."""

    name: str
    budget: int
    loss: float
    root_subset: tuple
    per_node: dict = field(default_factory=dict)


def _collect(b_k: MixtureBelief, skeleton, actions, world: World, models: Models, cap: int):
    tab = exact_table(b_k, skeleton, actions, world, models, keep_beliefs=True, component_cap=cap)
    log_peak = math.log(models.obs.peak_density)

    def rec(sk, log_sigma, bound) -> _Node:
        b = tab.beliefs[sk.id]
        lw = b.log_weights
        anchors = np.array([h.anchor for h in b.hypotheses], dtype=int)
        parents = np.array([-1 if h.parent_index is None else h.parent_index for h in b.hypotheses], dtype=int)
        node = _Node(sk.id, sk.depth, sk.action_index, lw, anchors, parents, log_sigma, bound)
        for a in sorted(sk.children):
            kids = []
            for ch in sk.children[a]:
                cb = tab.beliefs[ch.id]
                per_parent = np.bincount(
                    [h.parent_index for h in cb.hypotheses], minlength=max(len(b), 1)
                ) if len(cb) else np.zeros(1, dtype=int)
                D = max(ch.realization_count, int(per_parent.max()) if per_parent.size else 0)
                kids.append(rec(ch, log_sigma + len(ch.sampled_observation) * log_peak, bound * D))
            node.children[a] = kids
        return node

    return tab, rec(skeleton, 0.0, 1.0)


def _interval(node: _Node, S: Sequence[int], tracked: frozenset, prior_w: np.ndarray) -> tuple[float, float]:
    """Cost bounds of ``node`` from the kept indices ``S`` and the tracked lineages."""
    total_by_anchor = np.bincount(node.anchors, minlength=len(prior_w)) if node.anchors.size else np.zeros(len(prior_w), int)
    S = list(S)
    sel_by_anchor = np.bincount(node.anchors[S], minlength=len(prior_w)) if S else np.zeros(len(prior_w), int)
    mass = total = 0.0
    for j, wj in enumerate(prior_w):
        n = total_by_anchor[j] if j in tracked else max(node.branch_bound, sel_by_anchor[j])
        mass += wj * n
        total += n
    if total == 0:
        return 0.0, 0.0
    if not S:
        return 0.0, math.log(total) if total > 1 else 0.0
    lw = node.log_w[S]
    ref = float(lw.max())
    if ref == -math.inf:
        return 0.0, math.log(total) if total > 1 else 0.0
    w = np.exp(lw - ref)
    pos = w > 0
    wlogw = float(np.sum(w[pos] * (lw[pos] - ref)))
    e = node.log_sigma - ref
    sigma = math.exp(e) if e < 700.0 else math.inf
    iv = cost_interval(float(w.sum()), wlogw, float(prior_w[node.anchors[S]].sum()), mass, sigma, len(S), total)
    return iv.lower, iv.upper


def _next_tracked(node: _Node, S: Sequence[int], tracked: frozenset) -> frozenset:
    """Lineages whose every component at ``node`` is kept (and were tracked before)."""
    kept = set(S)
    out = set()
    for j in tracked:
        idx = np.nonzero(node.anchors == j)[0]
        if all(int(i) in kept for i in idx):
            out.add(j)
    return frozenset(out)


def _subsets(cands: Sequence[int], budget: int):
    if not cands:
        yield ()
        return
    for k in range(1, min(budget, len(cands)) + 1):
        yield from itertools.combinations(cands, k)


def _combine(action_opts: list[np.ndarray], cap: int) -> np.ndarray:
    """All (min LB, UB of selected, risk) over the product of per-action options."""
    sizes = [len(o) for o in action_opts]
    if math.prod(sizes) > cap:
        raise ValueError("instance too large for exhaustive heuristic search")
    grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
    idx = [g.ravel() for g in grids]
    lo = np.stack([action_opts[a][idx[a], 0] for a in range(len(sizes))], axis=1)
    hi = np.stack([action_opts[a][idx[a], 1] for a in range(len(sizes))], axis=1)
    risk = np.stack([action_opts[a][idx[a], 2] for a in range(len(sizes))], axis=1)
    best = hi.min(axis=1, keepdims=True)
    sel = np.argmax(hi <= best + TIE_TOL, axis=1)
    rows = np.arange(len(sel))
    hi_sel = hi[rows, sel]
    lo_other = lo.copy()
    lo_other[rows, sel] = np.inf
    if lo.shape[1] > 1:
        ov = hi_sel - lo_other.min(axis=1)
        ov = np.where(ov > TIE_TOL, ov, 0.0)
    else:
        ov = np.zeros(len(sel))
    out = np.stack([lo.min(axis=1), hi_sel, np.maximum(risk[rows, sel], ov)], axis=1)
    return out


def _average(opts: list[np.ndarray], cap: int) -> np.ndarray:
    """Options of the mean over sampled children (product over samples)."""
    if len(opts) == 1:
        return opts[0]
    sizes = [len(o) for o in opts]
    if math.prod(sizes) > cap:
        raise ValueError("instance too large for exhaustive heuristic search")
    grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
    acc = sum(opts[i][g.ravel()] for i, g in enumerate(grids))
    return _dedupe(acc / len(opts))


def _dedupe(a: np.ndarray) -> np.ndarray:
    if len(a) <= 1:
        return a
    return np.unique(np.round(a, 12), axis=0)


class _Search:
    def __init__(self, prior_w: np.ndarray, budget: int, cap: int):
        self.prior_w = prior_w
        self.budget = budget
        self.cap = cap
        self.memo: dict = {}

    def node_options(self, node: _Node, parent_S: frozenset, tracked: frozenset) -> np.ndarray:
        """(lo, hi, risk) of J at ``node`` over every valid selection in its subtree."""
        key = (node.id, parent_S, tracked)
        if key in self.memo:
            return self.memo[key]
        cands = [i for i in range(len(node.parents)) if int(node.parents[i]) in parent_S]
        rows = []
        for S in _subsets(cands, self.budget):
            c_lo, c_hi = _interval(node, S, tracked, self.prior_w)
            if not node.children:
                rows.append(np.array([[c_lo, c_hi, 0.0]]))
                continue
            sub = self.subtree_options(node, frozenset(S), _next_tracked(node, S, tracked))
            rows.append(sub + np.array([c_lo, c_hi, 0.0]))
        out = _dedupe(np.concatenate(rows, axis=0))
        if len(out) > self.cap:
            raise ValueError("instance too large for exhaustive heuristic search")
        self.memo[key] = out
        return out

    def action_options(self, node: _Node, S: frozenset, tracked: frozenset) -> list[np.ndarray]:
        return [
            _average([self.node_options(ch, S, tracked) for ch in node.children[a]], self.cap)
            for a in sorted(node.children)
        ]

    def subtree_options(self, node: _Node, S: frozenset, tracked: frozenset) -> np.ndarray:
        return _dedupe(_combine(self.action_options(node, S, tracked), self.cap))


def _min_root_risk(action_opts: list[np.ndarray]) -> float:
    """Smallest root risk over the product of per-action options, without forming it.

    For each candidate selected action s and each of its options, every other
    action independently takes the option with the largest LB among those
    compatible with s being selected.
    """
    A = len(action_opts)
    if A == 1:
        return float(action_opts[0][:, 2].min())
    best = math.inf
    prepared = []
    for opts in action_opts:
        order = np.argsort(opts[:, 1], kind="stable")
        his = opts[order, 1]
        los = opts[order, 0]
        # suffix max of LB over options sorted by UB
        suf = np.maximum.accumulate(los[::-1])[::-1]
        prepared.append((his, suf))
    for s, opts in enumerate(action_opts):
        for lo_s, hi_s, r_s in opts:
            worst_lo = math.inf
            ok = True
            for b, (his, suf) in enumerate(prepared):
                if b == s:
                    continue
                # b must lose the tie-break: strictly above for lower indices
                thr = hi_s + TIE_TOL if b < s else hi_s - TIE_TOL
                k = np.searchsorted(his, thr, side="right" if b < s else "left")
                if k >= len(his):
                    ok = False
                    break
                worst_lo = min(worst_lo, suf[k])
            if not ok:
                continue
            ov = hi_s - worst_lo
            ov = ov if ov > TIE_TOL else 0.0
            best = min(best, max(r_s, ov))
    return best


def _fixed_selection_tree(root: _Node, selection: dict, prior_w: np.ndarray, root_S: Sequence[int]) -> PlanNode:
    tracked0 = frozenset(int(j) for j in root_S)

    def rec(node: _Node, tracked: frozenset) -> PlanNode:
        S = selection[node.id]
        if node.depth == 0:
            pn = PlanNode(node.id, 0, None, None)
            nxt = tracked0
        else:
            lo, hi = _interval(node, S, tracked, prior_w)
            pn = PlanNode(node.id, node.depth, node.action_index, FixedCost(lo, hi))
            nxt = _next_tracked(node, S, tracked)
        for a, kids in node.children.items():
            pn.children[a] = [rec(k, nxt) for k in kids]
        return pn

    return rec(root, tracked0)


def inference_selection(root: _Node, budget: int, prior_w: np.ndarray) -> tuple[dict, tuple]:
    """Keep-highest-weight pruning applied top-down, as budgeted inference does."""
    order = sorted(range(len(prior_w)), key=lambda j: (-prior_w[j], j))
    root_S = tuple(sorted(order[:budget]))
    selection = {root.id: root_S}

    def rec(node: _Node, parent_S) -> None:
        for kids in node.children.values():
            for ch in kids:
                cands = [i for i in range(len(ch.parents)) if int(ch.parents[i]) in parent_S]
                cands.sort(key=lambda i: (-ch.log_w[i], i))
                S = tuple(sorted(cands[:budget]))
                selection[ch.id] = S
                rec(ch, set(S))

    rec(root, set(root_S))
    return selection, root_S


def plan_case4(
    b_k: MixtureBelief,
    shape: TreeShape,
    inf_budget_size: int,
    world: World,
    models: Models,
    rng: Optional[np.random.Generator] = None,
    skeleton=None,
    option_cap: int = DEFAULT_OPTION_CAP,
    component_cap: int = 20_000,
) -> tuple[PlanReport, SelectionDescription]:
    """Exhaustive search for the valid selection with the smallest loss bound.

    Returns the report for the keep-highest-weight inference heuristic (the
    selection inference would actually make) together with the description
    of the best valid selection; ``report.extra["loss_h_inf"]`` and
    ``report.extra["loss_h_p_star"]`` hold both losses.
    """
    if inf_budget_size < 1:
        raise ValueError("budget must be >= 1")
    if skeleton is None:
        if rng is None:
            raise ValueError("need an rng or a prebuilt skeleton")
        skeleton = build_skeleton(b_k, shape, world, models, rng)
    # lineages are identified by position in b_k
    b_k = MixtureBelief(b_k.time_index, tuple(replace(hh, anchor=j) for j, hh in enumerate(b_k.hypotheses)))
    t0 = time.perf_counter()
    tab, root = _collect(b_k, skeleton, shape.actions, world, models, component_cap)
    prior_w = np.asarray(b_k.weights, dtype=float)

    sel_inf, root_S_inf = inference_selection(root, inf_budget_size, prior_w)
    inf_tree = _fixed_selection_tree(root, sel_inf, prior_w, root_S_inf)
    report = assemble_report(inf_tree, shape.actions, 0.0, 4)
    loss_inf = report.loss_bound

    search = _Search(prior_w, inf_budget_size, option_cap)
    best, best_S0 = math.inf, ()
    # largest subsets first, so ties keep as many prior components as possible
    roots = sorted(_subsets(list(range(len(prior_w))), inf_budget_size), key=lambda S: (-len(S), S))
    for S0 in roots:
        tracked = frozenset(int(j) for j in S0)
        opts = search.action_options(root, frozenset(S0), tracked)
        r = _min_root_risk(opts)
        if r < best - 1e-15:
            best, best_S0 = r, tuple(S0)
    # the inference selection is itself valid; guard against tie-break round-off
    if loss_inf < best:
        best, best_S0 = loss_inf, root_S_inf
    report.wall_time = time.perf_counter() - t0
    report.extra["loss_h_inf"] = float(loss_inf)
    report.extra["loss_h_p_star"] = float(best)
    report.extra["table"] = tab
    desc = SelectionDescription("h_p_star", inf_budget_size, float(best), best_S0)
    return report, desc
