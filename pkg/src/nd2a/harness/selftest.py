"""Quick invariant checks with deterministic output (``nd2a selftest``)."""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from ..belief import prior_belief
from ..bounds import BoundBookkeeping, entropy, entropy_decomposition
from ..env import build_floors, floors_actions
from ..models import Models
from ..planner import SimplificationHeuristic, baseline_full_evaluation, intervals_contain_exact, plan_case1
from ..tree import TreeShape, build_skeleton
from .runner import _fmt


def _identity(rng) -> tuple[bool, float]:
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(3, 65))
        w = rng.random(n)
        k = int(rng.integers(1, n + 1))
        sub = rng.choice(n, size=k, replace=False)
        worst = max(worst, abs(entropy_decomposition(w, sub) - entropy(w)))
    return worst <= 1e-12, worst


def _convergence(rng) -> tuple[bool, float]:
    worst = 0.0
    for _ in range(200):
        n_prior = int(rng.integers(1, 5))
        per = int(rng.integers(1, 4))
        prior = rng.dirichlet(np.ones(n_prior))
        sigma = 2.0
        bk = BoundBookkeeping(prior, [sigma], per)
        for j in range(n_prior):
            for r in range(per):
                bk.add((j, r), prior[j] * sigma * rng.random(), j)
            bk.mark_complete(j, per)
        worst = max(worst, bk.interval().width)
    return worst <= 1e-9, worst


def _case1(seeds=range(3)) -> tuple[bool, float]:
    world, priors = build_floors(4, seed=0)
    b = prior_belief(priors, np.diag([0.05**2, 0.05**2, 0.02**2]))
    models = Models()
    shape = TreeShape(tuple(floors_actions()), 2)
    mismatches = 0
    for s in seeds:
        sk = build_skeleton(b, shape, world, models, np.random.default_rng(s))
        base = baseline_full_evaluation(b, shape, world, models, skeleton=sk)
        rep = plan_case1(b, shape, SimplificationHeuristic(), world, models, skeleton=sk)
        bad = intervals_contain_exact(rep.extra["plan_tree"], base.extra["table"])
        if rep.selected_indices != base.selected_indices or rep.loss_bound != 0 or bad:
            mismatches += 1
    return mismatches == 0, float(mismatches)


CHECKS = (
    ("entropy_decomposition_identity", _identity),
    ("bounds_converge_on_full_subset", _convergence),
    ("case1_matches_full_evaluation", lambda rng: _case1()),
)


def run_selftest(seed: int = 0) -> tuple[bool, str]:
    """Run every check; returns (all passed, CSV text)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("check", "passed", "value"))
    ok = True
    for name, fn in CHECKS:
        passed, value = fn(np.random.default_rng(seed))
        ok &= passed
        w.writerow((name, int(passed), _fmt(float(value)) if math.isfinite(value) else "inf"))
    return ok, buf.getvalue()
