"""Property tests for the invariants the modules promise."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from nd2a.belief import InferenceBudget, budgeted_update, full_update, make_simplified, prior_belief
from nd2a.bounds import BoundInterval, entropy, entropy_bounds, entropy_decomposition, simplified_entropy
from nd2a.env import Landmark, World, association_candidates, enumerate_associations
from nd2a.harness.runner import ResultRow, _fmt, emit_csv, read_csv
from nd2a.models import (
    Action,
    Measurement,
    MotionModel,
    ObservationModel,
    Pose2,
    compose,
    max_likelihood_value,
    measurement_likelihood,
    propagate,
    wrap_angle,
)
from nd2a.planner import PlanNode, evaluate
from nd2a.planner.core import FixedCost, decision_resolved, policy_nodes

finite = st.floats(-10, 10, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)
pos_weights = st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=64)


@given(finite, finite, angle, finite, finite, angle, finite, finite, angle)
def test_propagate_associative(x, y, t, a, b, c, d, e, f):
    p = Pose2(x, y, t)
    u1, u2 = Action(a, b, c), Action(d, e, f)
    l, r = propagate(propagate(p, u1), u2), propagate(p, compose(u1, u2))
    assert math.isclose(l.x, r.x, abs_tol=1e-9) and math.isclose(l.y, r.y, abs_tol=1e-9)
    assert abs(wrap_angle(l.theta - r.theta)) < 1e-9


@given(st.floats(0, 20), finite, finite, angle, st.floats(1e-3, 2.0))
def test_likelihood_below_supremum(r, x, y, t, std):
    obs = ObservationModel(std, 5.0)
    assert measurement_likelihood(Measurement(r, "a"), Pose2(x, y, t), (1.0, 2.0), obs) <= max_likelihood_value(1, obs)


@given(pos_weights, st.data())
def test_decomposition_identity(w, data):
    idx = data.draw(st.lists(st.integers(0, len(w) - 1), min_size=1, unique=True))
    assert abs(entropy_decomposition(w, idx) - entropy(w)) <= 1e-12


@given(pos_weights, st.floats(1e-6, 1e6))
def test_entropy_rescaling(w, c):
    assert math.isclose(entropy(np.array(w) * c), entropy(w), abs_tol=1e-12)


@given(st.lists(st.floats(0, 1), min_size=8, max_size=8), st.data(), st.floats(0, 3))
def test_entropy_bounds_sandwich(w, data, slack):
    w = np.array(w)
    sub = data.draw(st.lists(st.integers(0, 7), min_size=1, max_size=5, unique=True))
    w_ms = w[sub].sum()
    if not w_ms > 0:
        return
    eta = w.sum()
    iv = entropy_bounds(simplified_entropy(make_simplified(w, sub)), w_ms, BoundInterval(w_ms, eta * (1 + slack)),
                        8 - len(sub), 8)
    H = entropy(w)
    assert iv.lower - 1e-12 <= H <= iv.upper + 1e-12


@given(pos_weights, st.data())
def test_simplified_weights_normalized(w, data):
    idx = data.draw(st.lists(st.integers(0, len(w) - 1), min_size=1, unique=True))
    assert math.isclose(make_simplified(w, idx).renormalized_weights.sum(), 1.0, abs_tol=1e-9)


landmark_lists = st.lists(
    st.tuples(st.sampled_from("abc"), st.floats(-4, 4), st.floats(-4, 4)), min_size=1, max_size=7
)


@given(landmark_lists, st.lists(st.sampled_from("abc"), max_size=3))
def test_association_count_is_product(specs, classes):
    world = World(tuple(Landmark(i, c, (x, y)) for i, (c, x, y) in enumerate(specs)), (-5, -5, 5, 5))
    obs = ObservationModel(0.1, 3.0)
    cands = association_candidates(world, Pose2(0, 0), classes, obs)
    betas = enumerate_associations(world, Pose2(0, 0), classes, obs)
    assert len(betas) == math.prod(len(c) for c in cands)
    for beta in betas:
        assert [world.landmark(i).cls for i in beta.assignments] == list(classes)


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=6), st.data())
def test_distinct_classes_single_realization(pts, data):
    world = World(tuple(Landmark(i, f"k{i}", p) for i, p in enumerate(pts)), (-5, -5, 5, 5))
    obs = ObservationModel(0.1, 10.0)
    classes = data.draw(st.lists(st.sampled_from([f"k{i}" for i in range(len(pts))]), max_size=3, unique=True))
    assert len(enumerate_associations(world, Pose2(0, 0), classes, obs)) == 1


@settings(suppress_health_check=[HealthCheck.too_slow], deadline=None, max_examples=40)
@given(st.integers(1, 8), st.lists(st.floats(0.05, 1.0), min_size=4, max_size=4), st.floats(1.0, 2.0))
def test_budgeted_update_is_pruned_full_update(C, prior_w, r):
    lms, priors = [], []
    for f in range(4):
        lms += [Landmark(2 * f, "a", (1.5, 100.0 * f)), Landmark(2 * f + 1, "a", (-1.2, 100.0 * f + 0.4))]
        priors.append(Pose2(0.0, 100.0 * f, 0.0))
    world = World(tuple(lms), (-5, -5, 5, 305))
    b = prior_belief(priors, np.eye(3) * 0.02, prior_w)
    z = [Measurement(r, "a")]
    full = full_update(b, Action(0, 0, 0), z, world, MotionModel(), ObservationModel(0.1, 3.5))
    pruned = budgeted_update(b, Action(0, 0, 0), z, world, MotionModel(), ObservationModel(0.1, 3.5), InferenceBudget(C))
    assert len(pruned) == min(C, len(full))
    assert math.isclose(pruned.weights.sum(), 1.0, abs_tol=1e-9)
    hist = {h.association_history: w for h, w in zip(full.hypotheses, full.weights)}
    kept = [hist[h.association_history] for h in pruned.hypotheses]
    assert np.allclose(pruned.weights, np.array(kept) / sum(kept))
    dropped = [w for hh, w in hist.items() if hh not in {h.association_history for h in pruned.hypotheses}]
    assert not dropped or max(dropped) <= min(kept) + 1e-15


@st.composite
def interval_trees(draw):
    """Random interval trees with a hidden exact cost inside every interval."""
    n_act = draw(st.integers(2, 3))
    depth = draw(st.integers(1, 3))
    o = draw(st.integers(1, 2))
    counter = [0]

    def node(d, a):
        counter[0] += 1
        lo = draw(st.floats(0, 3))
        width = draw(st.sampled_from([0.0, draw(st.floats(0, 2))]))
        exact = lo + width * draw(st.floats(0, 1))
        n = PlanNode(counter[0], d, a, FixedCost(lo, lo + width) if d > 0 else None)
        n.exact = exact if d > 0 else 0.0
        if d < depth:
            n.children = {b: [node(d + 1, b) for _ in range(o)] for b in range(n_act)}
        return n

    return node(0, None)


def exact_value(n, policy=None):
    if not n.children:
        return n.exact
    vals = [sum(exact_value(k, policy) for k in kids) / len(kids) for _, kids in sorted(n.children.items())]
    if policy is not None and n.id in policy:
        return n.exact + vals[policy[n.id]]
    return n.exact + min(vals)


@settings(max_examples=300, deadline=None)
@given(interval_trees())
def test_loss_bound_is_sound(root):
    evaluate(root)
    policy = {n.id: n.sel for n in _all(root) if n.children}
    regret = exact_value(root, policy) - exact_value(root)
    assert regret <= root.risk + 1e-9
    assert root.lo - 1e-9 <= exact_value(root) <= root.hi + 1e-9
    if all(decision_resolved(n.q, n.sel) for n in policy_nodes(root)):
        assert root.risk == 0.0


def _all(n):
    yield n
    for c in n.child_list():
        yield from _all(c)


rows = st.builds(
    ResultRow,
    scenario=st.sampled_from(["floors", "random"]),
    case=st.sampled_from(["1", "2", "baseline"]),
    seed=st.integers(0, 2**32 - 1),
    horizon=st.integers(1, 4),
    prior_hypotheses=st.integers(1, 12),
    budget=st.sampled_from(["full", "1", "16"]),
    wall_time_seconds=st.one_of(st.none(), st.floats(0, 100)),
    loss_bound=st.floats(0, 10),
    normalized_loss=st.floats(0, 1),
    selected_sequence=st.sampled_from(["fwd", "fwd-up", "down-down-fwd"]),
    components_used_per_level=st.lists(st.floats(0, 1), min_size=1, max_size=4),
    node_count=st.integers(1, 1000),
)


@settings(max_examples=50, deadline=None)
@given(st.lists(rows, max_size=5))
def test_csv_round_trip(tmp_path_factory, rs):
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    emit_csv(rs, path)
    back = read_csv(path)
    assert len(back) == len(rs)
    for a, b in zip(rs, back):
        assert _fmt(a.loss_bound) == _fmt(b.loss_bound)
        assert [_fmt(x) for x in a.components_used_per_level] == [_fmt(x) for x in b.components_used_per_level]
        assert (a.seed, a.case, a.budget) == (b.seed, b.case, b.budget)
