import math

import numpy as np
import pytest

from nd2a.belief import (
    ContradictionError,
    Hypothesis,
    InferenceBudget,
    budgeted_update,
    full_update,
    make_simplified,
    predict_hypothesis,
    prior_belief,
    update_hypothesis,
)
from nd2a.env import AssociationRealization, Landmark, World
from nd2a.models import Action, Measurement, MotionModel, ObservationModel, Pose2

from conftest import twin_world

OBS = ObservationModel(0.1, 3.5)


def test_predict_zero_action_tiny_noise():
    m = MotionModel(np.eye(3) * 1e-30)
    h = Hypothesis(Pose2(1, 2, 0.3), np.diag([0.1, 0.2, 0.05]))
    p = predict_hypothesis(h, Action(0, 0, 0), m)
    assert p.mean == h.mean
    assert np.allclose(p.covariance, h.covariance, atol=1e-25)
    assert p.log_weight == h.log_weight


def test_predict_straight_line_adds_noise():
    Q = np.diag([0.01, 0.01, 0.001])
    P0 = np.diag([0.04, 0.09, 0.0])
    p = predict_hypothesis(Hypothesis(Pose2(0, 0, 0), P0), Action(1, 0, 0), MotionModel(Q))
    assert np.allclose(p.covariance, P0 + Q, atol=1e-15)
    assert (p.mean.x, p.mean.y) == pytest.approx((1, 0))


def test_predict_covariance_matches_monte_carlo():
    rng = np.random.default_rng(0)
    Q = np.diag([0.02**2, 0.01**2, 0.01**2])
    P = np.array([[0.01, 0.002, 0.0], [0.002, 0.02, 0.001], [0.0, 0.001, 0.004]])
    mu = np.array([1.0, -0.5, 0.6])
    u = np.array([1.2, 0.3, 0.2])
    n = 10**6
    x = rng.multivariate_normal(mu, P, size=n)
    w = rng.multivariate_normal(np.zeros(3), Q, size=n)
    dx, dy = u[0] + w[:, 0], u[1] + w[:, 1]
    c, s = np.cos(x[:, 2]), np.sin(x[:, 2])
    y = np.column_stack([x[:, 0] + c * dx - s * dy, x[:, 1] + s * dx + c * dy, x[:, 2] + u[2] + w[:, 2]])
    mc = np.cov(y.T)
    ekf = predict_hypothesis(Hypothesis(Pose2(*mu), P), Action(*u), MotionModel(Q)).covariance
    assert np.linalg.norm(ekf - mc) / np.linalg.norm(mc) < 0.05


def test_update_empty_measurements():
    w, _ = twin_world()
    h = Hypothesis(Pose2(0, 0, 0), np.eye(3) * 0.01)
    post, lik = update_hypothesis(h, [], AssociationRealization(()), w, OBS)
    assert post is h and lik == 1.0


def test_update_zero_innovation():
    w, _ = twin_world()
    P = np.diag([0.02, 0.03, 0.01])
    h = Hypothesis(Pose2(0, 0, 0), P)
    post, lik = update_hypothesis(h, [Measurement(1.5, "a")], AssociationRealization((0,)), w, OBS)
    assert (post.mean.x, post.mean.y, post.mean.theta) == pytest.approx((0, 0, 0), abs=1e-12)
    H = np.array([-1.0, 0.0, 0.0])
    S = H @ P @ H + OBS.range_noise_std**2
    assert lik == pytest.approx(1 / math.sqrt(2 * math.pi * S))
    assert post.covariance[0, 0] < P[0, 0]


def test_correct_association_more_likely():
    w = World((Landmark(0, "a", (1.0, 0.0)), Landmark(1, "a", (0.0, 2.0))), (-3, -3, 3, 3))
    h = Hypothesis(Pose2(0, 0, 0), np.eye(3) * 1e-4)
    z = [Measurement(1.0, "a")]
    _, right = update_hypothesis(h, z, AssociationRealization((0,)), w, OBS)
    _, wrong = update_hypothesis(h, z, AssociationRealization((1,)), w, OBS)
    assert right > wrong > 0


def test_full_update_doubles_components():
    world, priors = twin_world(num_floors=4)
    b = prior_belief(priors, np.eye(3) * 1e-3)
    post = full_update(b, Action(0, 0, 0), [Measurement(1.5, "a")], world, MotionModel(), OBS)
    assert len(post) == 8
    assert post.weights.sum() == pytest.approx(1.0, abs=1e-12)
    for h in post.hypotheses:
        parent = b.hypotheses[h.parent_index]
        assert h.association_history[:-1] == parent.association_history
        assert len(h.association_history) == len(parent.association_history) + 1


def test_full_update_unique_keeps_count():
    world, priors = twin_world(num_floors=3, positions=((1.5, 0.0),))
    b = prior_belief(priors, np.eye(3) * 1e-3)
    post = full_update(b, Action(0, 0, 0), [Measurement(1.5, "a")], world, MotionModel(), OBS)
    assert len(post) == 3


def test_full_update_contradiction():
    world, priors = twin_world()
    b = prior_belief(priors, np.eye(3) * 1e-3)
    with pytest.raises(ContradictionError):
        full_update(b, Action(0, 0, 0), [Measurement(1.0, "missing")], world, MotionModel(), OBS)


def _eight(rng):
    world, priors = twin_world(num_floors=4, positions=((1.5, 0.0), (-1.2, 0.4)))
    b = prior_belief(priors, np.eye(3) * 1e-2, rng.dirichlet(np.ones(4)))
    z = [Measurement(1.4, "a")]
    return b, z, world


def test_budgeted_inactive_equals_full():
    b, z, world = _eight(np.random.default_rng(0))
    full = full_update(b, Action(0, 0, 0), z, world, MotionModel(), OBS)
    pruned = budgeted_update(b, Action(0, 0, 0), z, world, MotionModel(), OBS, InferenceBudget(8))
    assert np.allclose(full.weights, pruned.weights, atol=1e-15)


def test_budgeted_keeps_top_weights():
    b, z, world = _eight(np.random.default_rng(1))
    full = full_update(b, Action(0, 0, 0), z, world, MotionModel(), OBS)
    pruned = budgeted_update(b, Action(0, 0, 0), z, world, MotionModel(), OBS, InferenceBudget(3))
    top = sorted(np.argsort(-full.weights, kind="stable")[:3])
    assert len(pruned) == 3
    assert [h.association_history for h in pruned.hypotheses] == [full.hypotheses[i].association_history for i in top]
    assert pruned.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(pruned.weights, full.weights[top] / full.weights[top].sum())


def test_inference_budget_validation():
    with pytest.raises(ValueError):
        InferenceBudget(0)
    with pytest.raises(ValueError):
        InferenceBudget(2, "no-such-heuristic")


def test_make_simplified_examples():
    s = make_simplified([0.5, 0.3, 0.2], [0, 1])
    assert s.renormalized_weights == pytest.approx([0.625, 0.375])
    assert make_simplified([0.5, 0.3, 0.2], [0, 1, 2]).renormalized_weights == pytest.approx([0.5, 0.3, 0.2])
    assert make_simplified([0.5, 0.3, 0.2], [2]).renormalized_weights == pytest.approx([1.0])
    with pytest.raises(ValueError):
        make_simplified([0.5, 0.5, 0.0], [2])
    with pytest.raises(ValueError):
        make_simplified([0.5, 0.5], [])


def test_inconsistent_hypothesis_decays():
    # truth on floor 0 at range 2; the floor-1 hypothesis predicts range 3
    world = World((Landmark(0, "a", (2.0, 0.0)), Landmark(1, "a", (3.0, 100.0))), (-5, -5, 5, 105))
    obs = ObservationModel(0.1, 3.5)
    b = prior_belief([Pose2(0, 0, 0), Pose2(0, 100, 0)], np.eye(3) * 1e-4)
    m = MotionModel(np.eye(3) * 1e-10)
    wrong = []
    for _ in range(4):
        b = full_update(b, Action(0, 0, 0), [Measurement(2.0, "a")], world, m, obs)
        wrong.append(sum(w for w, h in zip(b.weights, b.hypotheses) if h.anchor == 1))
    assert all(a > b_ for a, b_ in zip(wrong, wrong[1:]) if a > 0)
    assert wrong[-1] < 1e-10


def test_belief_text_dump():
    world, priors = twin_world()
    b = prior_belief(priors, np.eye(3) * 1e-3)
    text = b.to_text()
    assert len(text.strip().splitlines()) == 1 + len(b)
