import math

import numpy as np
import pytest
from scipy import integrate, stats

from nd2a.models import (
    Action,
    Measurement,
    ObservationModel,
    Pose2,
    compose,
    max_likelihood_value,
    measurement_likelihood,
    predict_measurement,
    propagate,
    wrap_angle,
)


def se2(x, y, th):
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def test_propagate_translation():
    p = propagate(Pose2(0, 0, 0), Action(1, 0, 0))
    assert (p.x, p.y, p.theta) == pytest.approx((1, 0, 0))


def test_propagate_quarter_turn():
    p = propagate(Pose2(0, 0, math.pi / 2), Action(1, 0, 0))
    assert (p.x, p.y, p.theta) == pytest.approx((0, 1, math.pi / 2), abs=1e-12)


def test_propagate_matches_matrix_composition():
    T = se2(1, 2, 0.3) @ se2(0.5, 0, 0.1)
    p = propagate(Pose2(1, 2, 0.3), Action(0.5, 0, 0.1))
    assert p.x == pytest.approx(T[0, 2], abs=1e-12)
    assert p.y == pytest.approx(T[1, 2], abs=1e-12)
    assert p.theta == pytest.approx(math.atan2(T[1, 0], T[0, 0]), abs=1e-12)


def test_propagate_noise_enters_body_frame():
    p = propagate(Pose2(0, 0, math.pi / 2), Action(1, 0, 0), w=(0.1, 0.0, 0.0))
    assert (p.x, p.y) == pytest.approx((0, 1.1), abs=1e-12)


def test_compose_then_propagate():
    x = Pose2(0.3, -1.0, 2.0)
    u1, u2 = Action(1.0, 0.5, 0.7), Action(-0.2, 0.4, -1.1)
    a = propagate(propagate(x, u1), u2)
    b = propagate(x, compose(u1, u2))
    assert (a.x, a.y) == pytest.approx((b.x, b.y), abs=1e-12)
    assert wrap_angle(a.theta - b.theta) == pytest.approx(0, abs=1e-12)


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_action_rejects_nonfinite():
    with pytest.raises(ValueError):
        Action(float("nan"), 0, 0)


def test_predict_measurement_examples():
    assert predict_measurement(Pose2(0, 0, 0), (3, 4)) == pytest.approx(5.0)
    assert predict_measurement(Pose2(1, 1, 0.7), (1, 1)) == 0.0


def test_predict_measurement_matches_norm():
    rng = np.random.default_rng(3)
    for _ in range(200):
        x = Pose2(*rng.normal(size=3))
        lm = rng.normal(size=2) * 5
        assert predict_measurement(x, lm) == pytest.approx(np.linalg.norm(lm - x.position), rel=1e-12)


def test_likelihood_zero_and_one_sigma():
    obs = ObservationModel(0.2, 5.0)
    x = Pose2(0, 0, 0)
    peak = 1 / (math.sqrt(2 * math.pi) * 0.2)
    assert measurement_likelihood(Measurement(2.0, "a"), x, (2, 0), obs) == pytest.approx(peak)
    assert measurement_likelihood(Measurement(2.2, "a"), x, (2, 0), obs) == pytest.approx(peak * math.exp(-0.5))


def test_likelihood_matches_scipy_pdf():
    obs = ObservationModel(0.15, 5.0)
    x = Pose2(0.4, -0.3, 1.0)
    for r in (0.0, 0.8, 1.3, 2.9):
        pred = np.hypot(1.0 - 0.4, 1.0 + 0.3)
        got = measurement_likelihood(Measurement(r, "a"), x, (1.0, 1.0), obs)
        assert got == pytest.approx(stats.norm.pdf(r, loc=pred, scale=0.15), rel=1e-12)


def test_max_likelihood_unit_peak():
    obs = ObservationModel(1 / math.sqrt(2 * math.pi), 5.0)
    assert max_likelihood_value(1, obs) == pytest.approx(1.0)
    assert max_likelihood_value(2, obs) == pytest.approx(1.0)


def test_max_likelihood_grid_search():
    obs = ObservationModel(0.1, 5.0)
    g = np.linspace(-0.3, 0.3, 61)
    e1, e2, e3 = np.meshgrid(g, g, g, indexing="ij")
    joint = stats.norm.pdf(e1, scale=0.1) * stats.norm.pdf(e2, scale=0.1) * stats.norm.pdf(e3, scale=0.1)
    assert max_likelihood_value(3, obs) == pytest.approx(joint.max(), rel=1e-9)


def test_likelihood_integrates_to_one():
    obs = ObservationModel(0.1, 5.0)
    x = Pose2(0, 0, 0)
    f = lambda r: measurement_likelihood(Measurement(abs(r), "a"), x, (2, 0), obs) if r >= 0 else 0.0
    val, _ = integrate.quad(f, 0.0, 4.0, points=[2.0], epsabs=1e-12)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_observation_model_validation():
    with pytest.raises(ValueError):
        ObservationModel(0.0, 1.0)
    with pytest.raises(ValueError):
        Measurement(-1.0, "a")
