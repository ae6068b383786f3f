import numpy as np
import pytest

from nd2a.belief import prior_belief
from nd2a.env import Landmark, World, build_floors, floors_actions
from nd2a.models import Models, MotionModel, ObservationModel, Pose2
from nd2a.tree import TreeShape, build_skeleton

PRIOR_COV = np.diag([0.05**2, 0.05**2, 0.02**2])


def floors_instance(num_floors=4, horizon=2, seed=0, unique_distance=4.2, weights=None):
    world, priors = build_floors(num_floors, seed=0, unique_position=(unique_distance, 0.0))
    b = prior_belief(priors, PRIOR_COV, weights)
    models = Models()
    shape = TreeShape(tuple(floors_actions()), horizon)
    skeleton = build_skeleton(b, shape, world, models, np.random.default_rng(seed))
    return world, b, models, shape, skeleton


def twin_world(num_floors=2, offset=100.0, positions=((1.5, 0.0), (-1.5, 0.0))):
    """Per floor, aliased class-'a' landmarks around the start pose; start poses are the prior modes."""
    lms, priors = [], []
    for f in range(num_floors):
        for j, (x, y) in enumerate(positions):
            lms.append(Landmark(f * len(positions) + j, "a", (x, y + f * offset)))
        priors.append(Pose2(0.0, f * offset, 0.0))
    return World(tuple(lms), (-5.0, -5.0, 5.0, (num_floors - 1) * offset + 5.0)), priors


@pytest.fixture
def models():
    return Models()


@pytest.fixture
def quiet_models():
    return Models(MotionModel(np.diag([1e-8, 1e-8, 1e-10])), ObservationModel(0.1, 3.5), 0.5)
