"""Planar kinematics and range+class sensing with Gaussian noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = math.atan2(math.sin(theta), math.cos(theta))
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "Pose2":
        return cls(v[0], v[1], v[2])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Action:
    """Relative pose command expressed in the body frame."""

    dx: float
    dy: float
    dtheta: float = 0.0
    name: str = ""

    def __post_init__(self):
        for v in (self.dx, self.dy, self.dtheta):
            if not math.isfinite(v):
                raise ValueError("action components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta])

    def label(self) -> str:
        return self.name or f"({self.dx:g},{self.dy:g},{self.dtheta:g})"


def compose(a: Action, b: Action) -> Action:
    """Compose two relative commands: apply ``a`` then ``b``."""
    c, s = math.cos(a.dtheta), math.sin(a.dtheta)
    return Action(
        a.dx + c * b.dx - s * b.dy,
        a.dy + s * b.dx + c * b.dy,
        wrap_angle(a.dtheta + b.dtheta),
    )


@dataclass(frozen=True)
class Measurement:
    range: float
    landmark_class: Hashable

    def __post_init__(self):
        if self.range < 0:
            raise ValueError("range must be non-negative")


@dataclass(frozen=True, eq=False)
class MotionModel:
    noise_covariance: np.ndarray = field(
        default_factory=lambda: np.diag([0.02**2, 0.02**2, 0.005**2])
    )

    def __post_init__(self):
        cov = np.asarray(self.noise_covariance, dtype=float)
        if cov.shape != (3, 3) or not np.allclose(cov, cov.T):
            raise ValueError("motion noise covariance must be a symmetric 3x3 matrix")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("motion noise covariance must be positive definite") from exc
        cov.setflags(write=False)
        object.__setattr__(self, "noise_covariance", cov)
        object.__setattr__(self, "_chol", chol)

    def sample_noise(self, rng: np.random.Generator) -> np.ndarray:
        return self._chol @ rng.standard_normal(3)


@dataclass(frozen=True)
class ObservationModel:
    range_noise_std: float = 0.1
    max_sensing_range: float = 3.5

    def __post_init__(self):
        if not self.range_noise_std > 0:
            raise ValueError("range_noise_std must be positive")
        if not self.max_sensing_range > 0:
            raise ValueError("max_sensing_range must be positive")

    @property
    def peak_density(self) -> float:
        return 1.0 / (SQRT_2PI * self.range_noise_std)


def propagate(x: Pose2, u: Action, w: Optional[Sequence[float]] = None) -> Pose2:
    """Compose ``x`` with the body-frame command ``u`` perturbed by ``w``."""
    dx, dy, dth = u.dx, u.dy, u.dtheta
    if w is not None:
        dx, dy, dth = dx + w[0], dy + w[1], dth + w[2]
    c, s = math.cos(x.theta), math.sin(x.theta)
    return Pose2(x.x + c * dx - s * dy, x.y + s * dx + c * dy, x.theta + dth)


def motion_jacobians(x: Pose2, u: Action) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of ``propagate`` w.r.t. the pose and the body-frame noise."""
    c, s = math.cos(x.theta), math.sin(x.theta)
    F = np.array(
        [
            [1.0, 0.0, -s * u.dx - c * u.dy],
            [0.0, 1.0, c * u.dx - s * u.dy],
            [0.0, 0.0, 1.0],
        ]
    )
    W = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return F, W


def predict_measurement(x: Pose2, landmark_position: Sequence[float], v: float = 0.0) -> float:
    return math.hypot(landmark_position[0] - x.x, landmark_position[1] - x.y) + v


def range_jacobian(x: Pose2, landmark_position: Sequence[float]) -> tuple[float, np.ndarray]:
    """Predicted range and its 1x3 Jacobian w.r.t. the pose."""
    ddx = x.x - landmark_position[0]
    ddy = x.y - landmark_position[1]
    r = math.hypot(ddx, ddy)
    if r < 1e-12:
        return r, np.zeros(3)
    return r, np.array([ddx / r, ddy / r, 0.0])


def gaussian_pdf(innovation: float, std: float) -> float:
    return math.exp(-0.5 * (innovation / std) ** 2) / (SQRT_2PI * std)


def measurement_likelihood(
    z: Measurement, x: Pose2, landmark_position: Sequence[float], obs: ObservationModel
) -> float:
    """Density of the observed range given pose and (already associated) landmark."""
    return gaussian_pdf(z.range - predict_measurement(x, landmark_position), obs.range_noise_std)


def max_likelihood_value(n_measurements: int, obs: ObservationModel) -> float:
    """Supremum of the joint density of ``n_measurements`` independent ranges."""
    if n_measurements < 0:
        raise ValueError("n_measurements must be non-negative")
    return obs.peak_density**n_measurements


@dataclass(frozen=True)
class Models:
    """Motion and observation models plus the association gate (metres beyond sensing range)."""

    motion: MotionModel = field(default_factory=MotionModel)
    obs: ObservationModel = field(default_factory=ObservationModel)
    gate: float = 0.5
