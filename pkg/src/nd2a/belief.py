"""Gaussian-mixture belief over pose with one component per association history."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from .env import AssociationRealization, World, enumerate_associations
from .models import (
    Action,
    Measurement,
    MotionModel,
    ObservationModel,
    Pose2,
    motion_jacobians,
    propagate,
)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# number of single-hypothesis measurement updates performed (instrumentation)
UPDATE_COUNT = [0]


class ContradictionError(RuntimeError):
    """Every hypothesis is inconsistent with the observation."""


class NumericalDegeneracyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """One conditional Gaussian with its association history and log weight.

    ``anchor`` is the index of the prior component this hypothesis descends
    from; it is carried along so planners can attribute posterior mass back to
    the prior.
    """

    mean: Pose2
    covariance: np.ndarray
    log_weight: float = 0.0
    association_history: tuple[AssociationRealization, ...] = ()
    parent_index: Optional[int] = None
    anchor: int = 0

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (3, 3):
            raise ValueError("covariance must be 3x3")
        object.__setattr__(self, "covariance", cov)

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight) if self.log_weight > -math.inf else 0.0

    def check(self) -> None:
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-12):
            raise ValueError("covariance not symmetric")
        np.linalg.cholesky(self.covariance)


@dataclass(frozen=True, eq=False)
class MixtureBelief:
    time_index: int
    hypotheses: tuple[Hypothesis, ...]

    def __len__(self):
        return len(self.hypotheses)

    @property
    def log_weights(self) -> np.ndarray:
        return np.array([h.log_weight for h in self.hypotheses], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        """Normalized weights (log-sum-exp)."""
        lw = self.log_weights
        if lw.size == 0:
            return lw
        m = lw.max()
        if m == -math.inf:
            return np.zeros_like(lw)
        w = np.exp(lw - m)
        return w / w.sum()

    def normalize(self) -> "MixtureBelief":
        lw = self.log_weights
        if lw.size == 0 or lw.max() == -math.inf:
            raise ContradictionError("all hypothesis weights are zero")
        m = lw.max()
        log_eta = m + math.log(np.exp(lw - m).sum())
        hyps = tuple(replace(h, log_weight=h.log_weight - log_eta) for h in self.hypotheses)
        return MixtureBelief(self.time_index, hyps)

    def to_text(self) -> str:
        """One hypothesis per line: weight, mean, row-major covariance, history."""
        lines = [f"# t={self.time_index} n={len(self.hypotheses)}"]
        for w, h in zip(self.weights, self.hypotheses):
            hist = "|".join(",".join(str(i) for i in b.assignments) for b in h.association_history)
            vals = [repr(float(w)), repr(h.mean.x), repr(h.mean.y), repr(h.mean.theta)]
            vals += [repr(float(v)) for v in h.covariance.ravel()]
            lines.append(" ".join(vals) + f" anchor={h.anchor} history={hist}")
        return "\n".join(lines) + "\n"


def prior_belief(modes: Sequence[Pose2], covariance, weights: Optional[Sequence[float]] = None) -> MixtureBelief:
    """Mixture with one Gaussian per prior mode (uniform weights by default)."""
    if not modes:
        raise ValueError("need at least one prior mode")
    if weights is None:
        weights = [1.0 / len(modes)] * len(modes)
    if len(weights) != len(modes) or any(w < 0 for w in weights):
        raise ValueError("invalid prior weights")
    total = float(sum(weights))
    cov = np.asarray(covariance, dtype=float)
    hyps = tuple(
        Hypothesis(m, cov.copy(), math.log(w / total) if w > 0 else -math.inf, (), None, i)
        for i, (m, w) in enumerate(zip(modes, weights))
    )
    return MixtureBelief(0, hyps)


@dataclass(frozen=True)
class SimplifiedBelief:
    base: object
    subset_indices: tuple[int, ...]
    renormalized_weights: np.ndarray
    subset_mass: float


@dataclass(frozen=True)
class InferenceBudget:
    max_hypotheses: int
    pruning_heuristic: str = "keep-highest-weight"

    def __post_init__(self):
        if self.max_hypotheses < 1:
            raise ValueError("max_hypotheses must be >= 1")
        if self.pruning_heuristic not in PRUNING_HEURISTICS:
            raise ValueError(f"unknown pruning heuristic {self.pruning_heuristic!r}")


def predict_hypothesis(h: Hypothesis, u: Action, m: MotionModel) -> Hypothesis:
    F, W = motion_jacobians(h.mean, u)
    cov = F @ h.covariance @ F.T + W @ m.noise_covariance @ W.T
    cov = 0.5 * (cov + cov.T)
    return Hypothesis(propagate(h.mean, u), cov, h.log_weight, h.association_history, h.parent_index, h.anchor)


def _ekf_ranges(
    mean: np.ndarray, P: np.ndarray, ranges: Sequence[float], lm_xy: Sequence[Sequence[float]], var_v: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Sequential scalar range updates; returns (mean, cov, log evidence).

    Works on plain floats: for a 3x3 state, numpy's per-call overhead costs
    more than the arithmetic.
    """
    m = [float(v) for v in mean]
    P = P.tolist()
    loglik = 0.0
    for r_obs, (lx, ly) in zip(ranges, lm_xy):
        dx = m[0] - lx
        dy = m[1] - ly
        r = math.hypot(dx, dy)
        # range Jacobian is (dx/r, dy/r, 0); zero at the landmark itself
        hx, hy = (dx / r, dy / r) if r >= 1e-12 else (0.0, 0.0)
        PH = [row[0] * hx + row[1] * hy for row in P]
        S = hx * PH[0] + hy * PH[1] + var_v
        if not S > 0 or not math.isfinite(S):
            raise NumericalDegeneracyError("innovation covariance not invertible")
        innov = r_obs - r
        loglik += -0.5 * innov * innov / S - 0.5 * math.log(S) - LOG_SQRT_2PI
        K = [v / S for v in PH]
        m = [mi + ki * innov for mi, ki in zip(m, K)]
        P = [[P[i][j] - K[i] * PH[j] for j in range(3)] for i in range(3)]
        P = [[0.5 * (P[i][j] + P[j][i]) for j in range(3)] for i in range(3)]
    return np.array(m), np.array(P), loglik


def _posterior(h: Hypothesis, z, beta: AssociationRealization, world: World, obs: ObservationModel):
    if len(beta) != len(z):
        raise ValueError("association must assign every measurement")
    UPDATE_COUNT[0] += 1
    if not z:
        return None, None, 0.0
    lm_xy = [world.landmarks[world.index_of(i)].position for i in beta.assignments]
    return _ekf_ranges(h.mean.as_array(), h.covariance, [m.range for m in z], lm_xy, obs.range_noise_std**2)


def update_log(
    h: Hypothesis,
    z: Sequence[Measurement],
    beta: AssociationRealization,
    world: World,
    obs: ObservationModel,
) -> tuple[Hypothesis, float]:
    """Like :func:`update_hypothesis` but returns the log evidence."""
    mean, P, loglik = _posterior(h, z, beta, world, obs)
    if mean is None:
        return h, 0.0
    return replace(h, mean=Pose2.from_array(mean), covariance=P), loglik


def update_hypothesis(
    h: Hypothesis,
    z: Sequence[Measurement],
    beta: AssociationRealization,
    world: World,
    obs: ObservationModel,
) -> tuple[Hypothesis, float]:
    """EKF range updates for one association; returns (posterior, evidence).

    The weight is left untouched; callers multiply the evidence in.
    """
    post, loglik = update_log(h, z, beta, world, obs)
    return post, math.exp(loglik)


def expand_hypothesis(
    h: Hypothesis,
    index: int,
    u: Action,
    z: Sequence[Measurement],
    world: World,
    m: MotionModel,
    obs: ObservationModel,
    margin: float = 0.0,
    candidate_prior: Optional[Callable[[Hypothesis, AssociationRealization], float]] = None,
) -> list[Hypothesis]:
    """Children of one hypothesis, one per association realization, in order."""
    pred = predict_hypothesis(h, u, m)
    betas = enumerate_associations(world, pred.mean, [mm.landmark_class for mm in z], obs, margin)
    children = []
    for beta in betas:
        extra = 0.0
        if candidate_prior is not None:
            p = candidate_prior(pred, beta)
            extra = math.log(p) if p > 0 else -math.inf
        children.append(child_hypothesis(pred, h, index, z, beta, world, obs, extra))
    return children


def child_hypothesis(
    pred: Hypothesis,
    parent: Hypothesis,
    index: int,
    z: Sequence[Measurement],
    beta: AssociationRealization,
    world: World,
    obs: ObservationModel,
    log_prior: float = 0.0,
) -> Hypothesis:
    """Posterior of the predicted ``pred`` under association ``beta``, weighted and linked to its parent."""
    mean, P, loglik = _posterior(pred, z, beta, world, obs)
    x = pred.mean if mean is None else Pose2.from_array(mean)
    return Hypothesis(
        x, pred.covariance if P is None else P, parent.log_weight + loglik + log_prior,
        parent.association_history + (beta,), index, parent.anchor,
    )


def unnormalized_update(
    b: MixtureBelief,
    u: Action,
    z: Sequence[Measurement],
    world: World,
    m: MotionModel,
    obs: ObservationModel,
    margin: float = 0.0,
    candidate_prior=None,
) -> MixtureBelief:
    """Full branching update without normalization (may be empty)."""
    children: list[Hypothesis] = []
    for j, h in enumerate(b.hypotheses):
        children.extend(expand_hypothesis(h, j, u, z, world, m, obs, margin, candidate_prior))
    return MixtureBelief(b.time_index + 1, tuple(children))


def full_update(
    b: MixtureBelief,
    u: Action,
    z: Sequence[Measurement],
    world: World,
    m: MotionModel,
    obs: ObservationModel,
    margin: float = 0.0,
    candidate_prior=None,
) -> MixtureBelief:
    """Predict, branch on every association realization, weight and normalize."""
    return unnormalized_update(b, u, z, world, m, obs, margin, candidate_prior).normalize()


def _keep_highest_weight(b: MixtureBelief, k: int) -> list[int]:
    lw = b.log_weights
    order = sorted(range(len(lw)), key=lambda i: (-lw[i], i))
    return sorted(order[:k])


def _keep_first(b: MixtureBelief, k: int) -> list[int]:
    return list(range(min(k, len(b))))


PRUNING_HEURISTICS: dict[str, Callable[[MixtureBelief, int], list[int]]] = {
    "keep-highest-weight": _keep_highest_weight,
    "keep-first": _keep_first,
}


def prune(b: MixtureBelief, budget: InferenceBudget) -> MixtureBelief:
    """Keep at most ``budget.max_hypotheses`` components (lineage order preserved)."""
    if len(b) <= budget.max_hypotheses:
        return b
    keep = PRUNING_HEURISTICS[budget.pruning_heuristic](b, budget.max_hypotheses)
    return MixtureBelief(b.time_index, tuple(b.hypotheses[i] for i in keep))


def budgeted_update(
    b: MixtureBelief,
    u: Action,
    z: Sequence[Measurement],
    world: World,
    m: MotionModel,
    obs: ObservationModel,
    budget: InferenceBudget,
    margin: float = 0.0,
    candidate_prior=None,
) -> MixtureBelief:
    """Full update followed by pruning to the inference budget and renormalization."""
    full = full_update(b, u, z, world, m, obs, margin, candidate_prior)
    return prune(full, budget).normalize()


def make_simplified(b, subset: Sequence[int]) -> SimplifiedBelief:
    """Restrict ``b`` (a belief or a weight sequence) to ``subset`` and renormalize."""
    idx = tuple(sorted(set(int(i) for i in subset)))
    if not idx:
        raise ValueError("subset must be non-empty")
    w = b.weights if isinstance(b, MixtureBelief) else np.asarray(b, dtype=float)
    if idx[0] < 0 or idx[-1] >= len(w):
        raise IndexError("subset index out of range")
    sub = w[list(idx)]
    mass = float(sub.sum())
    if not mass > 0:
        raise ValueError("subset has zero mass")
    return SimplifiedBelief(b, idx, sub / mass, mass)
