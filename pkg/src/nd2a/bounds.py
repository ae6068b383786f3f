"""Entropy of mixture weights and its subset-based lower/upper bounds.

All logarithms are natural (nats). The bounds only ever see the weights of the
chosen subset plus side information (prior weights of the subset members, the
per-step likelihood suprema, and a bound on how much prior mass the full
component set can carry), never the weights of the complement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .belief import SimplifiedBelief

WIDTH_TOL = 1e-12


@dataclass(frozen=True)
class BoundInterval:
    lower: float
    upper: float
    subset: tuple = ()

    def __post_init__(self):
        if self.lower > self.upper + WIDTH_TOL * max(1.0, abs(self.upper)):
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def width(self) -> float:
        return max(0.0, self.upper - self.lower)

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol


def _xlogx(w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(w, dtype=float)
    pos = w > 0
    out[pos] = w[pos] * np.log(w[pos])
    return out


def entropy(weights: Sequence[float]) -> float:
    """Shannon entropy of the normalized weights (0 log 0 = 0)."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    eta = w.sum()
    if not eta > 0:
        raise ValueError("weights must not all be zero")
    return max(0.0, float(-_xlogx(w / eta).sum()))


def simplified_entropy(s: SimplifiedBelief) -> float:
    if not s.subset_mass > 0:
        raise ValueError("subset has zero mass")
    return max(0.0, float(-_xlogx(np.asarray(s.renormalized_weights)).sum()))


def entropy_decomposition(weights: Sequence[float], subset: Iterable[int]) -> float:
    """Entropy written as subset entropy plus the complement's terms.

    Exists to check the identity; numerically equal to :func:`entropy`.
    """
    w = np.asarray(weights, dtype=float)
    idx = sorted(set(int(i) for i in subset))
    if not idx:
        raise ValueError("subset must be non-empty")
    eta = w.sum()
    if not eta > 0:
        raise ValueError("weights must not all be zero")
    mask = np.zeros(w.size, dtype=bool)
    mask[idx] = True
    w_ms = w[mask].sum()
    comp = -_xlogx(w[~mask] / eta).sum()
    if w_ms == 0:
        return float(comp)
    h_s = -_xlogx(w[mask] / w_ms).sum()
    return float((w_ms / eta) * (h_s + math.log(eta / w_ms)) + comp)


@dataclass(frozen=True)
class EtaSideInfo:
    """What the bound on the weight normalizer may know besides the subset.

    ``prior_weights_of_subset`` holds, for every subset member, the prior
    weight of the time-k component it descends from (members sharing an
    ancestor each contribute). ``lineage_mass`` is an upper bound on the same
    sum taken over *all* components; it defaults to
    ``total_components / prior_components``, which is exact for normalized
    priors and uniform branching.
    """

    prior_weights_of_subset: tuple[float, ...]
    sigma_per_step: tuple[float, ...]
    total_components: int
    prior_components: int
    lineage_mass: Optional[float] = None

    def __post_init__(self):
        if any(s <= 0 for s in self.sigma_per_step):
            raise ValueError("sigma entries must be positive")
        if self.prior_components < 1 or self.total_components < 0:
            raise ValueError("invalid component counts")

    @property
    def mass_bound(self) -> float:
        if self.lineage_mass is not None:
            return self.lineage_mass
        return self.total_components / self.prior_components


def eta_interval(w_ms: float, subset_prior_mass: float, lineage_mass: float, sigma_prod: float) -> tuple[float, float]:
    slack = lineage_mass - subset_prior_mass
    # tolerate round-off when the subset already covers every lineage
    if slack < 0:
        if slack < -1e-9 * max(1.0, lineage_mass):
            raise ValueError("inconsistent side information: upper bound below lower bound")
        slack = 0.0
    if slack == 0.0:
        return w_ms, w_ms
    return w_ms, w_ms + slack * sigma_prod


def eta_bounds(info: EtaSideInfo, subset_weights: Sequence[float]) -> BoundInterval:
    """Interval on the sum of all unnormalized posterior weights."""
    w_ms = float(np.sum(subset_weights))
    lo, hi = eta_interval(
        w_ms,
        float(np.sum(info.prior_weights_of_subset)),
        info.mass_bound,
        float(np.prod(info.sigma_per_step)) if info.sigma_per_step else 1.0,
    )
    return BoundInterval(lo, hi)


def complement_entropy_cap(gamma_bar: float, count: float) -> float:
    """max of -g log(g / count) over g in [0, gamma_bar].

    For count > 2 this is -gamma_bar log(gamma_bar / count); for one or two
    complement members the maximizer may be interior (g = count / e).
    """
    if count <= 0 or gamma_bar <= 0:
        return 0.0
    g = min(gamma_bar, count / math.e)
    return -g * math.log(g / count)


def entropy_bounds(
    subset_entropy: float,
    w_ms: float,
    eta: BoundInterval,
    complement_count: float,
    total_count: Optional[float] = None,
) -> BoundInterval:
    """Lower/upper bounds on the full entropy from the subset's entropy and mass."""
    if not eta.lower > 0 or not w_ms > 0:
        raise ValueError("subset mass and eta lower bound must be positive")
    lb_eta, ub_eta = eta.lower, eta.upper
    # log ratios as differences so subnormal masses cannot overflow
    log_w = math.log(w_ms)
    lower = (w_ms / ub_eta) * (subset_entropy + math.log(lb_eta) - log_w)
    gamma_bar = min(1.0, max(0.0, 1.0 - w_ms / ub_eta))
    upper = (w_ms / lb_eta) * (subset_entropy + math.log(ub_eta) - log_w)
    upper += complement_entropy_cap(gamma_bar, complement_count)
    if total_count is not None and total_count >= 1:
        upper = min(upper, math.log(total_count))
    lower = max(0.0, lower)
    upper = max(upper, lower)
    return BoundInterval(lower, upper)


def cost_interval(
    w_ms: float,
    wlogw: float,
    subset_prior_mass: float,
    lineage_mass: float,
    sigma_prod: float,
    n_subset: int,
    n_total: float,
) -> BoundInterval:
    """Entropy bounds from running sums over the subset.

    ``wlogw`` is the sum of w log w over subset weights; ``n_total`` an upper
    bound on the number of components.
    """
    if n_subset == 0 or not w_ms > 0:
        return BoundInterval(0.0, math.log(n_total) if n_total > 1 else 0.0)
    h_s = max(0.0, math.log(w_ms) - wlogw / w_ms)
    lo, hi = eta_interval(w_ms, subset_prior_mass, lineage_mass, sigma_prod)
    return entropy_bounds(h_s, w_ms, BoundInterval(lo, hi), max(0.0, n_total - n_subset), n_total)


@dataclass
class BoundBookkeeping:
    """Subset-only state behind a node's entropy bounds.

    ``descendant_bound`` caps how many components any not-yet-exhausted prior
    lineage can have; lineages marked complete use their exact count instead.
    """

    anchor_weights: Sequence[float]
    sigma_per_step: Sequence[float]
    descendant_bound: float
    members: dict = field(default_factory=dict)
    complete: dict = field(default_factory=dict)

    def add(self, index, weight: float, anchor: int) -> None:
        if index in self.members:
            raise ValueError(f"component {index!r} already in subset")
        if weight < 0:
            raise ValueError("weights must be non-negative")
        self.members[index] = (float(weight), int(anchor))

    def mark_complete(self, anchor: int, count: int) -> None:
        self.complete[int(anchor)] = int(count)

    def _lineage_counts(self) -> tuple[float, float]:
        seen: dict[int, int] = {}
        for _, a in self.members.values():
            seen[a] = seen.get(a, 0) + 1
        mass, count = 0.0, 0.0
        for a, w in enumerate(self.anchor_weights):
            if a in self.complete:
                n = self.complete[a]
            else:
                n = max(self.descendant_bound, seen.get(a, 0))
            mass += w * n
            count += n
        return mass, count

    def interval(self) -> BoundInterval:
        weights = np.array([w for w, _ in self.members.values()], dtype=float)
        prior_mass = float(sum(self.anchor_weights[a] for _, a in self.members.values()))
        lineage_mass, n_total = self._lineage_counts()
        iv = cost_interval(
            float(weights.sum()),
            float(_xlogx(weights).sum()),
            prior_mass,
            lineage_mass,
            float(np.prod(self.sigma_per_step)) if len(self.sigma_per_step) else 1.0,
            len(self.members),
            n_total,
        )
        return BoundInterval(iv.lower, iv.upper, tuple(self.members))


def refine(bookkeeping: BoundBookkeeping, add: Iterable[tuple] = ()) -> BoundInterval:
    """Add ``(index, weight, anchor)`` members and recompute the bounds from scratch."""
    for index, weight, anchor in add:
        bookkeeping.add(index, weight, anchor)
    return bookkeeping.interval()
