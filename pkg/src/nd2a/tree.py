"""Belief trees over candidate actions and sampled observations.

Two builders:

* :func:`build_skeleton` samples states with the motion model and observations
  with the sensor model along each branch, and stores no posterior beliefs.
* :func:`build_explicit_tree` runs budgeted inference at every node and samples
  each child's observation from the parent's posterior.

Both trees branch over every action at every depth (``len(actions) ** horizon``
action sequences) with ``observations_per_step`` sampled children per action.
Sampling uses common random numbers: all actions out of a node reuse the same
noise stream for a given sample index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .belief import (
    ContradictionError,
    InferenceBudget,
    MixtureBelief,
    prune,
    unnormalized_update,
)
from .env import AssociationRealization, World, count_associations, observe
from .models import Action, Measurement, Models, Pose2, propagate


@dataclass(frozen=True)
class TreeShape:
    actions: tuple[Action, ...]
    horizon: int
    observations_per_step: int = 1

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise ValueError("need at least one candidate action")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.observations_per_step < 1:
            raise ValueError("observations_per_step must be >= 1")

    @property
    def num_sequences(self) -> int:
        return len(self.actions) ** self.horizon


@dataclass(eq=False)
class SkeletonNode:
    """Sampled state/association/observation; no posterior is stored here."""

    id: int
    depth: int
    action_index: Optional[int]
    sample_index: int
    sampled_state: Optional[Pose2]
    sampled_association: AssociationRealization
    sampled_observation: tuple[Measurement, ...]
    realization_count: int = 1
    parent: Optional["SkeletonNode"] = field(default=None, repr=False)
    children: dict = field(default_factory=dict, repr=False)
    root_states: tuple[Pose2, ...] = ()

    def child_list(self) -> Iterator["SkeletonNode"]:
        for a in sorted(self.children):
            yield from self.children[a]

    def path(self) -> list["SkeletonNode"]:
        out, n = [], self
        while n is not None:
            out.append(n)
            n = n.parent
        return out[::-1]

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(eq=False)
class ExplicitNode:
    id: int
    depth: int
    action_index: Optional[int]
    sample_index: int
    sampled_state: Optional[Pose2]
    sampled_association: AssociationRealization
    sampled_observation: tuple[Measurement, ...]
    posterior: MixtureBelief
    # all children of the parent's posterior, weights = parent weight x evidence
    unpruned: Optional[MixtureBelief] = field(default=None, repr=False)
    survivors: tuple[int, ...] = ()
    realization_count: int = 1
    parent: Optional["ExplicitNode"] = field(default=None, repr=False)
    children: dict = field(default_factory=dict, repr=False)

    def child_list(self) -> Iterator["ExplicitNode"]:
        for a in sorted(self.children):
            yield from self.children[a]

    @property
    def is_leaf(self) -> bool:
        return not self.children


def iter_nodes(root) -> Iterator:
    """Depth-first, actions in index order, samples in order."""
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(list(n.child_list())))


def node_count(root) -> int:
    return sum(1 for _ in iter_nodes(root))


def sample_from_mixture(b: MixtureBelief, rng: np.random.Generator) -> tuple[int, Pose2]:
    """Draw a component by weight, then a pose from its Gaussian."""
    w = b.weights
    j = int(rng.choice(len(w), p=w))
    h = b.hypotheses[j]
    x = rng.multivariate_normal(h.mean.as_array(), h.covariance, method="cholesky")
    return j, Pose2.from_array(x)


def _step(
    x: Pose2, u: Action, world: World, models: Models, rng: np.random.Generator
) -> tuple[Pose2, AssociationRealization, tuple[Measurement, ...]]:
    x_next = propagate(x, u, models.motion.sample_noise(rng))
    z, beta = observe(world, x_next, models.obs, rng)
    return x_next, beta, tuple(z)


def _count(world: World, x: Pose2, z: Sequence[Measurement], models: Models) -> int:
    return count_associations(world, x, [m.landmark_class for m in z], models.obs, models.gate)


def sample_skeleton_path(
    b_k: MixtureBelief,
    u_seq: Sequence[Action],
    world: World,
    models: Models,
    rng: np.random.Generator,
) -> list[tuple[Pose2, AssociationRealization, tuple[Measurement, ...]]]:
    """Sample x_k from the mixture, then propagate, associate and observe per step.

    The association at each step is the true one for the sampled state (each
    visible landmark is its own, nearest, class-consistent candidate).
    """
    _, x = sample_from_mixture(b_k, rng)
    out = []
    for u in u_seq:
        x, beta, z = _step(x, u, world, models, rng)
        out.append((x, beta, z))
    return out


def build_skeleton(
    b_k: MixtureBelief,
    shape: TreeShape,
    world: World,
    models: Models,
    rng: np.random.Generator,
) -> SkeletonNode:
    o = shape.observations_per_step
    root_states = tuple(sample_from_mixture(b_k, rng)[1] for _ in range(o))
    root = SkeletonNode(0, 0, None, 0, None, AssociationRealization(), (), 1, root_states=root_states)
    counter = [1]

    def grow(node: SkeletonNode) -> None:
        if node.depth == shape.horizon:
            return
        for s in range(o):
            stream_seed = int(rng.integers(0, 2**63 - 1))
            x0 = node.root_states[s] if node.depth == 0 else node.sampled_state
            for a, u in enumerate(shape.actions):
                g = np.random.default_rng(stream_seed)
                x, beta, z = _step(x0, u, world, models, g)
                child = SkeletonNode(
                    counter[0], node.depth + 1, a, s, x, beta, z, _count(world, x, z, models), parent=node
                )
                counter[0] += 1
                node.children.setdefault(a, []).append(child)
        for child in list(node.child_list()):
            grow(child)

    grow(root)
    return root


def build_explicit_tree(
    b_k: MixtureBelief,
    shape: TreeShape,
    budget: Optional[InferenceBudget],
    world: World,
    models: Models,
    rng: np.random.Generator,
    skeleton: Optional[SkeletonNode] = None,
) -> ExplicitNode:
    """Tree whose nodes hold the budget-limited posterior inference would produce.

    Observations are sampled from each parent's posterior (component by
    weight, then a pose from its Gaussian, then motion and sensing). When a
    ``skeleton`` is given its observations are reused instead, so both trees
    share the same sampled branches.
    """
    root_post = prune(b_k, budget).normalize() if budget is not None else b_k
    root = ExplicitNode(0, 0, None, 0, None, AssociationRealization(), (), root_post)
    counter = [1]
    o = shape.observations_per_step

    def update(post: MixtureBelief, u: Action, z):
        full = unnormalized_update(post, u, z, world, models.motion, models.obs, models.gate)
        if not any(h.weight > 0 for h in full.hypotheses):
            raise ContradictionError("sampled observation is inconsistent with every hypothesis")
        if budget is None:
            keep = tuple(range(len(full)))
        else:
            kept = prune(full, budget)
            ids = {id(h) for h in kept.hypotheses}
            keep = tuple(i for i, h in enumerate(full.hypotheses) if id(h) in ids)
        post = MixtureBelief(full.time_index, tuple(full.hypotheses[i] for i in keep)).normalize()
        return post, full, keep

    def grow(node: ExplicitNode, skel: Optional[SkeletonNode]) -> None:
        if node.depth == shape.horizon:
            return
        pairs = []
        for s in range(o):
            if skel is None:
                stream_seed = int(rng.integers(0, 2**63 - 1))
            for a, u in enumerate(shape.actions):
                if skel is None:
                    g = np.random.default_rng(stream_seed)
                    _, x0 = sample_from_mixture(node.posterior, g)
                    x, beta, z = _step(x0, u, world, models, g)
                    sk_child = None
                else:
                    sk_child = skel.children[a][s]
                    x, beta, z = sk_child.sampled_state, sk_child.sampled_association, sk_child.sampled_observation
                post, full, keep = update(node.posterior, u, z)
                child = ExplicitNode(
                    counter[0], node.depth + 1, a, s, x, beta, z, post, full, keep,
                    _count(world, x, z, models), parent=node,
                )
                counter[0] += 1
                node.children.setdefault(a, []).append(child)
                pairs.append((child, sk_child))
        for child, sk_child in sorted(pairs, key=lambda p: (p[0].action_index, p[0].sample_index)):
            grow(child, sk_child)

    grow(root, skeleton)
    return root


def dump_tree(root) -> str:
    """Depth-first text dump, one node per line (for golden-file comparisons)."""
    lines = []
    for n in iter_nodes(root):
        st = n.sampled_state
        state = "-" if st is None else f"{st.x!r},{st.y!r},{st.theta!r}"
        beta = ",".join(str(i) for i in n.sampled_association.assignments)
        z = ";".join(f"{m.landmark_class}:{m.range!r}" for m in n.sampled_observation)
        extra = ""
        if isinstance(n, ExplicitNode):
            extra = f" n_post={len(n.posterior)}"
        lines.append(
            f"{n.id} d={n.depth} a={n.action_index} s={n.sample_index} D={n.realization_count} "
            f"x={state} beta={beta} z={z}{extra}"
        )
    return "\n".join(lines) + "\n"
