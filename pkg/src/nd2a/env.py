"""Benchmark worlds with perceptually aliased landmarks.

Two scenarios are provided: ``floors`` (identical stacked floors, each with one
floor-specific landmark) and ``2d_random`` (scattered landmarks where the agent
starts in front of one of several identical anchor landmarks).
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np

from .models import (
    Action,
    Measurement,
    MotionModel,
    ObservationModel,
    Pose2,
    propagate,
)


@dataclass(frozen=True)
class Landmark:
    id: int
    cls: Hashable
    position: tuple[float, float]


@dataclass(frozen=True, eq=False)
class World:
    landmarks: tuple[Landmark, ...]
    bounds: tuple[float, float, float, float]
    name: str = "world"
    _positions: np.ndarray = field(init=False, repr=False)
    _by_class: dict = field(init=False, repr=False)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        lms = tuple(sorted(self.landmarks, key=lambda lm: lm.id))
        ids = [lm.id for lm in lms]
        if len(set(ids)) != len(ids):
            raise ValueError("landmark ids must be unique")
        object.__setattr__(self, "landmarks", lms)
        pos = np.array([lm.position for lm in lms], dtype=float).reshape(-1, 2)
        pos.setflags(write=False)
        object.__setattr__(self, "_positions", pos)
        by_class = defaultdict(list)
        for i, lm in enumerate(lms):
            by_class[lm.cls].append(i)
        object.__setattr__(self, "_by_class", {c: tuple(v) for c, v in by_class.items()})
        object.__setattr__(self, "_index", {lm.id: i for i, lm in enumerate(lms)})

    def __eq__(self, other):
        return isinstance(other, World) and self.landmarks == other.landmarks and self.bounds == other.bounds

    def __hash__(self):
        return hash((self.landmarks, self.bounds))

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    def class_indices(self, cls: Hashable) -> tuple[int, ...]:
        return self._by_class.get(cls, ())

    def is_ambiguous(self) -> bool:
        return any(len(v) > 1 for v in self._by_class.values())

    def landmark(self, lm_id: int) -> Landmark:
        return self.landmarks[self._index[lm_id]]

    def index_of(self, lm_id: int) -> int:
        return self._index[lm_id]

    def to_text(self) -> str:
        lines = [
            f"# world {self.name}",
            "# bounds " + " ".join(repr(float(b)) for b in self.bounds),
            "# id class x y",
        ]
        for lm in self.landmarks:
            lines.append(f"{lm.id} {lm.cls} {lm.position[0]!r} {lm.position[1]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "World":
        name, bounds, lms = "world", (0.0, 0.0, 0.0, 0.0), []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("# world "):
                name = line[len("# world "):]
            elif line.startswith("# bounds "):
                bounds = tuple(float(v) for v in line.split()[2:6])
            elif line.startswith("#"):
                continue
            else:
                lm_id, lm_cls, x, y = line.split()
                lms.append(Landmark(int(lm_id), lm_cls, (float(x), float(y))))
        return cls(tuple(lms), bounds, name)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "World":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class AssociationRealization:
    """Landmark id assigned to each measurement, in measurement order."""

    assignments: tuple[int, ...] = ()

    def __len__(self):
        return len(self.assignments)


def _check_ambiguous(world: World) -> World:
    if not world.is_ambiguous():
        raise ValueError("world has no aliased landmarks")
    return world


def build_floors(
    num_floors: int,
    landmarks_per_floor: int = 3,
    seed: int = 0,
    *,
    floor_classes: Optional[int] = None,
    floor_offset: float = 100.0,
    layout_extent: float = 3.0,
    unique_position: tuple[float, float] = (4.2, 0.0),
) -> tuple[World, list[Pose2]]:
    """Stack ``num_floors`` copies of one seeded floor layout.

    Shared landmarks use classes ``c0..`` (``floor_classes`` distinct ones, so
    fewer classes than landmarks gives within-floor aliasing too); every floor
    also carries one landmark of class ``u<floor>`` at ``unique_position``.
    Floors are offset along +y by ``floor_offset``; prior modes are the start
    pose (origin, facing +x) on every floor.
    """
    if num_floors < 2:
        raise ValueError("num_floors must be >= 2")
    if landmarks_per_floor < 1:
        raise ValueError("landmarks_per_floor must be >= 1")
    n_cls = landmarks_per_floor if floor_classes is None else floor_classes
    if not 1 <= n_cls <= landmarks_per_floor:
        raise ValueError("floor_classes must lie in [1, landmarks_per_floor]")

    rng = np.random.default_rng(seed)
    layout = []
    while len(layout) < landmarks_per_floor:
        p = rng.uniform(-layout_extent, layout_extent, size=2)
        too_close = np.hypot(*p) < 0.75 or any(np.hypot(*(p - q)) < 0.5 for q in layout)
        if not too_close and np.hypot(*(p - np.asarray(unique_position))) > 0.5:
            layout.append(p)

    stride = landmarks_per_floor + 1
    landmarks = []
    for f in range(num_floors):
        oy = f * floor_offset
        for j, p in enumerate(layout):
            landmarks.append(Landmark(f * stride + j, f"c{j % n_cls}", (float(p[0]), float(p[1] + oy))))
        ux, uy = unique_position
        landmarks.append(Landmark(f * stride + landmarks_per_floor, f"u{f}", (float(ux), float(uy + oy))))

    lo = -layout_extent - 1.0
    bounds = (lo, lo, max(layout_extent, unique_position[0]) + 1.0, (num_floors - 1) * floor_offset + layout_extent + 1.0)
    world = _check_ambiguous(World(tuple(landmarks), bounds, f"floors-{num_floors}"))
    priors = [Pose2(0.0, f * floor_offset, 0.0) for f in range(num_floors)]
    return world, priors


def build_random(
    seed: int = 0,
    num_landmarks: int = 12,
    num_classes: int = 4,
    extent: float = 20.0,
    *,
    anchor_copies: int = 4,
    standoff: float = 1.5,
    min_separation: float = 1.0,
) -> tuple[World, list[Pose2]]:
    """Scatter landmarks uniformly; class ``k0`` is the repeated anchor class.

    One prior mode is placed ``standoff`` metres in front of every anchor
    landmark, facing it.
    """
    if num_classes < 1 or num_classes > num_landmarks:
        raise ValueError("need 1 <= num_classes <= num_landmarks")
    if not 2 <= anchor_copies <= num_landmarks:
        raise ValueError("anchor_copies must lie in [2, num_landmarks]")
    if num_classes > 1 and num_landmarks - anchor_copies < num_classes - 1:
        raise ValueError("not enough landmarks for the requested classes")

    rng = np.random.default_rng(seed)
    pts: list[np.ndarray] = []
    tries = 0
    while len(pts) < num_landmarks:
        tries += 1
        if tries > 100_000:
            raise ValueError("cannot place landmarks with the requested separation")
        p = rng.uniform(0.0, extent, size=2)
        if all(np.hypot(*(p - q)) >= min_separation for q in pts):
            pts.append(p)

    others = [f"k{c}" for c in range(1, num_classes)]
    classes = ["k0"] * anchor_copies
    if others:
        rest = num_landmarks - anchor_copies
        # every non-anchor class appears at least once
        fill = list(others) + [others[i] for i in rng.integers(0, len(others), size=rest - len(others))]
        rng.shuffle(fill)
        classes += fill
    else:
        classes += ["k0"] * (num_landmarks - anchor_copies)

    landmarks = tuple(
        Landmark(i, classes[i], (float(p[0]), float(p[1]))) for i, p in enumerate(pts)
    )
    world = _check_ambiguous(World(landmarks, (0.0, 0.0, extent, extent), f"random-{seed}"))
    priors = []
    for lm in landmarks:
        if lm.cls != "k0":
            continue
        phi = float(rng.uniform(-math.pi, math.pi))
        priors.append(
            Pose2(lm.position[0] - standoff * math.cos(phi), lm.position[1] - standoff * math.sin(phi), phi)
        )
    return world, priors


def _in_range_indices(world: World, x: Pose2, radius: float) -> np.ndarray:
    if not world.landmarks:
        return np.zeros(0, dtype=int)
    d = np.hypot(world.positions[:, 0] - x.x, world.positions[:, 1] - x.y)
    return np.nonzero(d <= radius)[0]


def visible_landmarks(world: World, x: Pose2, obs: ObservationModel, margin: float = 0.0) -> list[Landmark]:
    """Landmarks within sensing range (plus ``margin``), sorted by id."""
    return [world.landmarks[i] for i in _in_range_indices(world, x, obs.max_sensing_range + margin)]


def association_candidates(
    world: World,
    x: Pose2,
    measured_classes: Sequence[Hashable],
    obs: ObservationModel,
    margin: float = 0.0,
) -> list[list[int]]:
    """Per measurement, ids of in-range landmarks with a matching class."""
    radius = obs.max_sensing_range + margin
    in_range = set(_in_range_indices(world, x, radius).tolist())
    out = []
    for cls in measured_classes:
        out.append([world.landmarks[i].id for i in world.class_indices(cls) if i in in_range])
    return out


def count_associations(
    world: World,
    x: Pose2,
    measured_classes: Sequence[Hashable],
    obs: ObservationModel,
    margin: float = 0.0,
) -> int:
    n = 1
    for cands in association_candidates(world, x, measured_classes, obs, margin):
        n *= len(cands)
    return n


def enumerate_associations(
    world: World,
    x: Pose2,
    measured_classes: Sequence[Hashable],
    obs: ObservationModel,
    margin: float = 0.0,
) -> list[AssociationRealization]:
    """Cartesian product of class-consistent in-range candidates, lexicographic by id.

    A measurement with no candidate yields an empty list (impossible observation).
    """
    cands = association_candidates(world, x, measured_classes, obs, margin)
    return [AssociationRealization(tuple(p)) for p in itertools.product(*cands)]


def observe(
    world: World,
    x: Pose2,
    obs: ObservationModel,
    rng: Optional[np.random.Generator] = None,
) -> tuple[list[Measurement], AssociationRealization]:
    """One range per visible landmark (sorted by id), with the true association."""
    meas, ids = [], []
    for i in _in_range_indices(world, x, obs.max_sensing_range):
        lm = world.landmarks[i]
        r = math.hypot(lm.position[0] - x.x, lm.position[1] - x.y)
        if rng is not None:
            r += obs.range_noise_std * rng.standard_normal()
        meas.append(Measurement(max(r, 0.0), lm.cls))
        ids.append(lm.id)
    return meas, AssociationRealization(tuple(ids))


def simulate_step(
    world: World,
    x_true: Pose2,
    u: Action,
    rng: np.random.Generator,
    motion: MotionModel,
    obs: ObservationModel,
    noise: bool = True,
) -> tuple[Pose2, list[Measurement]]:
    """Ground-truth rollout: noisy motion, then one noisy range per visible landmark."""
    w = motion.sample_noise(rng) if noise else None
    x_next = propagate(x_true, u, w)
    meas, _ = observe(world, x_next, obs, rng if noise else None)
    return x_next, meas


def floors_actions() -> list[Action]:
    return [Action(1.0, 0.0, 0.0, "fwd"), Action(0.0, 1.0, 0.0, "up"), Action(0.0, -1.0, 0.0, "down")]


def random_actions() -> list[Action]:
    return [
        Action(1.0, 0.0, 0.0, "fwd"),
        Action(0.0, 1.0, math.pi / 2, "left"),
        Action(0.0, -1.0, -math.pi / 2, "right"),
    ]


def action_set(names: Iterable[str]) -> list[Action]:
    table = {a.name: a for a in floors_actions() + random_actions()}
    table["back"] = Action(-1.0, 0.0, 0.0, "back")
    try:
        return [table[n] for n in names]
    except KeyError as exc:
        raise ValueError(f"unknown action primitive {exc.args[0]!r}") from None
