"""Run configured experiments and write one CSV row per (setting, repetition)."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..belief import InferenceBudget, MixtureBelief, budgeted_update, full_update, prior_belief
from ..bounds import entropy
from ..env import action_set, build_floors, build_random, floors_actions, random_actions, simulate_step
from ..models import Models, MotionModel, ObservationModel, Pose2
from ..planner import (
    DecisionRule,
    PlanningBudget,
    SimplificationHeuristic,
    baseline_full_evaluation,
    plan_case1,
    plan_case2,
    plan_case3,
    regret,
)
from ..planner.case4 import plan_case4
from ..tree import TreeShape, build_skeleton
from .config import ExperimentConfig

COLUMNS = (
    "scenario",
    "case",
    "seed",
    "horizon",
    "prior_hypotheses",
    "budget",
    "wall_time_seconds",
    "loss_bound",
    "normalized_loss",
    "selected_sequence",
    "components_used_per_level",
    "node_count",
    # self-description and paired-oracle columns
    "mode",
    "session",
    "heuristic",
    "rule",
    "planning_budget",
    "inference_budget",
    "updates",
    "regret",
    "per_depth_overlap",
    "loss_h_inf",
    "loss_h_p_star",
    "entropy",
    "entropy_threshold",
)


@dataclass
class ResultRow:
    scenario: str
    case: str
    seed: int
    horizon: int
    prior_hypotheses: int
    budget: str
    wall_time_seconds: Optional[float]
    loss_bound: float
    normalized_loss: float
    selected_sequence: str
    components_used_per_level: list
    node_count: int
    mode: str = "plan"
    session: int = 0
    heuristic: str = ""
    rule: str = ""
    planning_budget: str = "full"
    inference_budget: str = "full"
    updates: int = 0
    regret: Optional[float] = None
    per_depth_overlap: list = field(default_factory=list)
    loss_h_inf: Optional[float] = None
    loss_h_p_star: Optional[float] = None
    entropy: Optional[float] = None
    entropy_threshold: Optional[float] = None


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == 0:
            return "0"
        return f"{v:.9g}"
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def emit_csv(rows, path) -> None:
    """Header plus one line per row; floats with 9 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])


_INT = {"seed", "horizon", "prior_hypotheses", "node_count", "session", "updates"}
_FLOAT = {"wall_time_seconds", "loss_bound", "normalized_loss", "regret", "loss_h_inf", "loss_h_p_star",
          "entropy", "entropy_threshold"}
_LIST = {"components_used_per_level", "per_depth_overlap"}


def read_csv(path) -> list[ResultRow]:
    """Inverse of :func:`emit_csv`."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            vals = {}
            for k, v in rec.items():
                if v == "NA":
                    vals[k] = None
                elif k in _INT:
                    vals[k] = int(v)
                elif k in _FLOAT:
                    vals[k] = float(v)
                elif k in _LIST:
                    vals[k] = [float(x) for x in v.split(";")] if v else []
                else:
                    vals[k] = v
            out.append(ResultRow(**vals))
    return out


# ------------------------------------------------------------------ setup


def _budget_label(b) -> str:
    return "full" if b is None else str(b)


def make_models(cfg: ExperimentConfig) -> Models:
    motion = MotionModel(np.diag([cfg.motion_std_xy**2, cfg.motion_std_xy**2, cfg.motion_std_theta**2]))
    obs = ObservationModel(cfg.range_noise_std, cfg.max_sensing_range)
    return Models(motion, obs, cfg.gate)


def make_world(cfg: ExperimentConfig, num_floors: int, rep_seed: int):
    if cfg.scenario == "floors":
        world, priors = build_floors(
            num_floors,
            cfg.landmarks_per_floor,
            seed=cfg.world_seed if cfg.world_seed is not None else 0,
            floor_classes=cfg.floor_classes,
            unique_position=(cfg.unique_distance, 0.0),
        )
        actions = floors_actions()
    else:
        world, priors = build_random(
            cfg.world_seed if cfg.world_seed is not None else rep_seed,
            cfg.num_landmarks,
            cfg.num_classes,
            cfg.extent,
            anchor_copies=cfg.anchor_copies,
        )
        actions = random_actions()
    if cfg.actions:
        actions = action_set(cfg.actions)
    return world, priors, actions


def make_prior(cfg: ExperimentConfig, priors) -> MixtureBelief:
    cov = np.diag([cfg.prior_std_xy**2, cfg.prior_std_xy**2, cfg.prior_std_theta**2])
    return prior_belief(priors, cov)


def rep_seeds(seed: int, reps: int) -> list[int]:
    """Independent per-repetition seeds derived from the master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(reps)]


def _rule(cfg: ExperimentConfig) -> DecisionRule:
    if cfg.rule == "time-budget":
        return DecisionRule("time-budget", time_limit=cfg.time_limit)
    if cfg.rule == "max-level":
        return DecisionRule("max-level", max_level=cfg.max_level)
    return DecisionRule(cfg.rule)


def _seq(report, actions) -> str:
    return "-".join(actions[i].label() for i in report.selected_indices)


def _settings(cfg: ExperimentConfig):
    floors = cfg.num_floors if cfg.scenario == "floors" else (0,)
    return list(itertools.product(floors, cfg.horizon, cfg.planning_budget, cfg.inference_budget))


# ------------------------------------------------------------------- runs


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Every (sweep setting, repetition); Cases 1-2 come paired with baseline rows."""
    cfg.validate()
    models = make_models(cfg)
    h = SimplificationHeuristic(cfg.heuristic)
    R = _rule(cfg)
    rows = []
    seeds = rep_seeds(cfg.seed, cfg.reps)
    for floors, horizon, pb, ib in _settings(cfg):
        for rs in seeds:
            world, priors, actions = make_world(cfg, floors, rs)
            b = make_prior(cfg, priors)
            shape = TreeShape(tuple(actions), horizon, cfg.observations_per_step)
            rng = np.random.default_rng(rs)
            skeleton = build_skeleton(b, shape, world, models, rng)
            common = dict(
                scenario=cfg.scenario, seed=rs, horizon=horizon, prior_hypotheses=len(b),
                heuristic=cfg.heuristic, rule=cfg.rule, planning_budget=_budget_label(pb),
                inference_budget=_budget_label(ib),
            )
            if cfg.case in (1, 2):
                if cfg.case == 1:
                    rep = plan_case1(b, shape, h, world, models, skeleton=skeleton, R=R)
                else:
                    rep = plan_case2(b, shape, h, PlanningBudget(pb), world, models, skeleton=skeleton, R=R)
                rg = None
                if cfg.baseline:
                    base = baseline_full_evaluation(b, shape, world, models, skeleton=skeleton)
                    rg = max(0.0, regret(base.extra["table"], skeleton, rep.policy))
                rows.append(_row(cfg, rep, actions, common, str(cfg.case), _budget_label(pb), regret=rg))
                if cfg.baseline:
                    rows.append(_row(cfg, base, actions, common, "baseline", "full", regret=0.0))
            elif cfg.case == 3:
                budget = InferenceBudget(ib if ib is not None else 10**9, cfg.pruning_heuristic)
                rep = plan_case3(b, shape, h, budget, world, models, rng=rng, R=R)
                rows.append(_row(cfg, rep, actions, common, "3", _budget_label(ib)))
            else:
                rep, desc = plan_case4(b, shape, ib, world, models, skeleton=skeleton)
                rows.append(
                    _row(cfg, rep, actions, common, "4", _budget_label(ib),
                         loss_h_inf=rep.extra["loss_h_inf"], loss_h_p_star=rep.extra["loss_h_p_star"])
                )
    return rows


def _row(cfg, rep, actions, common, case, budget, **extra) -> ResultRow:
    return ResultRow(
        case=case,
        budget=budget,
        wall_time_seconds=rep.wall_time if cfg.timing else None,
        loss_bound=float(rep.loss_bound),
        normalized_loss=float(rep.normalized_loss),
        selected_sequence=_seq(rep, actions),
        components_used_per_level=[float(x) for x in rep.per_level_component_usage],
        node_count=rep.node_count,
        mode=cfg.mode,
        updates=rep.updates,
        per_depth_overlap=[float(x) for x in rep.per_depth_overlap],
        **common,
        **extra,
    )


def _sample_truth(b: MixtureBelief, rng: np.random.Generator) -> Pose2:
    j = int(rng.integers(len(b)))
    hyp = b.hypotheses[j]
    return Pose2.from_array(rng.multivariate_normal(hyp.mean.as_array(), hyp.covariance, method="cholesky"))


def run_closed_loop(cfg: ExperimentConfig) -> list[ResultRow]:
    """Plan, execute the first action on the ground truth, update; repeat.

    Stops once the posterior entropy drops below ``entropy_threshold`` or
    after ``max_steps`` sessions. One row per planning session; the
    ``entropy`` column is the posterior entropy after executing the action.
    """
    cfg.validate()
    if cfg.case not in (1, 2, 3):
        raise ValueError("closed loop runs cases 1-3 only")
    models = make_models(cfg)
    h = SimplificationHeuristic(cfg.heuristic)
    R = _rule(cfg)
    rows = []
    for floors, horizon, pb, ib in _settings(cfg):
        for rs in rep_seeds(cfg.seed, cfg.reps):
            world, priors, actions = make_world(cfg, floors, rs)
            b = make_prior(cfg, priors)
            shape = TreeShape(tuple(actions), horizon, cfg.observations_per_step)
            rng = np.random.default_rng(rs)
            x_true = _sample_truth(b, rng)
            inf_budget = InferenceBudget(ib, cfg.pruning_heuristic) if ib is not None else None
            for session in range(cfg.max_steps):
                if cfg.case == 1:
                    rep = plan_case1(b, shape, h, world, models, rng=rng, R=R)
                elif cfg.case == 2:
                    rep = plan_case2(b, shape, h, PlanningBudget(pb), world, models, rng=rng, R=R)
                else:
                    rep = plan_case3(b, shape, h, inf_budget or InferenceBudget(10**9), world, models, rng=rng, R=R)
                u = actions[rep.selected_indices[0]]
                x_true, z = simulate_step(world, x_true, u, rng, models.motion, models.obs)
                if inf_budget is not None:
                    b = budgeted_update(b, u, z, world, models.motion, models.obs, inf_budget, models.gate)
                else:
                    b = full_update(b, u, z, world, models.motion, models.obs, models.gate)
                H = entropy(b.weights)
                common = dict(
                    scenario=cfg.scenario, seed=rs, horizon=horizon, prior_hypotheses=len(priors),
                    heuristic=cfg.heuristic, rule=cfg.rule, planning_budget=_budget_label(pb),
                    inference_budget=_budget_label(ib),
                )
                row = _row(cfg, rep, actions, common, str(cfg.case), _budget_label(pb if cfg.case == 2 else ib))
                row.session = session
                row.entropy = H
                row.entropy_threshold = cfg.entropy_threshold
                row.selected_sequence = u.label()
                rows.append(row)
                if H < cfg.entropy_threshold:
                    break
    return rows


def run(cfg: ExperimentConfig) -> list[ResultRow]:
    return run_closed_loop(cfg) if cfg.mode == "closed_loop" else run_experiment(cfg)
