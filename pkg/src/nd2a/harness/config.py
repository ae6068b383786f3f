"""Experiment configuration: flat ``key = value`` files plus CLI overrides.

Lines starting with ``#`` are comments. A few keys accept comma-separated
lists and are swept (``horizon``, ``num_floors``, ``planning_budget``,
``inference_budget``); ``full`` in a budget list means no budget.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

SWEEP_KEYS = ("horizon", "num_floors", "planning_budget", "inference_budget")


class ConfigError(ValueError):
    """Invalid configuration (maps to exit code 1)."""


@dataclass
class ExperimentConfig:
    scenario: str = "floors"
    mode: str = "plan"
    case: int = 1
    # floors
    num_floors: tuple = (4,)
    landmarks_per_floor: int = 3
    floor_classes: Optional[int] = None
    unique_distance: float = 4.2
    # 2d_random
    num_landmarks: int = 12
    num_classes: int = 4
    extent: float = 20.0
    anchor_copies: int = 4
    world_seed: Optional[int] = None
    # noise and sensing
    prior_std_xy: float = 0.05
    prior_std_theta: float = 0.02
    motion_std_xy: float = 0.02
    motion_std_theta: float = 0.005
    range_noise_std: float = 0.1
    max_sensing_range: float = 3.5
    gate: float = 0.5
    # tree and planning
    horizon: tuple = (3,)
    actions: tuple = ()
    observations_per_step: int = 1
    planning_budget: tuple = (None,)
    inference_budget: tuple = (None,)
    heuristic: str = "greedy-prior-weight"
    pruning_heuristic: str = "keep-highest-weight"
    rule: str = "no-overlap"
    time_limit: float = 1.0
    max_level: Optional[int] = None
    baseline: bool = True
    # closed loop
    entropy_threshold: float = 0.1
    max_steps: int = 10
    # run
    seed: int = 0
    reps: int = 1
    timing: bool = False
    figures: bool = True
    out: str = "results.csv"

    def validate(self) -> "ExperimentConfig":
        if self.scenario not in ("floors", "random"):
            raise ConfigError(f"unknown scenario {self.scenario!r} (floors|random)")
        if self.mode not in ("plan", "closed_loop"):
            raise ConfigError(f"unknown mode {self.mode!r} (plan|closed_loop)")
        if self.case not in (1, 2, 3, 4):
            raise ConfigError("case must be 1, 2, 3 or 4")
        if self.mode == "closed_loop" and self.case == 4:
            raise ConfigError("closed loop runs cases 1-3 only")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if any(h < 1 for h in self.horizon):
            raise ConfigError("horizon must be >= 1")
        if self.scenario == "floors" and any(f < 2 for f in self.num_floors):
            raise ConfigError("num_floors must be >= 2")
        if self.observations_per_step < 1:
            raise ConfigError("observations_per_step must be >= 1")
        if self.case == 2 and self.planning_budget == (None,):
            raise ConfigError("case 2 needs planning_budget")
        if self.case == 4 and None in self.inference_budget:
            raise ConfigError("case 4 needs a finite inference_budget")
        for b in self.planning_budget + self.inference_budget:
            if b is not None and b < 1:
                raise ConfigError("budgets must be >= 1 or 'full'")
        # resolve names early so typos surface as validation errors
        from ..belief import PRUNING_HEURISTICS
        from ..env import action_set
        from ..planner import DecisionRule, SimplificationHeuristic

        try:
            SimplificationHeuristic(self.heuristic)
            if self.rule == "max-level":
                DecisionRule(self.rule, max_level=self.max_level)
            elif self.rule == "time-budget":
                DecisionRule(self.rule, time_limit=self.time_limit)
            else:
                DecisionRule(self.rule)
            if self.actions:
                action_set(self.actions)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.pruning_heuristic not in PRUNING_HEURISTICS:
            raise ConfigError(f"unknown pruning heuristic {self.pruning_heuristic!r}")
        return self


def _parse_budget(tok: str):
    tok = tok.strip().lower()
    if tok in ("full", "none", "inf", ""):
        return None
    return int(tok)


def _convert(name: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if name not in fields:
        raise ConfigError(f"unknown config key {name!r}")
    raw = raw.strip()
    default = fields[name].default
    try:
        if name in ("planning_budget", "inference_budget"):
            return tuple(_parse_budget(t) for t in raw.split(","))
        if name in ("horizon", "num_floors"):
            return tuple(int(t) for t in raw.split(","))
        if name == "actions":
            return tuple(t.strip() for t in raw.split(",") if t.strip())
        if name in ("floor_classes", "world_seed", "max_level"):
            return None if raw.lower() in ("", "none") else int(raw)
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        values[key.strip()] = _convert(key.strip(), raw)
    cfg = base or ExperimentConfig()
    return dataclasses.replace(cfg, **values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply ``key -> raw string`` overrides (None values are skipped)."""
    values = {k: _convert(k, str(v)) for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **values)


def describe(cfg: ExperimentConfig) -> str:
    """The config as ``key = value`` lines (round-trips through parse_config)."""
    out = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join("full" if x is None else str(x) for x in v)
        elif v is None:
            v = "none"
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"
