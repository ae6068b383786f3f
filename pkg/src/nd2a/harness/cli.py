"""Command line entry point.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, apply_overrides, load_config

log = logging.getLogger("nd2a")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nd2a", description="Belief-space planning with ambiguous data association.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment and write CSV (+ figures)")
    r.add_argument("--config", required=True, help="key = value config file")
    r.add_argument("--scenario")
    r.add_argument("--case")
    r.add_argument("--horizon", help="one value or a comma-separated sweep")
    r.add_argument("--budget", help="planning budget (case 2) or inference budget (cases 3-4); 'full' for none")
    r.add_argument("--seed")
    r.add_argument("--reps")
    r.add_argument("--out")
    r.add_argument("--no-figures", action="store_true")

    w = sub.add_parser("world", help="write a benchmark world to a text file")
    w.add_argument("--scenario", default="floors", choices=("floors", "random"))
    w.add_argument("--floors", type=int, default=4)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--unique-distance", type=float, default=4.2)
    w.add_argument("--out", required=True)

    s = sub.add_parser("selftest", help="run the quick invariant checks")
    s.add_argument("--out", help="write the check table here instead of stdout")
    s.add_argument("--seed", type=int, default=0)
    return p


def _run(args) -> int:
    from .plotting import render_figures
    from .runner import emit_csv, run

    cfg = load_config(args.config)
    overrides = {"scenario": args.scenario, "case": args.case, "horizon": args.horizon,
                 "seed": args.seed, "reps": args.reps, "out": args.out}
    if args.budget is not None:
        case = int(args.case) if args.case is not None else cfg.case
        overrides["planning_budget" if case == 2 else "inference_budget"] = args.budget
    cfg = apply_overrides(cfg, overrides)
    if args.no_figures:
        cfg = apply_overrides(cfg, {"figures": "false"})
    cfg.validate()
    rows = run(cfg)
    out = Path(cfg.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    emit_csv(rows, out)
    log.info("wrote %d rows to %s", len(rows), out)
    if cfg.figures:
        for path in render_figures(rows, out):
            log.info("wrote %s", path)
    return 0


def _world(args) -> int:
    from ..env import build_floors, build_random

    if args.scenario == "floors":
        world, _ = build_floors(args.floors, seed=args.seed, unique_position=(args.unique_distance, 0.0))
    else:
        world, _ = build_random(args.seed)
    world.save(args.out)
    return 0


def _selftest(args) -> int:
    from .selftest import run_selftest

    ok, text = run_selftest(args.seed)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "world":
            return _world(args)
        return _selftest(args)
    except ConfigError as exc:
        print(f"nd2a: config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        if args.command == "world":
            print(f"nd2a: {exc}", file=sys.stderr)
            return 1
        print(f"nd2a: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"nd2a: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
