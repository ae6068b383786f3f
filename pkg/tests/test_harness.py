import dataclasses

import pytest

from nd2a.harness import cli
from nd2a.harness.config import ConfigError, ExperimentConfig, apply_overrides, describe, parse_config
from nd2a.harness.runner import COLUMNS, ResultRow, emit_csv, read_csv, rep_seeds, run, run_closed_loop, run_experiment


def cfg_of(**kw):
    return dataclasses.replace(ExperimentConfig(), **kw).validate()


def test_parse_config_and_sweeps():
    cfg = parse_config("""
        # comment
        scenario = floors
        case = 2
        horizon = 1, 2
        planning_budget = 1,4,full
        num_floors = 3
    """)
    assert cfg.case == 2 and cfg.horizon == (1, 2)
    assert cfg.planning_budget == (1, 4, None)
    assert cfg.num_floors == (3,)


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_config("nonsense = 3")
    with pytest.raises(ConfigError):
        parse_config("horizon = two")
    with pytest.raises(ConfigError):
        parse_config("no equals sign")
    with pytest.raises(ConfigError):
        parse_config("case = 2").validate()
    with pytest.raises(ConfigError):
        parse_config("heuristic = clever").validate()
    with pytest.raises(ConfigError):
        parse_config("reps = 0").validate()
    with pytest.raises(ConfigError):
        parse_config("case = 4").validate()


def test_describe_round_trip():
    cfg = parse_config("case = 4\ninference_budget = 1,2\nhorizon = 2\nfloor_classes = 2")
    assert parse_config(describe(cfg)) == cfg


def test_overrides():
    cfg = apply_overrides(ExperimentConfig(), {"horizon": "1,3", "seed": "7", "out": None})
    assert cfg.horizon == (1, 3) and cfg.seed == 7 and cfg.out == "results.csv"


def test_rep_seeds_distinct_and_stable():
    s = rep_seeds(3, 5)
    assert len(set(s)) == 5 and s == rep_seeds(3, 5)


def test_emit_csv_header_only(tmp_path):
    path = tmp_path / "x.csv"
    emit_csv([], path)
    assert path.read_text() == ",".join(COLUMNS) + "\n"


def test_csv_round_trip(tmp_path):
    rows = run_experiment(cfg_of(case=2, num_floors=(3,), horizon=(1,), planning_budget=(1, None), reps=2))
    path = tmp_path / "r.csv"
    emit_csv(rows, path)
    back = read_csv(path)
    emit_csv(back, tmp_path / "r2.csv")
    assert (tmp_path / "r2.csv").read_text() == path.read_text()
    assert back[0].components_used_per_level == pytest.approx(rows[0].components_used_per_level, rel=1e-8)
    line = path.read_text().splitlines()[1]
    assert ";" not in line or line.count(",") == len(COLUMNS) - 1


def test_baseline_rows_are_paired():
    rows = run_experiment(cfg_of(case=1, num_floors=(3,), horizon=(1, 2), reps=2))
    assert len(rows) == 2 * 2 * 2
    for bound, base in zip(rows[::2], rows[1::2]):
        assert bound.case == "1" and base.case == "baseline"
        assert (bound.seed, bound.horizon) == (base.seed, base.horizon)
        assert bound.selected_sequence == base.selected_sequence
        assert bound.regret == 0.0
        assert bound.heuristic == "greedy-prior-weight" and bound.rule == "no-overlap"


def test_case3_and_case4_rows():
    rows = run_experiment(cfg_of(case=3, num_floors=(3,), horizon=(2,), inference_budget=(1, None)))
    assert [r.budget for r in rows] == ["1", "full"]
    rows = run_experiment(cfg_of(case=4, num_floors=(3,), horizon=(2,), inference_budget=(1, 3)))
    assert all(r.loss_h_p_star <= r.loss_h_inf + 1e-12 for r in rows)


def test_random_scenario_runs():
    rows = run_experiment(cfg_of(scenario="random", case=1, horizon=(1,), anchor_copies=3))
    assert rows[0].prior_hypotheses == 3 and rows[0].loss_bound == 0.0


def test_closed_loop_two_floors_disambiguates():
    cfg = cfg_of(mode="closed_loop", case=1, num_floors=(2,), horizon=(1,), max_steps=5,
                 motion_std_xy=1e-4, motion_std_theta=1e-5, range_noise_std=1e-3, reps=3)
    rows = run_closed_loop(cfg)
    by_seed = {}
    for r in rows:
        by_seed.setdefault(r.seed, []).append(r)
    for trace in by_seed.values():
        assert trace[-1].entropy < 1e-9
        assert len(trace) <= 2
        assert [r.session for r in trace] == list(range(len(trace)))


def test_closed_loop_deterministic():
    cfg = cfg_of(mode="closed_loop", case=2, planning_budget=(2,), num_floors=(3,), horizon=(2,), max_steps=3)
    assert run(cfg) == run(cfg)


def _write(tmp_path, text):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    return str(p)


def test_cli_run_writes_csv_and_figures(tmp_path):
    cfg = _write(tmp_path, "case = 1\nnum_floors = 3\nhorizon = 1,2\n")
    out = tmp_path / "out" / "res.csv"
    assert cli.main(["run", "--config", cfg, "--out", str(out), "--seed", "4"]) == 0
    rows = read_csv(out)
    assert {r.seed for r in rows} == set(rep_seeds(4, 1))
    assert (tmp_path / "out" / "res_time_vs_horizon.png").exists()
    assert (tmp_path / "out" / "res_components_per_level.png").exists()


def test_cli_case2_figures_mixed_horizons(tmp_path):
    # per-depth overlaps of different lengths share one figure
    cfg = _write(tmp_path, "case = 2\nplanning_budget = 1, full\nnum_floors = 3\nhorizon = 1, 2\n")
    out = tmp_path / "r.csv"
    assert cli.main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert (tmp_path / "r_loss_vs_depth.png").exists()
    assert (tmp_path / "r_loss_vs_budget.png").exists()


def test_cli_budget_override(tmp_path):
    cfg = _write(tmp_path, "case = 2\nplanning_budget = 1\nnum_floors = 3\nhorizon = 1\n")
    out = tmp_path / "r.csv"
    assert cli.main(["run", "--config", cfg, "--budget", "2", "--out", str(out), "--no-figures"]) == 0
    assert read_csv(out)[0].budget == "2"
    assert not list(tmp_path.glob("*.png"))


def test_cli_validation_errors(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 1
    cfg = _write(tmp_path, "case = 1\n")
    assert cli.main(["run", "--config", cfg, "--case", "9"]) == 1
    assert cli.main(["run", "--config", cfg, "--horizon", "x"]) == 1
    assert cli.main(["bogus"]) == 1
    assert cli.main(["world", "--floors", "1", "--out", str(tmp_path / "w.txt")]) == 1


def test_cli_runtime_error(tmp_path, monkeypatch):
    import nd2a.harness.runner as runner

    def boom(cfg):
        raise RuntimeError("kaput")

    monkeypatch.setattr(runner, "run", boom)
    cfg = _write(tmp_path, "case = 1\n")
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "r.csv")]) == 2


def test_cli_world_and_selftest(tmp_path, capsys):
    from nd2a.env import World

    out = tmp_path / "world.txt"
    assert cli.main(["world", "--scenario", "floors", "--floors", "4", "--out", str(out)]) == 0
    assert len(World.load(out).landmarks) == 16
    assert cli.main(["selftest"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("check,passed,value")
    assert all(line.split(",")[1] == "1" for line in text.strip().splitlines()[1:])


def test_timing_column_opt_in():
    rows = run_experiment(cfg_of(case=1, num_floors=(2,), horizon=(1,)))
    assert rows[0].wall_time_seconds is None
    rows = run_experiment(cfg_of(case=1, num_floors=(2,), horizon=(1,), timing=True))
    assert rows[0].wall_time_seconds > 0


def test_result_row_defaults():
    r = ResultRow("floors", "1", 0, 1, 2, "full", None, 0.0, 0.0, "fwd", [1.0], 4)
    assert r.mode == "plan" and r.regret is None
