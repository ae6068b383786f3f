"""Figures rendered next to the CSV, one PNG per view present in the rows."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402


def _save(fig, path: Path, integer_x: bool = True) -> Path:
    if integer_x:
        for ax in fig.axes:
            ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _median_by(rows, key, value):
    groups = defaultdict(list)
    for r in rows:
        v = value(r)
        if v is not None:
            groups[key(r)].append(v)
    xs = sorted(groups)
    return xs, [float(np.median(groups[x])) for x in xs]


def _mean_by(rows, key, value):
    groups = defaultdict(list)
    for r in rows:
        groups[key(r)].append(value(r))
    return groups


def _budget_key(label: str) -> float:
    return float("inf") if label == "full" else float(label)


def render_figures(rows, out_csv) -> list[Path]:
    """Write whichever figures the rows support; returns the written paths."""
    out_csv = Path(out_csv)
    stem = out_csv.with_suffix("")
    written = []
    plan = [r for r in rows if r.mode == "plan"]
    bound_rows = [r for r in plan if r.case in ("1", "2", "3")]
    base_rows = [r for r in plan if r.case == "baseline"]

    # planning time (or updates when timing is off) against horizon and prior size
    for xname, xkey in (("horizon", lambda r: r.horizon), ("prior_hypotheses", lambda r: r.prior_hypotheses)):
        xs_seen = {xkey(r) for r in bound_rows}
        if len(xs_seen) < 2 or not base_rows:
            continue
        timed = all(r.wall_time_seconds is not None for r in bound_rows + base_rows)
        metric = (lambda r: r.wall_time_seconds) if timed else (lambda r: float(r.updates))
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for label, rs in (("bounds", bound_rows), ("full evaluation", base_rows)):
            xs, ys = _median_by(rs, xkey, metric)
            ax.plot(xs, ys, marker="o", label=label)
        ax.set_xlabel(xname.replace("_", " "))
        ax.set_ylabel("median wall time [s]" if timed else "median hypothesis updates")
        ax.legend()
        written.append(_save(fig, Path(f"{stem}_time_vs_{xname}.png")))

    # share of components materialized per depth
    c1 = [r for r in plan if r.case == "1" and r.components_used_per_level]
    if c1:
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for h, rs in sorted(_mean_by(c1, lambda r: r.horizon, lambda r: r.components_used_per_level).items()):
            arr = np.mean(np.array(rs, dtype=float), axis=0)
            ax.plot(np.arange(1, len(arr) + 1), 100 * arr, marker="o", label=f"horizon {h}")
        ax.set_xlabel("tree depth")
        ax.set_ylabel("% components used")
        ax.set_ylim(0, 105)
        ax.legend()
        written.append(_save(fig, Path(f"{stem}_components_per_level.png")))

    # normalized loss against planning budget, and loss along depth
    c2 = [r for r in plan if r.case == "2"]
    if c2:
        groups = _mean_by(c2, lambda r: r.budget, lambda r: r.normalized_loss)
        keys = sorted(groups, key=_budget_key)
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.plot(range(len(keys)), [np.mean(groups[k]) for k in keys], marker="o")
        ax.set_xticks(range(len(keys)), keys)
        ax.set_xlabel("planning budget C")
        ax.set_ylabel("mean normalized loss")
        written.append(_save(fig, Path(f"{stem}_loss_vs_budget.png"), integer_x=False))

        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for k in keys:
            rs = [r.per_depth_overlap for r in c2 if r.budget == k and r.per_depth_overlap]
            if rs:
                # horizons may differ, so average each depth over the rows that reach it
                depth = max(len(v) for v in rs)
                arr = [np.mean([v[d] for v in rs if len(v) > d]) for d in range(depth)]
                ax.plot(np.arange(1, depth + 1), arr, marker="o", label=f"C={k}")
        ax.set_xlabel("decision depth (1 = root)")
        ax.set_ylabel("mean interval overlap")
        ax.legend(fontsize=7)
        written.append(_save(fig, Path(f"{stem}_loss_vs_depth.png")))

    c4 = [r for r in plan if r.case == "4"]
    if c4:
        keys = sorted({r.budget for r in c4}, key=_budget_key)
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for name, attr in (("h_inf", "loss_h_inf"), ("h_p*", "loss_h_p_star")):
            ys = [np.mean([getattr(r, attr) for r in c4 if r.budget == k]) for k in keys]
            ax.plot(range(len(keys)), ys, marker="o", label=name)
        ax.set_xticks(range(len(keys)), keys)
        ax.set_xlabel("inference budget C")
        ax.set_ylabel("mean loss bound")
        ax.legend()
        written.append(_save(fig, Path(f"{stem}_case4_loss.png"), integer_x=False))

    loop = [r for r in rows if r.mode == "closed_loop"]
    if loop:
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for seed, rs in sorted(_mean_by(loop, lambda r: r.seed, lambda r: r).items()):
            rs = sorted(rs, key=lambda r: r.session)
            ax.plot([r.session for r in rs], [r.entropy for r in rs], marker=".", alpha=0.7)
        ax.axhline(loop[0].entropy_threshold, color="k", ls="--", lw=0.8)
        ax.set_xlabel("planning session")
        ax.set_ylabel("posterior entropy [nats]")
        written.append(_save(fig, Path(f"{stem}_closed_loop_entropy.png")))
    return written
