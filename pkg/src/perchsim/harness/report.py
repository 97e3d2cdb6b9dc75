"""Figure rendering for trial and batch outputs.

Figures land next to the delimited output: a per-trial overview (top-down
and side trajectory views, thrust and pitch schedules) and a batch outcome
chart with binomial error bars.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .batch import MonteCarloSummary
from .scenario import ScenarioConfig
from .trial import TrialResult


def render_trial_figure(
    result: TrialResult, cfg: ScenarioConfig, out_dir: Union[str, Path]
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"trial_{result.scenario_hash[:8]}_{result.seed}.png"

    rows = result.trace
    if not rows:
        return path
    t = np.array([r[0] for r in rows])
    pos = np.array([r[1:4] for r in rows])
    thrust = np.array([r[7] for r in rows])
    pitch = np.degrees([r[8] for r in rows])

    fig, axes = plt.subplots(2, 2, figsize=(11, 7))
    fig.suptitle(
        f"seed {result.seed} | {result.outcome.value} | {result.duration:.1f} s", fontsize=11
    )

    ax = axes[0][0]
    ax.plot(pos[:, 0], pos[:, 1], "b-", lw=1)
    trunk = plt.Circle(cfg.tree_base[:2], cfg.tree_radius, color="saddlebrown")
    ax.add_patch(trunk)
    ax.plot(*cfg.start_position[:2], "g^", label="start")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("top-down")
    ax.axis("equal")
    ax.legend(loc="best", fontsize=8)

    ax = axes[0][1]
    ax.plot(pos[:, 0], pos[:, 2], "b-", lw=1)
    ax.axvspan(
        cfg.tree_base[0] - cfg.tree_radius, cfg.tree_base[0] + cfg.tree_radius,
        color="saddlebrown", alpha=0.6,
    )
    ax.set_xlabel("x [m]")
    ax.set_ylabel("z [m]")
    ax.set_title("side view")

    ax = axes[1][0]
    ax.plot(t, thrust, "r-", lw=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("thrust [N]")
    ax.set_title("collective thrust")

    ax = axes[1][1]
    ax.plot(t, pitch, "k-", lw=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("pivot pitch [deg]")
    ax.set_title("perched pivot angle")

    for row in axes:
        for a in row:
            a.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_batch_figure(summary: MonteCarloSummary, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"batch_{summary.scenario_hash[:8]}_{summary.seed_base}_{summary.n_trials}.png"

    names = sorted(summary.counts, key=lambda k: -summary.counts[k])
    rates = [summary.rates[k] for k in names]
    los = [summary.rates[k] - summary.intervals[k][0] for k in names]
    his = [summary.intervals[k][1] - summary.rates[k] for k in names]

    fig, ax = plt.subplots(figsize=(7, 4.2))
    x = np.arange(len(names))
    ax.bar(x, rates, color="steelblue")
    ax.errorbar(x, rates, yerr=[los, his], fmt="none", ecolor="k", capsize=4, lw=1)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=9)
    ax.set_ylabel("rate")
    ax.set_ylim(0, 1)
    ax.set_title(f"{summary.n_trials} trials, seeds {summary.seed_base}..."
                 f"{summary.seed_base + summary.n_trials - 1}")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
