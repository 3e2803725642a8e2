"""Figure rendering for run and sweep outputs (PNG files next to the CSVs)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

GEN_RANGE = (1, 2, 3, 4, 5)


def run_figures(result, fig_dir: str | Path) -> dict:
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "f1_png": f1_by_generation_figure(result, fig_dir / "f1_by_generation.png"),
        "errors_png": tracking_errors_figure(result, fig_dir / "tracking_errors.png"),
        "trajectory_png": trajectory_figure(result, fig_dir / "trajectory_overview.png"),
    }
    return files


def f1_by_generation_figure(result, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    gens = [g for g in GEN_RANGE if g in result.aggregate.per_generation]
    means = [result.aggregate.per_generation[g].mean for g in gens]
    ax.bar(gens, means, color="#7aa6c2", zorder=1, label="weighted mean")
    for s in result.sequences:
        xs = [g for g in gens if g in s.result.per_generation]
        ys = [s.result.per_generation[g].f1 for g in xs]
        ax.scatter(xs, ys, color="#333333", s=12, zorder=2, alpha=0.7)
    ax.set_xlabel("airway generation")
    ax.set_ylabel("F1 of visible airways")
    ax.set_ylim(0.0, 1.05)
    ax.set_xticks(list(GEN_RANGE))
    ax.set_title(f"{result.config.algorithm}: F1 by generation "
                 f"({len(result.sequences)} sequences)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def tracking_errors_figure(result, path: Path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    labels = [("e_p", "position error (mm)"), ("e_d", "direction error (deg)"),
              ("e_r", "roll error (deg)")]
    for ax, (key, label) in zip(axes, labels):
        agg = getattr(result.aggregate, key)
        if agg is not None:
            ax.bar([0], [agg.mean], color="#c2897a")
        per_seq = [getattr(s.result, f"mean_{key}") for s in result.sequences]
        ys = [v for v in per_seq if v is not None]
        ax.scatter(np.zeros(len(ys)), ys, color="#333333", s=12, alpha=0.7)
        ax.set_xticks([])
        ax.set_title(label, fontsize=10)
    fig.suptitle(f"{result.config.algorithm}: tracking error on correctly-labeled frames",
                 fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def trajectory_figure(result, path: Path) -> Path:
    """2-D projection (x-z) of the skeleton with true and estimated tracks."""
    fig, ax = plt.subplots(figsize=(6, 6))
    for a in result.skeleton.airways.values():
        cl = a.centerline
        ax.plot(cl[:, 0], cl[:, 2], color="#b9c6cc", lw=1.0, zorder=1)
    for i, s in enumerate(result.sequences):
        true_xy = np.array([f.true_pose.position for f in s.trajectory])
        est_xy = np.array([r.est_pose.position for r in s.engine.records
                           if r.est_pose is not None])
        label_true = "true" if i == 0 else None
        label_est = "estimated" if i == 0 else None
        ax.plot(true_xy[:, 0], true_xy[:, 2], color="#2a6f97", lw=1.2,
                zorder=2, label=label_true)
        if len(est_xy):
            ax.plot(est_xy[:, 0], est_xy[:, 2], color="#c44536", lw=0.9, ls="--",
                    zorder=3, label=label_est)
    ax.set_aspect("equal")
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("z (mm)")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("trajectories on the skeletal tree")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def sweep_figure(sweep, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(sweep.values, sweep.mean_f1, marker="o", color="#2a6f97")
    if min(sweep.values) > 0 and max(sweep.values) / min(sweep.values) > 50:
        ax.set_xscale("log")
    ax.set_xlabel(sweep.param)
    ax.set_ylabel("average F1")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"sensitivity: {sweep.param}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
