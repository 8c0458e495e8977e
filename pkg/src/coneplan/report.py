"""Headless figure rendering for command outputs.

Every function writes one PNG and returns its path. Figures are
reproducible: fixed sizes, no timestamps, pinned metadata.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_META = {"Software": "coneplan"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def _extent(grid):
    x0, y0 = grid.origin
    return (
        x0,
        x0 + grid.width_cells * grid.resolution,
        y0,
        y0 + grid.height_cells * grid.resolution,
    )


def _draw_grid(ax, grid):
    ax.imshow(
        grid.cells,
        origin="lower",
        extent=_extent(grid),
        cmap="gray_r",
        vmin=0.0,
        vmax=1.0,
        interpolation="nearest",
    )
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def _draw_endpoints(ax, start=None, goal=None):
    if start is not None:
        ax.plot(start[0], start[1], "g^", ms=9, label="start")
    if goal is not None:
        ax.plot(goal[0], goal[1], "r*", ms=12, label="goal")


def save_world_figure(grid, path, *, start=None, goal=None, dvd=None) -> Path:
    """Occupancy map with optional start/goal markers and DVD skeleton."""
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_grid(ax, grid)
    if dvd:
        cells = np.array(sorted(dvd))
        xs = grid.origin[0] + (cells[:, 1] + 0.5) * grid.resolution
        ys = grid.origin[1] + (cells[:, 0] + 0.5) * grid.resolution
        ax.plot(xs, ys, ".", color="tab:blue", ms=1.5, label="skeleton")
    _draw_endpoints(ax, start, goal)
    if start is not None or goal is not None or dvd:
        ax.legend(loc="upper left", fontsize=8)
    return _save(fig, path)


def save_trajectory_figure(grid, trajectories, path, *, start=None, goal=None) -> Path:
    """Sampled operator trajectories over the map."""
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_grid(ax, grid)
    for i, pts in enumerate(trajectories):
        pts = np.asarray(pts)
        ax.plot(pts[:, 0], pts[:, 1], lw=0.9, alpha=0.8,
                label="reference" if i == 0 else None)
    _draw_endpoints(ax, start, goal)
    ax.legend(loc="upper left", fontsize=8)
    return _save(fig, path)


def save_learning_curve(log_rows, path) -> Path:
    """Reward, trigger rate and cone opening against environment steps."""
    steps = [r["env_steps"] for r in log_rows]
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    panels = (
        ("mean_reward", "mean reward"),
        ("trigger_rate", "trigger rate"),
        ("mean_two_phi_deg", "mean cone opening [deg]"),
    )
    for ax, (key, label) in zip(axes, panels):
        ax.plot(steps, [float(r[key]) for r in log_rows], lw=1.2)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("environment steps")
    fig.tight_layout()
    return _save(fig, path)


def save_eval_figure(rows, path) -> Path:
    """Mean/std bars per model for tracking error, trigger rate, opening."""
    names = list(rows)
    panels = (
        ("e_med", "e_MED [m]", "e_med_mean", "e_med_std"),
        ("f", "trigger frequency", "trigger_freq_mean", "trigger_freq_std"),
        ("two_phi", "cone opening [deg]", "opening_deg_mean", "opening_deg_std"),
    )
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.4))
    for ax, (_, label, mkey, skey) in zip(axes, panels):
        xs, means, stds, labels = [], [], [], []
        for i, name in enumerate(names):
            row = rows[name]
            mean = getattr(row, mkey)
            if mean is None:
                continue
            xs.append(i)
            means.append(mean)
            stds.append(getattr(row, skey) or 0.0)
            labels.append(name)
        ax.bar(xs, means, yerr=stds, capsize=4, color="tab:blue", alpha=0.8)
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, fontsize=8)
        ax.set_ylabel(label)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def save_heatmap_figure(hist, grid, bin_size, path, *, dvd=None) -> Path:
    """Trigger-location histogram over the map, skeleton overlaid."""
    fig, ax = plt.subplots(figsize=(6.4, 6))
    x0, y0 = grid.origin
    ny, nx = hist.shape
    im = ax.imshow(
        hist,
        origin="lower",
        extent=(x0, x0 + nx * bin_size, y0, y0 + ny * bin_size),
        cmap="hot",
        interpolation="nearest",
    )
    if dvd:
        cells = np.array(sorted(dvd))
        xs = grid.origin[0] + (cells[:, 1] + 0.5) * grid.resolution
        ys = grid.origin[1] + (cells[:, 0] + 0.5) * grid.resolution
        ax.plot(xs, ys, ".", color="tab:cyan", ms=1.0, alpha=0.6)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.colorbar(im, ax=ax, label="replanning triggers")
    return _save(fig, path)


def save_replay_figure(trace, path, *, grid=None) -> Path:
    """Executed pose track, reference, adopted paths and trigger marks."""
    fig, ax = plt.subplots(figsize=(6, 6))
    if grid is not None:
        _draw_grid(ax, grid)
    else:
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
    ref = np.asarray(trace.header["human_trajectory"] or [])
    if ref.size:
        ax.plot(ref[:, 0], ref[:, 1], "--", color="tab:gray", lw=1.0, label="reference")
    for version, pts in sorted(trace.paths.items()):
        ax.plot(pts[:, 0], pts[:, 1], lw=0.8, alpha=0.6, color="tab:green",
                label="planned" if version == min(trace.paths) else None)
    ticks = trace.ticks
    poses = np.array([r["pose"][:2] for r in ticks])
    if poses.size:
        ax.plot(poses[:, 0], poses[:, 1], lw=1.4, color="tab:blue", label="executed")
    trig = [
        r["pose"][:2]
        for r in ticks
        if r.get("decision") is not None
        and r["decision"]["a"] == 1
        and r["decision"]["valid"]
    ]
    if trig:
        trig = np.asarray(trig)
        ax.plot(trig[:, 0], trig[:, 1], "x", color="tab:red", ms=6, label="replan")
    start = trace.header.get("start")
    goal = trace.header.get("goal")
    _draw_endpoints(ax, start, goal)
    ax.legend(loc="upper left", fontsize=8)
    return _save(fig, path)
