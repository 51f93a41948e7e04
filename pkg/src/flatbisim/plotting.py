"""Figures written next to the CSV/JSON outputs of the command line tool."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from matplotlib.figure import Figure

__all__ = ["plot_trajectory", "plot_recovery", "plot_witness"]


def _save(fig: Figure, path) -> None:
    # fixed metadata keeps repeated runs byte-stable for a given matplotlib
    fig.savefig(path, dpi=100, metadata={"Software": None})


def plot_trajectory(time: np.ndarray, columns: Mapping[str, np.ndarray], path,
                    title: str = "") -> None:
    """One panel per state variable against time."""
    names = list(columns)
    fig = Figure(figsize=(7, 1.6 * len(names) + 0.6))
    axes = fig.subplots(len(names), 1, sharex=True, squeeze=False)[:, 0]
    for ax, name in zip(axes, names):
        ax.plot(time, columns[name], lw=1.0)
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("time")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_recovery(time: np.ndarray, recovered: Mapping[str, np.ndarray], path,
                  reference: Mapping[str, np.ndarray] | None = None, title: str = "") -> None:
    """Recovered signals, overlaid on the reference columns when those are known."""
    names = list(recovered)
    fig = Figure(figsize=(7, 1.6 * len(names) + 0.6))
    axes = fig.subplots(len(names), 1, sharex=True, squeeze=False)[:, 0]
    for ax, name in zip(axes, names):
        if reference is not None and name in reference:
            ax.plot(time, reference[name], lw=2.5, alpha=0.35, label="input")
        ax.plot(time, recovered[name], lw=1.0, label="recovered")
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[0].legend(loc="upper right", fontsize="small")
    axes[-1].set_xlabel("time")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_witness(steps: Sequence[tuple[str, str]], path, points: Sequence[Sequence[float]] | None = None,
                 loop_back: int | None = None, title: str = "") -> None:
    """Mode and label of each witness step, plus the cell-center path when known."""
    geometric = points is not None and len(points) and len(points[0]) >= 2
    fig = Figure(figsize=(11 if geometric else 6, 4))
    if geometric:
        ax_path, ax_steps = fig.subplots(1, 2)
        pts = np.asarray(points, dtype=float)
        ax_path.plot(pts[:, 0], pts[:, 1], "-o", lw=1.0, ms=4)
        ax_path.plot(pts[0, 0], pts[0, 1], "s", ms=8, label="start")
        if loop_back is not None:
            ax_path.annotate("", xy=pts[loop_back, :2], xytext=pts[-1, :2],
                             arrowprops={"arrowstyle": "->", "ls": "--"})
        ax_path.set_xlabel("x0")
        ax_path.set_ylabel("x1")
        ax_path.set_title("cell centers (not a validated trajectory)", fontsize="small")
        ax_path.legend(fontsize="small")
        ax_path.grid(alpha=0.3)
    else:
        ax_steps = fig.subplots(1, 1)
    outputs = sorted(set(steps))
    level = {o: i for i, o in enumerate(outputs)}
    ax_steps.step(range(len(steps)), [level[s] for s in steps], where="post")
    ax_steps.set_yticks(range(len(outputs)), [f"({q},{k})" for q, k in outputs])
    ax_steps.set_xlabel("step")
    if loop_back is not None:
        ax_steps.axvline(loop_back, ls="--", lw=0.8)
    ax_steps.grid(alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)
