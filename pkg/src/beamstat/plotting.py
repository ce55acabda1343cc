"""Static figures for sweep, convergence and benchmark reports.

Uses the non-interactive Agg backend; every function writes one PNG and
returns its path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib import pyplot as plt  # noqa: E402

MARKERS = ("o", "s", "^", "v", "D", "x")


def _finish(fig, ax, path) -> Path:
    ax.grid(linestyle="dashed", color="0.3", linewidth=0.3)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_curves(curves: dict, xlabel: str, ylabel: str, path, logx: bool = False) -> Path:
    """One line per label; ``curves[label] = (x, y)``."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for i, (label, (x, y)) in enumerate(sorted(curves.items())):
        ax.plot(x, y, marker=MARKERS[i % len(MARKERS)], ms=4, lw=1.2, label=label)
    if logx:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _finish(fig, ax, path)


def plot_traces(traces: dict, path) -> Path:
    """Objective value per iteration on a log axis, one line per label."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for label, tr in sorted(traces.items()):
        ax.semilogy(range(len(tr)), tr, lw=1.2, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("KL objective")
    return _finish(fig, ax, path)


def plot_power_map(omega, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4, 3.6))
    im = ax.imshow(omega, aspect="auto", origin="lower", cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("delay bin")
    ax.set_ylabel("angle bin")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
