"""Score and exit-rate figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_DPI = 150


def _panels(title: str | None = None):
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    axes[0].set_title("Score")
    axes[1].set_title("Exit rate")
    axes[1].set_ylim(-0.05, 1.05)
    for ax in axes:
        ax.set_xlabel("time step")
        ax.grid(True, alpha=0.3)
    if title:
        fig.suptitle(title)
    return fig, axes


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def plot_run(rows, path, max_score: float | None = None, window: int = 50) -> None:
    """Per-episode training curves of one run, with a trailing moving average."""
    fig, axes = _panels()
    if rows:
        steps = np.array([r.step for r in rows])
        for ax, key in zip(axes, ("score", "exit_rate")):
            y = np.array([getattr(r, key) for r in rows], dtype=float)
            ax.plot(steps, y, ".", ms=2, alpha=0.3, color="grey")
            if len(y) >= window:
                smooth = np.convolve(y, np.ones(window) / window, mode="valid")
                ax.plot(steps[window - 1 :], smooth, lw=1.5)
    if max_score is not None:
        axes[0].axhline(max_score, ls="--", color="black", lw=1)
    _save(fig, path)


def plot_aggregate(rows: list[dict], path, max_score: float | None = None, label: str | None = None) -> None:
    """Mean curve with the clamped 95% band, as produced by ``harness.aggregate``."""
    fig, axes = _panels()
    steps = np.array([r["step"] for r in rows])
    for ax, key in zip(axes, ("score", "exit_rate")):
        mean = np.array([r[f"{key}_mean"] for r in rows])
        lo = np.array([r[f"{key}_ci_low"] for r in rows])
        hi = np.array([r[f"{key}_ci_high"] for r in rows])
        line = ax.plot(steps, mean, lw=1.5, label=label)[0]
        ax.fill_between(steps, lo, hi, color=line.get_color(), alpha=0.25, lw=0)
    if max_score is not None:
        axes[0].axhline(max_score, ls="--", color="black", lw=1, label="max score")
        axes[0].legend(loc="lower right", fontsize=8)
    _save(fig, path)
