"""Image output: channel correlation heatmaps and forecast overlays."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def correlation_heatmap(corr: np.ndarray, names: Sequence[str], path: str | os.PathLike,
                        labels: Sequence[int] | None = None, title: str = "") -> None:
    """Write an N x N correlation heatmap; cluster labels are appended to the tick names."""
    corr = np.asarray(corr)
    n = corr.shape[0]
    ticks = [f"{nm} [{lb}]" for nm, lb in zip(names, labels)] if labels is not None else list(names)
    size = max(4.0, 0.6 * n + 2.0)
    fig, ax = plt.subplots(figsize=(size, size * 0.85))
    im = ax.imshow(corr, vmin=-1.0, vmax=1.0, cmap="coolwarm")
    ax.set_xticks(range(n), ticks, rotation=60, ha="right", fontsize=8)
    ax.set_yticks(range(n), ticks, fontsize=8)
    if n <= 12:
        for i in range(n):
            for j in range(n):
                ax.text(j, i, f"{corr[i, j]:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=ax, fraction=0.046)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def forecast_overlay(history: np.ndarray, truth: np.ndarray, forecast: np.ndarray,
                     names: Sequence[str], path: str | os.PathLike, title: str = "") -> None:
    """One panel per channel: history, ground truth and forecast.

    ``history`` is (k, L); ``truth`` and ``forecast`` are (k, S).
    """
    k = len(names)
    L, S = history.shape[1], truth.shape[1]
    fig, axes = plt.subplots(k, 1, figsize=(9, 2.2 * k), squeeze=False)
    t_hist = np.arange(L)
    t_fut = np.arange(L, L + S)
    for row, ax in enumerate(axes[:, 0]):
        ax.plot(t_hist, history[row], color="0.4", lw=1.0, label="history")
        ax.plot(t_fut, truth[row], color="tab:blue", lw=1.2, label="ground truth")
        ax.plot(t_fut, forecast[row], color="tab:orange", lw=1.2, label="forecast")
        ax.axvline(L - 0.5, color="0.7", ls=":")
        ax.set_ylabel(names[row], fontsize=8)
    axes[0, 0].legend(loc="upper left", fontsize=8)
    if title:
        axes[0, 0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
