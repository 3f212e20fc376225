"""Figures written next to CSV/JSON outputs (non-interactive backend)."""

from __future__ import annotations

from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ler_curves(curves: Iterable, path, title: str = "") -> None:
    """Log-log LER against p' with Wilson error bars."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for curve in curves:
        ps = curve.p_values
        rates = curve.rates
        lo = np.array([pt.ci_lo for pt in curve.points])
        hi = np.array([pt.ci_hi for pt in curve.points])
        keep = rates > 0
        if not keep.any():
            continue
        yerr = np.vstack([rates - lo, hi - rates])[:, keep]
        label = f"d={curve.distance} {curve.variant}/{curve.graph_mode} {curve.basis}"
        ax.errorbar(ps[keep], rates[keep], yerr=yerr, marker="o", ms=3, capsize=2, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("depolarisation parameter p'")
    ax.set_ylabel("logical error rate per d cycles")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, path)


def plot_intersection_matrix(ds: Sequence[int], mat: np.ndarray, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    shown = np.where(np.isfinite(mat), mat, np.nan)
    im = ax.imshow(shown, cmap="viridis")
    ax.set_xticks(range(len(ds)), labels=[str(d) for d in ds])
    ax.set_yticks(range(len(ds)), labels=[str(d) for d in ds])
    ax.set_xlabel("d")
    ax.set_ylabel("d")
    for i in range(len(ds)):
        for j in range(len(ds)):
            if np.isfinite(mat[i, j]):
                ax.text(j, i, f"{mat[i, j] * 1e3:.2f}", ha="center", va="center", fontsize=7, color="w")
    fig.colorbar(im, ax=ax, label="crossing p'")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_latency(records: Iterable, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.8))
    for rec in records:
        b = np.array([s[0] for s in rec.samples])
        t = np.array([s[1] for s in rec.samples])
        (line,) = ax.plot(b, t * 1e3, "o", label=f"{rec.label} d={rec.distance}")
        grid = np.linspace(0, b.max(), 50)
        ax.plot(grid, (rec.fit.overhead + rec.fit.per_shot * grid) * 1e3, "-", color=line.get_color(), lw=1)
    ax.set_xlabel("batch size")
    ax.set_ylabel("time per batch (ms)")
    ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def plot_event_histogram(counts: np.ndarray, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    counts = np.asarray(counts)
    ax.hist(counts, bins=np.arange(counts.max() + 2) - 0.5 if counts.size else 1)
    ax.set_xlabel("detection events per shot")
    ax.set_ylabel("shots")
    if title:
        ax.set_title(title)
    _save(fig, path)
