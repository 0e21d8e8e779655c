"""Report figures rendered to files (non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update(
    {
        "figure.dpi": 120,
        "savefig.bbox": "tight",
        "axes.spines.top": False,
        "axes.spines.right": False,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
    }
)


def smooth(x: np.ndarray, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if window <= 1 or len(x) < window:
        return x
    kernel = np.ones(window) / window
    return np.convolve(x, kernel, mode="valid")


def _save(fig, path: str) -> str:
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_curves(curves: dict[str, np.ndarray], path: str, ylabel: str, window: int = 50, title: str = "") -> str:
    """One smoothed line per named per-episode trace."""
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    for name, y in curves.items():
        ys = smooth(y, window)
        x = np.arange(len(ys)) + (len(y) - len(ys)) + 1
        ax.plot(x, ys, label=name, lw=1.2)
    ax.set_xlabel("episode")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_ablation(medians: dict[str, float], per_seed: dict[str, list[float]], path: str) -> str:
    """Median accuracy per variant with individual seeds overlaid."""
    names = list(medians)
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.bar(range(len(names)), [medians[n] for n in names], color="#8fb3d9", edgecolor="#2b5d8a")
    for i, n in enumerate(names):
        pts = per_seed.get(n, [])
        ax.scatter(np.full(len(pts), i), pts, s=10, color="#222222", zorder=3)
    ax.axhline(20.0, color="#aa3333", lw=0.8, ls="--", label="chance (5-way)")
    ax.set_xticks(range(len(names)), names, rotation=20)
    ax.set_ylabel("accuracy (%)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_bench(rows: list[dict], path: str) -> str:
    T = [r["T"] for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.loglog(T, [r["stream_ms"] for r in rows], "o-", label="streaming")
    ax.loglog(T, [r["oracle_ms"] for r in rows], "s-", label="direct sum")
    ax.set_xlabel("sequence length T")
    ax.set_ylabel("time (ms)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_saliency(clip: np.ndarray, lw: np.ndarray, path: str, mask: np.ndarray | None = None) -> str:
    """Frames (top) and channel-averaged saliency (bottom), mask outline if given."""
    F = clip.shape[0]
    fig, axes = plt.subplots(2, F, figsize=(1.2 * F, 2.6))
    for f in range(F):
        axes[0, f].imshow(np.clip(clip[f].transpose(1, 2, 0), 0, 1))
        axes[1, f].imshow(lw[f].mean(axis=0), cmap="magma", vmin=0, vmax=1)
        if mask is not None:
            axes[1, f].contour(mask[f], levels=[0.5], colors="cyan", linewidths=0.6)
        for ax in axes[:, f]:
            ax.set_xticks([])
            ax.set_yticks([])
            ax.grid(False)
    return _save(fig, path)
