"""Figures written alongside the CSV/JSON outputs.

Everything renders through the non-interactive Agg backend straight to a
file; nothing is shown on screen.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

# fixed metadata keeps repeated renders byte-stable
_PNG_META = {"Software": None}

plt.rcParams.update(
    {
        "font.size": 9,
        "axes.titlesize": 10,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "savefig.dpi": 120,
    }
)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_class_distribution(class_counts: dict, path) -> Path:
    labels = list(class_counts)
    counts = [class_counts[k] for k in labels]
    fig, ax = plt.subplots(figsize=(5, 3))
    bars = ax.barh(labels[::-1], counts[::-1], color="0.55")
    bars[0].set_color("tab:red")
    for b, n in zip(bars, counts[::-1]):
        ax.text(b.get_width(), b.get_y() + b.get_height() / 2, f" {n}", va="center", fontsize=8)
    ax.set_xlabel("images")
    ax.set_title("class distribution")
    return _save(fig, path)


def plot_scores(rows, path, selected=None) -> Path:
    """Normalized content vs spatial score, one panel per seed (max 12 panels).

    ``selected`` is an optional set of ``(seed_id, candidate_id)`` pairs to
    highlight.
    """
    selected = selected or set()
    seeds = []
    for r in rows:
        if r.seed_id not in seeds:
            seeds.append(r.seed_id)
    seeds = seeds[:12]
    ncol = min(4, max(1, len(seeds)))
    nrow = int(np.ceil(len(seeds) / ncol)) if seeds else 1
    fig, axes = plt.subplots(nrow, ncol, figsize=(2.6 * ncol, 2.4 * nrow), squeeze=False)
    for ax in axes.ravel()[len(seeds):]:
        ax.set_visible(False)
    for ax, seed in zip(axes.ravel(), seeds):
        live = [r for r in rows if r.seed_id == seed and not r.skipped]
        c = np.array([r.c_norm for r in live], dtype=float)
        s = np.array([np.nan if r.s_norm is None else r.s_norm for r in live], dtype=float)
        hit = np.array([(seed, r.candidate_id) in selected for r in live], dtype=bool)
        if live:
            ax.scatter(c[~hit], s[~hit], s=10, color="0.6", label="candidate")
            ax.scatter(c[hit], s[hit], s=14, color="tab:red", label="selected")
        ax.set_xlim(-0.05, 1.05)
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(seed)
        ax.set_xlabel("content (norm.)")
        ax.set_ylabel("spatial (norm.)")
    fig.tight_layout()
    return _save(fig, path)


def plot_segmentation(img, seg, stats, path) -> Path:
    """Original, denoised, segmentation channel and ROI overlay side by side."""
    fig, axes = plt.subplots(1, 4, figsize=(10, 2.8))
    axes[0].imshow(img.pixels if img.channels == 3 else img.pixels[:, :, 0], cmap="gray")
    axes[0].set_title("input")
    axes[1].imshow(seg.denoised.pixels)
    axes[1].set_title("denoised")
    axes[2].imshow(seg.plane, cmap="gray", vmin=0, vmax=255)
    axes[2].set_title(f"channel, t={seg.threshold}")
    axes[3].imshow(seg.closed_mask, cmap="gray")
    axes[3].contour(seg.roi.mask, levels=[0.5], colors="tab:red", linewidths=0.8)
    x0, y0, x1, y1 = seg.roi.bbox
    axes[3].add_patch(
        Rectangle((x0 - 0.5, y0 - 0.5), x1 - x0 + 1, y1 - y0 + 1, fill=False, ec="tab:orange")
    )
    axes[3].plot([stats.x_centroid], [stats.y_centroid], "+", color="tab:cyan", ms=8)
    axes[3].set_title(f"ROI, sigma={stats.sigma:.1f}")
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    return _save(fig, path)
