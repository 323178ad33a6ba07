"""Matplotlib figures written next to the report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .tonemap import srgb  # noqa: E402

# no timestamps or version strings, so figures are byte-reproducible
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_loss_curves(curves: dict[str, np.ndarray], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, y in sorted(curves.items()):
        ax.semilogy(np.arange(1, len(y) + 1), y, label=name, lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("tone-mapped loss")
    if curves:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_energy_histogram(estimates: dict[str, np.ndarray], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, e in sorted(estimates.items()):
        ax.hist(e, bins=40, alpha=0.6, label=name)
    ax.axvline(1.0, color="k", ls="--", lw=1)
    ax.set_xlabel("directional albedo estimate")
    ax.set_ylabel("pairs")
    if estimates:
        ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_image_pair(pred: np.ndarray, gt: np.ndarray, path: str | Path, title: str = "") -> None:
    err = np.abs(srgb(pred) - srgb(gt)).mean(axis=-1)
    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    for ax, img, lab in zip(axes, (srgb(pred), srgb(gt)), ("prediction", "ground truth")):
        ax.imshow(img)
        ax.set_title(lab, fontsize=9)
    im = axes[2].imshow(err, cmap="magma")
    axes[2].set_title("|sRGB error|", fontsize=9)
    fig.colorbar(im, ax=axes[2], fraction=0.046)
    for ax in axes:
        ax.axis("off")
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def plot_metric_bars(entries: list[dict], metric: str, path: str | Path) -> None:
    rows = [(e["source"], float(e["value"])) for e in entries
            if e["metric"] == metric and isinstance(e["value"], (int, float))]
    fig, ax = plt.subplots(figsize=(6, 0.4 * max(len(rows), 2) + 1))
    if rows:
        names, vals = zip(*rows)
        ax.barh(range(len(vals)), vals)
        ax.set_yticks(range(len(vals)), names, fontsize=8)
    ax.set_xlabel(metric)
    fig.tight_layout()
    _save(fig, path)
