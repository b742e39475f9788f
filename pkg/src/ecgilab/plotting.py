"""Static figures of activation maps and their errors (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fields import METHODS  # noqa: E402


def plot_maps(path, maps: dict, curve, title: str = "") -> Path:
    """AT against epicardial angle for the reference and every method."""
    theta = np.degrees(np.mod(curve.angles, 2 * np.pi))
    order = np.argsort(theta)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for method in METHODS:
        if method not in maps:
            continue
        ref = method == "reference"
        ax.plot(theta[order], np.asarray(maps[method].times)[order],
                color="k" if ref else None, lw=2.0 if ref else 1.0, label=method)
    ax.set_xlabel("epicardial angle (deg)")
    ax.set_ylabel("activation time (ms)")
    ax.set_xlim(0, 360)
    ax.set_title(title)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_errors(path, table: dict, title: str = "") -> Path:
    """Bar chart of L2, CC and SC per method."""
    methods = [m for m in METHODS if m in table]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
    for ax, key in zip(axes, ("l2", "cc", "sc")):
        ax.bar(range(len(methods)), [table[m][key] for m in methods], color="0.5")
        ax.set_xticks(range(len(methods)))
        ax.set_xticklabels(methods, rotation=45, ha="right", fontsize=8)
        ax.set_title(key.upper())
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
