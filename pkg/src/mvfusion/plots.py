"""Figures written next to the CSV outputs of the report commands."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import IoError  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}

# drop the version stamp so reruns produce identical files
_PNG_METADATA = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    try:
        fig.savefig(path, metadata=_PNG_METADATA, bbox_inches="tight")
    except OSError as exc:
        raise IoError(f"cannot write figure {path}: {exc}") from None
    finally:
        plt.close(fig)
    return path


def plot_confusion(cm, class_names, path) -> Path:
    counts = cm.counts
    with plt.rc_context(STYLE):
        size = 1.2 + 0.45 * len(class_names)
        fig, ax = plt.subplots(figsize=(size + 1, size))
        im = ax.imshow(counts, cmap="Blues")
        ax.set_xticks(range(len(class_names)), class_names, rotation=45, ha="right")
        ax.set_yticks(range(len(class_names)), class_names)
        ax.set_xlabel("predicted class")
        ax.set_ylabel("actual class")
        cut = counts.max() / 2 if counts.size else 0
        for (i, j), v in np.ndenumerate(counts):
            ax.text(j, i, str(v), ha="center", va="center",
                    color="white" if v > cut else "black", fontsize=7)
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        return _save(fig, path)


def plot_noise_sweep(rows, path) -> Path:
    levels = [100 * lv for lv, _ in rows]
    acc = [100 * a for _, a in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.8))
        ax.plot(levels, acc, marker="o", color="C0")
        ax.set_xlabel("corrupted pixels (%)")
        ax.set_ylabel("test accuracy (%)")
        ax.set_ylim(min(acc + [100]) - 5, 101)
        ax.grid(alpha=0.3)
        return _save(fig, path)


def plot_comparison(rows, path) -> Path:
    labels = [label for label, _ in rows]
    acc = [100 * a for _, a in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 0.45 * len(rows) + 1.0))
        y = np.arange(len(rows))
        ax.barh(y, acc, color=["C1" if "CCA" in lab else "C0" for lab in labels])
        ax.set_yticks(y, labels)
        ax.invert_yaxis()
        ax.set_xlabel("test accuracy (%)")
        for yi, a in zip(y, acc):
            ax.text(a + 0.5, yi, f"{a:.1f}", va="center", fontsize=7)
        ax.set_xlim(0, 110)
        return _save(fig, path)
