"""Static diagnostic artifacts: bar charts, sample grids, curves, heatmaps.

Every plot is emitted as a PNG with the underlying series also written as CSV
where that makes sense, so figures can be replotted externally.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch

from .dataset import ClassHistogram
from .labels import EMOTION_NAMES
from .metrics import ConfusionMatrix
from .training import EpochRecord
from .transforms import denormalize


def write_histogram_csv(hist: ClassHistogram, path: str | Path) -> None:
    lines = ["class,count"]
    lines += [f"{name},{int(count)}" for name, count in zip(EMOTION_NAMES, hist.counts)]
    Path(path).write_text("\n".join(lines) + "\n")


def plot_class_histogram(hist: ClassHistogram, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(EMOTION_NAMES, hist.counts, color="#4878cf")
    ax.set_ylabel("samples")
    ax.set_title(f"class distribution (n={hist.total})")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """Normalized (3,H,W) tensor -> displayable (H,W,3) array in [0,1]."""
    return denormalize(t).clamp(0, 1).permute(1, 2, 0).numpy()


def plot_image_grid(
    tensors: list[torch.Tensor],
    path: str | Path,
    titles: list[str] | None = None,
) -> None:
    n = len(tensors)
    cols = min(4, max(1, n))
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.4 * rows), squeeze=False)
    for k in range(rows * cols):
        ax = axes[k // cols][k % cols]
        ax.axis("off")
        if k < n:
            ax.imshow(_tensor_to_image(tensors[k]))
            if titles is not None:
                ax.set_title(titles[k], fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_curves_csv(history: list[EpochRecord], path: str | Path) -> None:
    lines = ["epoch,train_loss,val_loss,train_acc,val_acc,lr,wall_time"]
    for r in history:
        lines.append(
            f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.train_acc!r},"
            f"{r.val_acc!r},{r.lr!r},{r.wall_time!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def plot_curves(history: list[EpochRecord], acc_path: str | Path, loss_path: str | Path) -> None:
    epochs = [r.epoch for r in history]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [r.train_acc for r in history], label="train", marker="o", markersize=3)
    ax.plot(epochs, [r.val_acc for r in history], label="val", marker="o", markersize=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_title("accuracy per epoch")
    ax.legend()
    fig.tight_layout()
    fig.savefig(acc_path, dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [r.train_loss for r in history], label="train", marker="o", markersize=3)
    ax.plot(epochs, [r.val_loss for r in history], label="val", marker="o", markersize=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("loss per epoch")
    ax.legend()
    fig.tight_layout()
    fig.savefig(loss_path, dpi=120)
    plt.close(fig)


def plot_confusion_heatmap(cm: ConfusionMatrix, path: str | Path, partition: str) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    im = ax.imshow(cm.m, cmap="Blues")
    ax.set_xticks(range(len(EMOTION_NAMES)), EMOTION_NAMES, rotation=45, ha="right")
    ax.set_yticks(range(len(EMOTION_NAMES)), EMOTION_NAMES)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"confusion matrix ({partition} partition)")
    threshold = cm.m.max() / 2 if cm.m.max() > 0 else 0
    for i in range(cm.m.shape[0]):
        for j in range(cm.m.shape[1]):
            ax.text(
                j,
                i,
                str(int(cm.m[i, j])),
                ha="center",
                va="center",
                fontsize=8,
                color="white" if cm.m[i, j] > threshold else "black",
            )
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
