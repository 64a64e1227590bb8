"""PNG figures written next to the text outputs (non-interactive Agg backend)."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import roc_curve  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    tmp = f"{path}.partial"
    try:
        # fixed metadata keeps reruns byte-identical
        fig.savefig(tmp, format="png", dpi=100, metadata={"Software": None})
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def plot_history(history, path, title="training"):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    epochs = np.arange(1, len(history) + 1)
    ax.plot(epochs, history.train_loss, "o-", ms=3, label="train")
    ax.plot(epochs, history.val_loss, "s-", ms=3, label="validation")
    if history.best_epoch:
        ax.axvline(history.best_epoch, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_roc(curves, path, title="ROC"):
    """``curves`` maps a label to (scores, labels)."""
    fig, ax = plt.subplots(figsize=(4, 4))
    for name, (scores, labels) in curves.items():
        fpr, tpr = roc_curve(scores, labels)
        ax.plot(fpr, tpr, lw=1.2, label=name)
    ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls=":")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_grid(grid, path, title, label, vmax=1.0, cmap="inferno"):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(np.asarray(grid), vmin=0.0, vmax=vmax, cmap=cmap, interpolation="nearest")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_title(title)
    ax.set_xlabel("col")
    ax.set_ylabel("row")
    return _save(fig, path)
