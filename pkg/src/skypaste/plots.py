"""Figure rendering for report paths: PR curves per class and the training
loss curve. Always renders off-screen (Agg) so report generation works in
headless runs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport, pr_curve
from .toytrain import TrainHistory


def save_pr_curves(report: EvalReport, path: Path) -> Path:
    """One figure, one line per class with ground truth, AP in the legend."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 5))
    drew_any = False
    for class_id, res in enumerate(report.class_results):
        if res.ap is None:
            continue
        recall, precision = pr_curve(report.ledger, class_id)
        if recall.size == 0:
            recall, precision = [0.0], [1.0]
        ax.plot(
            recall,
            precision,
            drawstyle="steps-post",
            marker="o",
            markersize=3,
            label=f"{res.name} (AP {res.ap:.4f})",
        )
        drew_any = True
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"mAP@0.50 = {report.map50:.4f}")
    ax.grid(True, alpha=0.3)
    if drew_any:
        ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_loss_curve(history: TrainHistory, path: Path) -> Path:
    """Train/val loss per epoch with the best epoch marked."""
    path = Path(path)
    epochs = [rec.epoch for rec in history.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [rec.train_loss for rec in history.epochs], label="train")
    ax.plot(epochs, [rec.val_loss for rec in history.epochs], label="val")
    if history.best_epoch:
        ax.axvline(
            history.best_epoch,
            color="gray",
            linestyle="--",
            linewidth=1,
            label=f"best epoch {history.best_epoch}",
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
