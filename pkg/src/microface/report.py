"""Figure rendering for the reporting commands (Agg backend, PNG files)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import DataError  # noqa: E402
from .train import TrainRecord  # noqa: E402

LOG_COLUMNS = ["epoch", "mean_arc_loss", "mean_eta", "mean_token_entropy", "train_accuracy", "wall_seconds"]


def write_train_log(path, records: list[TrainRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for r in records:
            writer.writerow(
                [r.epoch, f"{r.mean_arc_loss:.12g}", f"{r.mean_eta:.12g}", f"{r.mean_token_entropy:.12g}",
                 f"{r.train_accuracy:.12g}", f"{r.wall_seconds:.6g}"]
            )


def read_train_log(path) -> dict[str, list[float]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"training log not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LOG_COLUMNS:
            raise DataError(f"{path}: unexpected log header {header!r}")
        cols: dict[str, list[float]] = {c: [] for c in LOG_COLUMNS}
        for row in reader:
            for c, v in zip(LOG_COLUMNS, row):
                cols[c].append(float(v))
    if not cols["epoch"]:
        raise DataError(f"{path}: empty training log")
    return cols


def save_training_curves(records: list[TrainRecord], path) -> None:
    epochs = [r.epoch for r in records]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(epochs, [r.mean_arc_loss for r in records])
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("mean margin loss")
    axes[1].plot(epochs, [r.train_accuracy for r in records])
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("train accuracy")
    axes[2].plot(epochs, [r.mean_token_entropy for r in records], label="token entropy")
    axes[2].plot(epochs, [r.mean_eta for r in records], label="eta")
    axes[2].set_xlabel("epoch")
    axes[2].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_entropy_trend(runs: dict[str, dict[str, list[float]]], path) -> None:
    """Overlay the mean per-token entropy trajectories of several runs."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for label, cols in runs.items():
        ax.plot(cols["epoch"], cols["mean_token_entropy"], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean per-token entropy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_ablation_bars(rows: list[dict], path) -> None:
    modes = [r["mode"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    axes[0].bar(modes, [r["train_accuracy"] for r in rows])
    axes[0].set_ylabel("final train accuracy")
    axes[1].bar(modes, [r["mean_token_entropy"] for r in rows])
    axes[1].set_ylabel("final mean token entropy")
    for ax in axes:
        ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_score_histogram(genuine: list[float], impostor: list[float], path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.hist(impostor, bins=30, alpha=0.6, label="impostor")
    ax.hist(genuine, bins=30, alpha=0.6, label="genuine")
    ax.set_xlabel("cosine score")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
