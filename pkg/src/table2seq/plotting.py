"""Figures written next to the CSV/JSON reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import BUCKETS
from .io_utils import atomic_open


def _save(fig, path) -> None:
    try:
        fig.tight_layout()
        with atomic_open(path, "wb") as fh:
            fig.savefig(fh, format="png", dpi=120)
    finally:
        plt.close(fig)


def plot_attention(labels, tokens, weights, path, title: str = "") -> None:
    """Heat map of attention: states down, generated tokens across; darker is higher."""
    weights = np.asarray(weights)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(tokens) + 2), max(3.0, 0.35 * len(labels) + 1.5)))
    ax.imshow(weights, cmap="Greys", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(tokens)))
    ax.set_xticklabels(tokens, rotation=60, ha="right", fontsize=8)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=8)
    if title:
        ax.set_title(title, fontsize=9)
    _save(fig, path)


def plot_bucket_bleu(report: dict, path) -> None:
    scores = [report["bucket_bleu"].get(b) for b in BUCKETS]
    counts = [report["bucket_counts"].get(b, 0) for b in BUCKETS]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    xs = np.arange(len(BUCKETS))
    ax.bar(xs, [100 * (s or 0.0) for s in scores], color="0.4")
    for x, n in zip(xs, counts):
        ax.annotate(f"n={n}", (x, 0), xytext=(0, 3), textcoords="offset points", ha="center", fontsize=7, color="w")
    ax.set_xticks(xs)
    ax.set_xticklabels(BUCKETS)
    ax.set_xlabel("unseen attributes per table")
    ax.set_ylabel("BLEU-4")
    _save(fig, path)


def plot_training_curve(history, path) -> None:
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(epochs, [h["train_loss"] for h in history], color="k", lw=1.2, label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    dev = [(h["epoch"], h["dev_bleu"]) for h in history if h.get("dev_bleu") is not None]
    if dev:
        ax2 = ax.twinx()
        ax2.plot(*zip(*dev), color="0.5", ls="--", lw=1.0)
        ax2.set_ylabel("dev BLEU-4")
        ax2.set_ylim(0, 1)
    _save(fig, path)
