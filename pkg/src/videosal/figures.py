"""Matplotlib figures rendered next to the delimited report files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curves(log_rows: list[dict], path) -> None:
    """Training objective per iteration plus validation points."""
    fig, ax = plt.subplots(figsize=(7, 4))
    iters = [r["iteration"] for r in log_rows]
    ax.plot(iters, [r["total"] for r in log_rows], lw=0.8, label="train total")
    ax.plot(iters, [r["cc"] for r in log_rows], lw=0.6, alpha=0.7, label="cc term")
    ax.plot(iters, [r["kl"] for r in log_rows], lw=0.6, alpha=0.7, label="kl term")
    val = [(r["iteration"], r["val_total"]) for r in log_rows if r.get("val_total") is not None]
    if val:
        ax.plot(*zip(*val), "o-", ms=3, label="validation")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_metric_curves(reports, path) -> None:
    """Per-frame metric traces, one panel per metric, one line per video."""
    metrics = ("cc", "sim", "nss", "auc_j", "s_auc")
    fig, axes = plt.subplots(len(metrics), 1, figsize=(7, 9), sharex=True)
    for ax, metric in zip(axes, metrics):
        for report in reports:
            xs = [r["frame"] for r in report.rows if r[metric] is not None]
            ys = [r[metric] for r in report.rows if r[metric] is not None]
            if xs:
                ax.plot(xs, ys, lw=0.8, label=report.video)
        ax.set_ylabel(metric)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("frame")
    if len(reports) <= 10:
        axes[0].legend(fontsize=7, ncol=4)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_chart(rows: list[dict], path) -> None:
    """Grouped bars of CC/SIM/AUC-J plus NSS on a twin axis, per variant."""
    fig, ax = plt.subplots(figsize=(8, 4))
    variants = [r["variant"] for r in rows]
    x = np.arange(len(variants))
    width = 0.25
    for i, metric in enumerate(("cc", "sim", "auc_j")):
        ax.bar(x + (i - 1) * width, [r[metric] for r in rows], width, label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels(variants, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("cc / sim / auc_j")
    ax2 = ax.twinx()
    ax2.plot(x, [r["nss"] for r in rows], "ko--", ms=4, label="nss")
    ax2.set_ylabel("nss")
    ax.legend(fontsize=8, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_saliency_panel(frames: np.ndarray, maps: list[np.ndarray], path,
                        max_cols: int = 6) -> None:
    """Frames (top row) against predicted maps (bottom row) for inspection."""
    n = min(len(maps), max_cols)
    picks = np.linspace(0, len(maps) - 1, n).astype(int)
    fig, axes = plt.subplots(2, n, figsize=(2.0 * n, 4))
    if n == 1:
        axes = axes.reshape(2, 1)
    for col, t in enumerate(picks):
        axes[0, col].imshow(frames[t], vmin=0, vmax=1)
        axes[0, col].set_title(f"frame {t}", fontsize=8)
        axes[1, col].imshow(maps[t], cmap="magma")
        for row in range(2):
            axes[row, col].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
