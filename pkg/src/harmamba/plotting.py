"""Report figures, written to files with the Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def confusion_figure(cm: np.ndarray, path, labels=None, title: str = "Confusion matrix") -> Path:
    """Row-normalized heat map with raw counts printed in each cell."""
    cm = np.asarray(cm)
    C = cm.shape[0]
    labels = labels or [str(i) for i in range(C)]
    rows = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, rows, out=np.zeros(cm.shape, dtype=float), where=rows > 0)
    with plt.rc_context(RC):
        size = max(3.0, 0.45 * C + 1.5)
        fig, ax = plt.subplots(figsize=(size, size))
        im = ax.imshow(frac, cmap="Blues", vmin=0, vmax=1)
        ax.set_xticks(range(C), labels, rotation=45 if C > 8 else 0)
        ax.set_yticks(range(C), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(title)
        if C <= 20:
            for i in range(C):
                for j in range(C):
                    ax.text(j, i, str(cm[i, j]), ha="center", va="center", fontsize=7,
                            color="white" if frac[i, j] > 0.5 else "black")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        return _save(fig, path)


def training_figure(rows: list[dict], path) -> Path:
    epochs = [r["epoch"] for r in rows]
    with plt.rc_context(RC):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7, 2.8))
        a.plot(epochs, [r["train_loss"] for r in rows], label="train")
        a.plot(epochs, [r["val_loss"] for r in rows], label="val")
        a.set_xlabel("epoch")
        a.set_ylabel("cross-entropy")
        a.legend(frameon=False)
        b.plot(epochs, [r["val_acc_std"] for r in rows], label="val accuracy")
        b.plot(epochs, [r["val_f1"] for r in rows], label="val weighted F1")
        b.set_xlabel("epoch")
        b.set_ylim(0, 1.02)
        b.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def cost_figure(reports: list[dict], path) -> Path:
    """FLOPs and peak memory against window length, log-log."""
    L = [r["window"] for r in reports]
    has_mem = all(r.get("peak_bytes") for r in reports)
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 2 if has_mem else 1, figsize=(7 if has_mem else 3.6, 2.8))
        axes = np.atleast_1d(axes)
        ax = axes[0]
        ax.loglog(L, [r["flops"] / 1e6 for r in reports], "o-", label="state-space model")
        ax.loglog(L, [r["attention_flops"] / 1e6 for r in reports], "s--", label="attention block")
        ax.set_xlabel("window length")
        ax.set_ylabel("MFLOPs per window")
        ax.legend(frameon=False)
        if has_mem:
            axes[1].loglog(L, [r["peak_bytes"] / 2**20 for r in reports], "o-")
            axes[1].set_xlabel("window length")
            axes[1].set_ylabel("peak MiB (forward + backward)")
        fig.tight_layout()
        return _save(fig, path)


def ablation_figure(rows: list[dict], path, title: str = "") -> Path:
    names = [r["variant"] for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(3.0, 1.3 * len(rows)), 2.8))
        ax.bar(range(len(rows)), [r["f1_mean"] for r in rows], yerr=[r["f1_std"] for r in rows],
               color="#4c72b0", capsize=3)
        ax.set_xticks(range(len(rows)), names, rotation=15, ha="right")
        ax.set_ylabel("weighted F1")
        ax.set_title(title)
        lo = min(r["f1_mean"] - r["f1_std"] for r in rows)
        ax.set_ylim(max(0.0, lo - 0.05), 1.0)
        return _save(fig, path)
