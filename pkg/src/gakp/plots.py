"""Report figures written to files: training curves, the association-mode
comparison and a trajectory overview. Uses the non-interactive Agg backend."""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402
import numpy as np  # noqa: E402

plt.rc("axes", linewidth=0.6)
plt.rc("font", size=9)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_training(history, path):
    """Per-epoch BCE loss, plus validation AUC on a second axis when
    present."""
    fig, ax = plt.subplots(figsize=(5, 3))
    epochs = np.arange(1, len(history.train_loss) + 1)
    ax.plot(epochs, history.train_loss, "o-", ms=3, label="train loss")
    if history.val_loss:
        ax.plot(epochs, history.val_loss, "s--", ms=3, label="validation loss")
    ax.set_xlabel("epoch")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_ylabel("binary cross-entropy")
    if len(epochs) and min(history.train_loss) > 0:
        ax.set_yscale("log")
    lines, labels = ax.get_legend_handles_labels()
    if history.val_auc:
        ax2 = ax.twinx()
        ax2.plot(epochs, history.val_auc, "^:", ms=3, color="tab:green", label="validation AUC")
        ax2.set_ylabel("AUC")
        ax2.set_ylim(0.5, 1.0)
        l2, lab2 = ax2.get_legend_handles_labels()
        lines, labels = lines + l2, labels + lab2
    ax.legend(lines, labels, frameon=False, loc="center right")
    return _save(fig, path)


def plot_ablation(reports, names, path):
    """MOTA and ID switches per association mode, side by side."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(7, 2.8))
    x = np.arange(len(names))
    a1.bar(x, [100 * r.mota for r in reports], color="tab:blue")
    a1.set_ylabel("MOTA (%)")
    a2.bar(x, [r.ids for r in reports], color="tab:red")
    a2.set_ylabel("ID switches")
    for ax in (a1, a2):
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=20)
    lo = min(100 * r.mota for r in reports)
    a1.set_ylim(max(0.0, lo - 10), 100)
    fig.tight_layout()
    return _save(fig, path)


def plot_trajectories(gt, results, path, image_size=(1920, 1080)):
    """Box centers over time: ground truth as thin grey lines, tracker
    output colored by track id."""
    fig, ax = plt.subplots(figsize=(6, 3.4))
    for table, style in ((gt, dict(color="0.7", lw=0.8)), (results, None)):
        for tid in np.unique(table.ids):
            sel = table.ids == tid
            b = table.boxes[sel][np.argsort(table.frames[sel])]
            c = b[:, :2] + b[:, 2:] / 2
            if style:
                ax.plot(c[:, 0], c[:, 1], **style)
            else:
                ax.plot(c[:, 0], c[:, 1], ".", ms=1.5)
    ax.set_xlim(0, image_size[0])
    ax.set_ylim(image_size[1], 0)
    ax.set_xlabel("u (px)")
    ax.set_ylabel("v (px)")
    return _save(fig, path)
