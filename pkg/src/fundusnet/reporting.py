"""Render evaluation and training outputs: JSON, CSV, and PNG figures.

The CLI report path writes, next to the machine-readable JSON, a small set
of delimited files and matplotlib figures so a run is reviewable without
any further tooling.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import ConfusionMatrix, EvalReport


def write_report_json(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_metrics_csv(report: EvalReport, path) -> None:
    d = report.to_json_dict()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["n", d["n"]])
        writer.writerow(["n_healthy", d["n_healthy"]])
        writer.writerow(["n_diseased", d["n_diseased"]])
        writer.writerow(["threshold", d["threshold"]])
        for cell in ("tn", "fp", "fn", "tp"):
            writer.writerow([cell, d["confusion"][cell]])
        for name, value in d["metrics"].items():
            writer.writerow([name, "" if value is None else repr(value)])


def write_roc_csv(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        if report.roc is not None:
            writer.writerows(report.roc.points)


def save_roc_figure(report: EvalReport, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    if report.roc is not None:
        xs = [p[0] for p in report.roc.points]
        ys = [p[1] for p in report.roc.points]
        ax.plot(xs, ys, color="tab:blue", lw=1.8)
        ax.set_title(f"ROC (area = {report.auroc:.3f})")
    else:
        ax.set_title("ROC undefined (single-class slice)")
    ax.plot([0, 1], [0, 1], color="gray", ls="--", lw=1)
    ax.set_xlabel("false positive rate (1 - specificity)")
    ax.set_ylabel("true positive rate (sensitivity)")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_confusion_figure(cm: ConfusionMatrix, path) -> None:
    grid = [[cm.tn, cm.fp], [cm.fn, cm.tp]]
    fig, ax = plt.subplots(figsize=(4.2, 4))
    im = ax.imshow(grid, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(grid[i][j]), ha="center", va="center",
                    color="black" if grid[i][j] < max(map(max, grid)) / 2 else "white")
    ax.set_xticks([0, 1], ["predicted healthy", "predicted diseased"])
    ax.set_yticks([0, 1], ["actual healthy", "actual diseased"])
    ax.set_title("confusion matrix")
    fig.colorbar(im, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_history_json(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([e.to_json_dict() for e in history], fh, indent=2)
        fh.write("\n")


def write_history_csv(history, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_accuracy", "val_loss",
                         "val_accuracy", "seconds"])
        for e in history:
            writer.writerow([e.epoch, repr(e.train_loss), repr(e.train_accuracy),
                             repr(e.val_loss), repr(e.val_accuracy), repr(e.seconds)])


def save_history_figure(history, path) -> None:
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 4))
    epochs = [e.epoch for e in history]
    ax_loss.plot(epochs, [e.train_loss for e in history], label="train", color="tab:blue")
    ax_loss.plot(epochs, [e.val_loss for e in history], label="validation", color="tab:orange")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("binary cross-entropy")
    ax_loss.legend()
    ax_acc.plot(epochs, [e.train_accuracy for e in history], label="train", color="tab:blue")
    ax_acc.plot(epochs, [e.val_accuracy for e in history], label="validation", color="tab:orange")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval_outputs(report: EvalReport, out_dir) -> dict:
    """Write report.json, metrics.csv, roc.csv, roc.png, confusion.png."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "metrics_csv": os.path.join(out_dir, "metrics.csv"),
        "roc_csv": os.path.join(out_dir, "roc.csv"),
        "roc_png": os.path.join(out_dir, "roc.png"),
        "confusion_png": os.path.join(out_dir, "confusion.png"),
    }
    write_report_json(report, paths["report"])
    write_metrics_csv(report, paths["metrics_csv"])
    write_roc_csv(report, paths["roc_csv"])
    save_roc_figure(report, paths["roc_png"])
    save_confusion_figure(report.confusion, paths["confusion_png"])
    return paths


def render_train_outputs(history, out_dir) -> dict:
    """Write history.json, history.csv, and the loss/accuracy curves figure."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "history_json": os.path.join(out_dir, "history.json"),
        "history_csv": os.path.join(out_dir, "history.csv"),
        "curves_png": os.path.join(out_dir, "training.png"),
    }
    write_history_json(history, paths["history_json"])
    write_history_csv(history, paths["history_csv"])
    save_history_figure(history, paths["curves_png"])
    return paths
