"""Optional static plots derived from run CSVs (no interactive UI)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def plot_losses(metrics_csv: str | Path, out_png: str | Path) -> Path:
    steps, series = [], {}
    with open(metrics_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        columns = [c for c in reader.fieldnames if c != "step"]
        for rec in reader:
            steps.append(int(rec["step"]))
            for c in columns:
                series.setdefault(c, []).append(float(rec[c]))
    fig, ax = plt.subplots(figsize=(8, 5))
    for name, vals in series.items():
        ax.plot(steps, vals, label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)


def plot_sweep(table, out_png: str | Path) -> Path:
    labels = ["-".join(str(m) for m in r.combo) for r in table.rows]
    src = [r.source_only_balanced for r in table.rows]
    nov = [r.with_novel_balanced for r in table.rows]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(10, 5))
    ax.bar(x - 0.2, src, width=0.4, label="source only")
    ax.bar(x + 0.2, nov, width=0.4, label="with novel")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=60, fontsize=7)
    ax.set_ylabel("balanced accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)


def plot_confusion(report, out_png: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(report.confusion, cmap="Blues")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)
