"""Evaluation protocol: balanced/unbalanced accuracy, per-chunk prediction
with per-video aggregation, the 15-combination sweep, and embedding dumps
for external visualization.
"""

from __future__ import annotations

import csv
import math
import traceback
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .dataset import CHUNK_LEN, DatasetIndex, Modality, canonical_combo, enumerate_chunks, load_stack, stacks_to_tensor
from .errors import ConfigError, DataError
from .modalities import ALL_MODALITIES
from .training import TrainConfig, joint_train, pretrain_action_classifier, pretrain_domain_classifier

EVAL_DOMAIN = "real"


def confusion_matrix(preds, truth, num_classes: int) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if preds.shape != truth.shape or preds.ndim != 1 or len(preds) < 1:
        raise ValueError("predictions and truth must be equal-length nonempty 1-D arrays")
    if truth.min() < 0 or truth.max() >= num_classes or preds.min() < 0 or preds.max() >= num_classes:
        raise ValueError(f"labels out of range [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (truth, preds), 1)
    return cm


def balanced_accuracy(preds, truth, num_classes: int) -> float:
    """Mean per-class recall over the classes present in truth."""
    cm = confusion_matrix(preds, truth, num_classes)
    counts = cm.sum(axis=1)
    present = counts > 0
    recalls = np.diag(cm)[present] / counts[present]
    return float(recalls.mean())


def unbalanced_accuracy(preds, truth, num_classes: int) -> float:
    cm = confusion_matrix(preds, truth, num_classes)
    return float(np.trace(cm) / cm.sum())


@dataclass(frozen=True)
class EvalReport:
    per_class_recall: np.ndarray  # NaN for classes absent from the test set
    balanced_accuracy: float
    unbalanced_accuracy: float
    confusion: np.ndarray
    n_samples: int
    combo: tuple[int, ...]
    domain_tag: str

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["combo", "-".join(str(m) for m in self.combo)])
            writer.writerow(["domain", self.domain_tag])
            writer.writerow(["n_samples", self.n_samples])
            writer.writerow(["balanced_accuracy", f"{self.balanced_accuracy:.6f}"])
            writer.writerow(["unbalanced_accuracy", f"{self.unbalanced_accuracy:.6f}"])
            writer.writerow(["class", "recall"])
            for c, r in enumerate(self.per_class_recall):
                writer.writerow([c, "" if math.isnan(r) else f"{r:.6f}"])


def _report(preds, truth, num_classes, combo, domain_tag) -> EvalReport:
    cm = confusion_matrix(preds, truth, num_classes)
    counts = cm.sum(axis=1)
    recall = np.full(num_classes, np.nan)
    present = counts > 0
    recall[present] = np.diag(cm)[present] / counts[present]
    return EvalReport(
        per_class_recall=recall,
        balanced_accuracy=float(recall[present].mean()),
        unbalanced_accuracy=float(np.trace(cm) / cm.sum()),
        confusion=cm,
        n_samples=int(cm.sum()),
        combo=tuple(int(m) for m in combo),
        domain_tag=domain_tag,
    )


def evaluate_model(
    ac_ckpt: str | Path,
    index: DatasetIndex,
    combo,
    domain_tag: str = EVAL_DOMAIN,
    chunk_len: int = CHUNK_LEN,
    batch_size: int = 8,
) -> EvalReport:
    """Per-chunk prediction with the center S-frame window, aggregated per
    video by mean logits, then balanced/unbalanced accuracy."""
    combo = canonical_combo(combo)
    ac = ckpt.load_model(ac_ckpt)
    if ac.kind != "AC":
        raise ConfigError(f"{ac_ckpt}: expected an AC checkpoint, found {ac.kind}")
    if ac.config.input_channels != 3 * len(combo):
        raise ConfigError(
            f"{ac_ckpt}: checkpoint expects {ac.config.input_channels} channels, combo {combo} provides {3 * len(combo)}"
        )
    seq_len = ac.config.seq_len
    sub = index.subset(domain_tag)
    if not sub.items:
        raise DataError(f"{index.root}: no videos in domain {domain_tag!r}")
    chunks = enumerate_chunks(sub, chunk_len)
    if not chunks:
        raise DataError(f"{index.root}: no {chunk_len}-frame chunks in domain {domain_tag!r}")

    center = (chunk_len - seq_len) // 2
    per_video_logits: dict[int, list[torch.Tensor]] = {}
    pending: list[tuple[int, object, int]] = []
    for c in chunks:
        pending.append((c.item_index, sub.items[c.item_index], c.start_frame + center))

    ac.eval()
    with torch.no_grad():
        for i in range(0, len(pending), batch_size):
            group = pending[i : i + batch_size]
            stacks = [load_stack(item, start, seq_len, combo) for _, item, start in group]
            x, _ = stacks_to_tensor(stacks)
            logits = ac(x)
            for (item_idx, _, _), row in zip(group, logits):
                per_video_logits.setdefault(item_idx, []).append(row)

    preds, truth = [], []
    for item_idx in sorted(per_video_logits):
        mean_logits = torch.stack(per_video_logits[item_idx]).mean(dim=0)
        preds.append(int(mean_logits.argmax()))
        truth.append(sub.items[item_idx].action_label)
    return _report(preds, truth, ac.config.num_actions, combo, domain_tag)


# --------------------------------------------------------------------------
# 15-combination sweep
# --------------------------------------------------------------------------

SWEEP_COLUMNS = (
    "combo",
    "status",
    "source_only_balanced",
    "source_only_unbalanced",
    "with_novel_balanced",
    "with_novel_unbalanced",
    "mean_diversity",
)


def all_combos(modalities=ALL_MODALITIES) -> list[tuple[int, ...]]:
    """The 15 nonempty modality subsets, by size then lexicographic ids."""
    ids = sorted(int(m) for m in modalities)
    out: list[tuple[int, ...]] = []
    for size in range(1, len(ids) + 1):
        out.extend(combinations(ids, size))
    return out


@dataclass
class SweepRow:
    combo: tuple[int, ...]
    status: str = "ok"
    source_only_balanced: float = float("nan")
    source_only_unbalanced: float = float("nan")
    with_novel_balanced: float = float("nan")
    with_novel_unbalanced: float = float("nan")
    mean_diversity: float = float("nan")


@dataclass
class SweepTable:
    rows: list[SweepRow]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                writer.writerow(
                    [
                        "-".join(str(m) for m in r.combo),
                        r.status,
                        *(f"{v:.6f}" if v == v else "" for v in (
                            r.source_only_balanced,
                            r.source_only_unbalanced,
                            r.with_novel_balanced,
                            r.with_novel_unbalanced,
                            r.mean_diversity,
                        )),
                    ]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "SweepTable":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                def fl(v):
                    return float(v) if v else float("nan")

                rows.append(
                    SweepRow(
                        combo=tuple(int(x) for x in rec["combo"].split("-")),
                        status=rec["status"],
                        source_only_balanced=fl(rec["source_only_balanced"]),
                        source_only_unbalanced=fl(rec["source_only_unbalanced"]),
                        with_novel_balanced=fl(rec["with_novel_balanced"]),
                        with_novel_unbalanced=fl(rec["with_novel_unbalanced"]),
                        mean_diversity=fl(rec["mean_diversity"]),
                    )
                )
        return cls(rows=rows)


def mean_metric_column(metrics_csv: str | Path, column: str) -> float:
    vals = []
    with open(metrics_csv, newline="") as fh:
        for rec in csv.DictReader(fh):
            vals.append(float(rec[column]))
    return float(np.mean(vals)) if vals else float("nan")


def run_sweep_row(
    base_cfg: TrainConfig,
    root: str | Path,
    combo: tuple[int, ...],
    dc_ckpt: str | Path,
    out_dir: str | Path,
    eval_domain: str = EVAL_DOMAIN,
    num_threads: int | None = None,
) -> SweepRow:
    """One sweep row: pretrain AC on the combo (source-only result), then
    joint-train a fresh DG with AC/AC_f copies (with-novel result), both
    evaluated on the shifted domain."""
    from .dataset import scan_dataset

    if num_threads is not None:
        torch.set_num_threads(num_threads)
    index = scan_dataset(root)
    cfg = replace(base_cfg, combo=combo)
    out_dir = Path(out_dir)
    row = SweepRow(combo=tuple(int(m) for m in combo))
    ac_ckpt = pretrain_action_classifier(cfg, index, out_dir / "pretrain")
    src_report = evaluate_model(ac_ckpt, index, combo, eval_domain, cfg.chunk_len, cfg.batch_size)
    row.source_only_balanced = src_report.balanced_accuracy
    row.source_only_unbalanced = src_report.unbalanced_accuracy

    result = joint_train(cfg, index, dc_ckpt, ac_ckpt, out_dir / "joint")
    nov_report = evaluate_model(result["ac"], index, combo, eval_domain, cfg.chunk_len, cfg.batch_size)
    row.with_novel_balanced = nov_report.balanced_accuracy
    row.with_novel_unbalanced = nov_report.unbalanced_accuracy
    row.mean_diversity = mean_metric_column(result["metrics"], "diversity")
    return row


def sweep_combinations(
    base_cfg: TrainConfig,
    root: str | Path,
    out_dir: str | Path,
    dc_ckpt: str | Path | None = None,
    eval_domain: str = EVAL_DOMAIN,
    jobs: int = 1,
    log=None,
) -> SweepTable:
    """Train and evaluate all 15 modality combinations, source-only and
    with-novel, reusing one pretrained DC. Failures are recorded per row and
    the sweep continues. Writes sweep.csv under out_dir."""
    from .dataset import scan_dataset

    root = Path(root)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if dc_ckpt is None:
        index = scan_dataset(root)
        dc_ckpt = pretrain_domain_classifier(base_cfg, index, out_dir / "dc_pretrain")

    combos = all_combos()
    rows: dict[tuple[int, ...], SweepRow] = {}

    def combo_dir(combo):
        return out_dir / ("combo_" + "-".join(str(m) for m in combo))

    if jobs <= 1:
        for combo in combos:
            try:
                rows[combo] = run_sweep_row(base_cfg, root, combo, dc_ckpt, combo_dir(combo), eval_domain)
            except Exception as exc:  # failed rows are recorded, sweep continues
                rows[combo] = SweepRow(combo=combo, status=f"failed: {exc}")
                traceback.print_exc()
            if log is not None:
                log(rows[combo])
    else:
        from concurrent.futures import ProcessPoolExecutor

        threads = max(1, torch.get_num_threads() // jobs)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(
                    run_sweep_row, base_cfg, root, combo, dc_ckpt, combo_dir(combo), eval_domain, threads
                ): combo
                for combo in combos
            }
            for future, combo in futures.items():
                try:
                    rows[combo] = future.result()
                except Exception as exc:
                    rows[combo] = SweepRow(combo=combo, status=f"failed: {exc}")
                if log is not None:
                    log(rows[combo])

    table = SweepTable(rows=[rows[c] for c in combos])
    table.to_csv(out_dir / "sweep.csv")
    return table


# --------------------------------------------------------------------------
# Embedding dump (external-visualization protocol)
# --------------------------------------------------------------------------


def dump_embeddings(
    dg_ckpt: str | Path,
    dc_ckpt: str | Path | None,
    index: DatasetIndex,
    out_path: str | Path,
    n_frames_per_video: int = 10,
    domain_tag: str = "synthetic",
    seed: int = 0,
) -> Path:
    """Sample n random frames per video; for each source modality write the
    generator's bottleneck embedding of the frame and of its generated novel
    counterpart (labels 0..3 source, 4..7 novel). Columns: modality_label,
    video_id, frame_index, e_0..e_{D-1}."""
    from .dataset import load_frame

    dg = ckpt.load_model(dg_ckpt)
    if dg.kind != "DG":
        raise ConfigError(f"{dg_ckpt}: expected a DG checkpoint, found {dg.kind}")
    if dc_ckpt is not None:
        ckpt.read_manifest(dc_ckpt)  # validated but not needed for DG embeddings

    sub = index.subset(domain_tag)
    if not sub.items:
        raise DataError(f"{index.root}: no videos in domain {domain_tag!r}")
    rng = np.random.default_rng(seed)
    out_path = Path(out_path)

    dim = dg.config.dg_channels[-1]
    header = ["modality_label", "video_id", "frame_index"] + [f"e_{i}" for i in range(dim)]
    dg.eval()
    with open(out_path, "w", newline="") as fh, torch.no_grad():
        writer = csv.writer(fh)
        writer.writerow(header)
        for item in sub.items:
            frames = rng.integers(0, item.frame_count, size=n_frames_per_video)
            for frame_idx in frames:
                for m in ALL_MODALITIES:
                    img = load_frame(item, m, int(frame_idx))
                    x = torch.from_numpy(img).permute(2, 0, 1)[None]
                    src_emb = dg.bottleneck(x)[0]
                    novel = dg(x)
                    nov_emb = dg.bottleneck(novel)[0]
                    for label, emb in ((int(m), src_emb), (int(m) + len(ALL_MODALITIES), nov_emb)):
                        writer.writerow([label, item.video_id, int(frame_idx)] + [f"{v:.6f}" for v in emb.tolist()])
    return out_path


def median(values) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))
