"""Generator and classifier loss terms and the two composite objectives.

Sign convention: novelty and diversity are returned as positive quantities;
the generator objective maximizes them by subtracting them (weighted) inside
dg_objective. No gradient-reversal tricks.

Per-modality inputs are dicts keyed by modality id so mismatched modality
sets fail loudly. Reduction is mean over the batch within each term, sum over
modalities, which keeps the loss weights scale-free in the batch size.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Union

import torch
import torch.nn.functional as F

from .sinkhorn import SinkhornConfig, sinkhorn_distance

Scalar = Union[float, torch.Tensor]

METRICS_COLUMNS = ("step", "novelty", "diversity", "class", "cycle", "dg_total", "ac_task")


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 1.0
    lambda_r: float = 10.0
    lambda_d: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if min(self.lambda_c, self.lambda_r, self.lambda_d, self.alpha) < 0:
            raise ValueError("loss weights must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass
class LossReport:
    """Per-step scalars; holds live tensors during a step, floats once detached."""

    novelty: Scalar = 0.0
    diversity: Scalar = 0.0
    class_term: Scalar = 0.0
    cycle: Scalar = 0.0
    dg_total: Scalar = 0.0
    ac_task: Scalar = 0.0

    def detached(self) -> "LossReport":
        vals = {}
        for f in fields(self):
            v = getattr(self, f.name)
            vals[f.name] = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        return LossReport(**vals)

    def all_finite(self) -> bool:
        return all(
            torch.isfinite(v.detach()).all() if isinstance(v, torch.Tensor) else v == v and abs(v) != float("inf")
            for v in (getattr(self, f.name) for f in fields(self))
        )


def _check_same_keys(a: dict, b: dict, what: str) -> list[int]:
    if set(a) != set(b):
        raise ValueError(f"{what}: modality sets differ: {sorted(a)} vs {sorted(b)}")
    return sorted(a)


def novelty_loss(
    src_embs: dict[int, torch.Tensor],
    nov_embs: dict[int, torch.Tensor],
    cfg: SinkhornConfig = SinkhornConfig(),
) -> torch.Tensor:
    """Sum over modalities of the Sinkhorn divergence between the generated
    and the source embedding batches. Positive; maximized by the generator."""
    keys = _check_same_keys(src_embs, nov_embs, "novelty_loss")
    total = 0.0
    for k in keys:
        total = total + sinkhorn_distance(nov_embs[k], src_embs[k], cfg).value
    return total if isinstance(total, torch.Tensor) else torch.tensor(total)


def diversity_loss(nov_embs: dict[int, torch.Tensor], cfg: SinkhornConfig = SinkhornConfig()) -> torch.Tensor:
    """Sum of divergences over all ORDERED pairs of generated modalities, as
    the double sum is written; with a symmetric divergence this is twice the
    unordered-pair sum. Zero when fewer than two modalities are active."""
    keys = sorted(nov_embs)
    if len(keys) < 2:
        some = next(iter(nov_embs.values()), None)
        return torch.zeros((), dtype=some.dtype if some is not None else torch.float32)
    total = 0.0
    for k in keys:
        for l in keys:
            if k == l:
                continue
            total = total + sinkhorn_distance(nov_embs[k], nov_embs[l], cfg).value
    return total


def _checked_cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError(f"labels must lie in [0, {logits.shape[1]}), got range [{labels.min()}, {labels.max()}]")
    return F.cross_entropy(logits, labels)


def class_loss(acf_logits: dict[int, torch.Tensor], labels: dict[int, torch.Tensor]) -> torch.Tensor:
    """Sum over modalities of the frozen classifier's cross-entropy on the
    generated modalities; the semantic-consistency term."""
    keys = _check_same_keys(acf_logits, labels, "class_loss")
    total = 0.0
    for k in keys:
        total = total + _checked_cross_entropy(acf_logits[k], labels[k])
    return total


def cycle_loss(
    dg,
    src_images: dict[int, torch.Tensor],
    novel_images: dict[int, torch.Tensor] | None = None,
) -> torch.Tensor:
    """Sum over modalities of mean |DG(DG(X)) - X|. When the first generator
    pass is already available as novel_images it is reused instead of being
    recomputed."""
    total = 0.0
    for k in sorted(src_images):
        first = novel_images[k] if novel_images is not None else dg(src_images[k])
        recon = dg(first)
        total = total + (recon - src_images[k]).abs().mean()
    return total


def dg_objective(parts: LossReport, w: LossWeights = LossWeights()) -> Scalar:
    """The generator's scalar to minimize: weighted class + cycle terms minus
    the weighted novelty + diversity terms (those are maximized)."""
    return w.lambda_c * parts.class_term + w.lambda_r * parts.cycle - w.lambda_d * (parts.novelty + parts.diversity)


def ac_task_loss(
    src_logits: dict[int, torch.Tensor],
    nov_logits: dict[int, torch.Tensor],
    labels: dict[int, torch.Tensor],
    alpha: float = 0.5,
) -> torch.Tensor:
    """The action classifier's objective: per modality, an alpha-blend of the
    cross-entropy on source and on generated sequences, summed over modalities."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    keys = _check_same_keys(src_logits, nov_logits, "ac_task_loss")
    _check_same_keys(src_logits, labels, "ac_task_loss")
    total = 0.0
    for k in keys:
        total = total + alpha * _checked_cross_entropy(src_logits[k], labels[k])
        total = total + (1.0 - alpha) * _checked_cross_entropy(nov_logits[k], labels[k])
    return total


def append_metrics_row(path, step: int, report: LossReport) -> None:
    """Append one per-step row to the run metrics CSV, creating it (with
    header) on first use. Fixed float formatting keeps reruns byte-identical."""
    rep = report.detached()
    is_new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        if is_new:
            fh.write(",".join(METRICS_COLUMNS) + "\n")
        vals = (rep.novelty, rep.diversity, rep.class_term, rep.cycle, rep.dg_total, rep.ac_task)
        fh.write(str(step) + "," + ",".join(f"{v:.9g}" for v in vals) + "\n")
