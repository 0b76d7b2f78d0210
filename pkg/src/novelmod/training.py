"""Three-phase training protocol: domain-classifier pretraining, action-
classifier pretraining on source modalities, and the joint generator +
classifier phase with the frozen DC and AC_f, with full checkpoint/restore.

Run directories are self-describing: effective config echo, manifest, metrics
CSV and checkpoints together allow a byte-identical reproduction of the run
in deterministic mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.optim import Adam

from . import checkpoint as ckpt
from .dataset import CHUNK_LEN, SEQ_LEN, ChunkSampler, DatasetIndex, canonical_combo, split_stack_tensor, stacks_to_tensor
from .errors import ConfigError, DataError, NumericalAbort
from .losses import LossReport, LossWeights, ac_task_loss, append_metrics_row, class_loss, cycle_loss, dg_objective, diversity_loss, novelty_loss
from .models import ActionClassifier, DomainGenerator, NetConfig, build_model, decay_param_groups, freeze_copy
from .modalities import ALL_MODALITIES
from .sinkhorn import SinkhornConfig

FUSED = "fused"  # loss-dict key for the early-fused stack
TRAIN_DOMAIN = "synthetic"

PAPER_AC_EPOCHS = 200
PAPER_JOINT_EPOCHS = 50
DESK_AC_EPOCHS = 30
DESK_JOINT_EPOCHS = 15
DEFAULT_BATCH = 8


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults follow the published settings, with the
    desk_scale flag switching phase lengths to the short presets."""

    combo: tuple[int, ...] = tuple(int(m) for m in ALL_MODALITIES)
    desk_scale: bool = True
    dc_epochs: int = 20
    ac_epochs: int | None = None  # 200 full scale, 30 desk scale
    joint_epochs: int | None = None  # 50 full scale, 15 desk scale
    batch_size: int = DEFAULT_BATCH
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 5e-5
    weights: LossWeights = field(default_factory=LossWeights)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    chunk_len: int = CHUNK_LEN
    seq_len: int = SEQ_LEN
    num_actions: int = 10
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "combo", tuple(int(m) for m in canonical_combo(self.combo)))
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")

    @property
    def effective_ac_epochs(self) -> int:
        if self.ac_epochs is not None:
            return self.ac_epochs
        return DESK_AC_EPOCHS if self.desk_scale else PAPER_AC_EPOCHS

    @property
    def effective_joint_epochs(self) -> int:
        if self.joint_epochs is not None:
            return self.joint_epochs
        return DESK_JOINT_EPOCHS if self.desk_scale else PAPER_JOINT_EPOCHS

    def net_config(self) -> NetConfig:
        make = NetConfig.desk if self.desk_scale else NetConfig.paper
        return make(num_modalities=len(self.combo), num_actions=self.num_actions, seq_len=self.seq_len)

    def to_dict(self) -> dict:
        d = {
            "combo": list(self.combo),
            "desk_scale": self.desk_scale,
            "dc_epochs": self.dc_epochs,
            "ac_epochs": self.effective_ac_epochs,
            "joint_epochs": self.effective_joint_epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "weight_decay": self.weight_decay,
            "lambda_c": self.weights.lambda_c,
            "lambda_r": self.weights.lambda_r,
            "lambda_d": self.weights.lambda_d,
            "alpha": self.weights.alpha,
            "sinkhorn_epsilon": self.sinkhorn.epsilon,
            "sinkhorn_epsilon_scale": self.sinkhorn.epsilon_scale,
            "sinkhorn_max_iterations": self.sinkhorn.max_iterations,
            "sinkhorn_tolerance": self.sinkhorn.tolerance,
            "chunk_len": self.chunk_len,
            "seq_len": self.seq_len,
            "num_actions": self.num_actions,
            "seed": self.seed,
            "deterministic": self.deterministic,
        }
        return d


def apply_determinism(cfg: TrainConfig) -> None:
    torch.manual_seed(cfg.seed)
    if cfg.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)


def _write_run_files(run_dir: Path, cfg: TrainConfig, phase: str, extra: dict | None = None) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={v}" for k, v in sorted(cfg.to_dict().items())]
    (run_dir / "config.txt").write_text("\n".join(lines) + "\n")
    manifest = {"phase": phase, "config": cfg.to_dict()}
    if extra:
        manifest.update(extra)
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def _train_index(index: DatasetIndex) -> DatasetIndex:
    sub = index.subset(TRAIN_DOMAIN)
    if not sub.items:
        raise DataError(f"{index.root}: no videos in the {TRAIN_DOMAIN!r} training domain")
    return sub


def _make_optimizer(model, cfg: TrainConfig) -> Adam:
    return Adam(decay_param_groups(model, cfg.weight_decay), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))


def steps_per_epoch(sampler: ChunkSampler, batch_size: int) -> int:
    return max(1, -(-sampler.num_chunks // batch_size))


# --------------------------------------------------------------------------
# Phase 1: domain classifier
# --------------------------------------------------------------------------


def pretrain_domain_classifier(cfg: TrainConfig, index: DatasetIndex, out_dir: str | Path, log_step=None) -> Path:
    """Train DC with cross-entropy on 4-way modality labels over single
    frames; returns the checkpoint directory, with the final modality
    accuracy in its manifest."""
    from .dataset import load_frame

    out_dir = Path(out_dir)
    apply_determinism(cfg)
    train = _train_index(index)
    net_cfg = cfg.net_config()
    dc = build_model("DC", net_cfg, seed=cfg.seed)
    opt = _make_optimizer(dc, cfg)
    sampler = ChunkSampler(train, cfg.chunk_len, cfg.seq_len, seed=cfg.seed + 1)
    spe = steps_per_epoch(sampler, cfg.batch_size)

    def frame_batch(sampler: ChunkSampler):
        images, labels = [], []
        for item, start in sampler.draw(cfg.batch_size):
            for m in ALL_MODALITIES:
                images.append(load_frame(item, m, start))
                labels.append(int(m))
        x = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).contiguous()
        return x, torch.tensor(labels, dtype=torch.long)

    _write_run_files(out_dir, cfg, "pretrain-dc")
    metrics_path = out_dir / "metrics.csv"
    step = 0
    for _epoch in range(cfg.dc_epochs):
        for _ in range(spe):
            x, y = frame_batch(sampler)
            logits, _ = dc(x)
            loss = torch.nn.functional.cross_entropy(logits, y)
            if not torch.isfinite(loss):
                raise NumericalAbort("DC pretraining loss is not finite", step=step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            _append_simple_row(metrics_path, step, float(loss.detach()))
            if log_step is not None:
                log_step(step, float(loss.detach()))
            step += 1

    eval_sampler = ChunkSampler(train, cfg.chunk_len, cfg.seq_len, seed=cfg.seed + 917)
    correct = total = 0
    with torch.no_grad():
        for _ in range(8):
            x, y = frame_batch(eval_sampler)
            logits, _ = dc(x)
            correct += int((logits.argmax(dim=1) == y).sum())
            total += len(y)
    accuracy = correct / total
    ckpt_dir = out_dir / "dc"
    ckpt.save_model(dc, ckpt_dir, epoch=cfg.dc_epochs, seed=cfg.seed, metrics={"modality_accuracy": accuracy})
    return ckpt_dir


def _append_simple_row(path: Path, step: int, loss: float) -> None:
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a") as fh:
        if new:
            fh.write("step,loss\n")
        fh.write(f"{step},{loss:.9g}\n")


# --------------------------------------------------------------------------
# Phase 2: action classifier on source modalities
# --------------------------------------------------------------------------


def pretrain_action_classifier(cfg: TrainConfig, index: DatasetIndex, out_dir: str | Path, log_step=None) -> Path:
    """Train AC with cross-entropy on fused source stacks only. An epoch
    count of zero saves the randomly initialized network (warm-start stub)."""
    out_dir = Path(out_dir)
    apply_determinism(cfg)
    train = _train_index(index)
    net_cfg = cfg.net_config()
    ac = build_model("AC", net_cfg, seed=cfg.seed)
    opt = _make_optimizer(ac, cfg)
    sampler = ChunkSampler(train, cfg.chunk_len, cfg.seq_len, seed=cfg.seed + 2)
    spe = steps_per_epoch(sampler, cfg.batch_size)

    _write_run_files(out_dir, cfg, "pretrain-ac")
    metrics_path = out_dir / "metrics.csv"
    step = 0
    for _epoch in range(cfg.effective_ac_epochs):
        for _ in range(spe):
            stacks = sampler.draw_stacks(cfg.batch_size, cfg.combo)
            x, y = stacks_to_tensor(stacks)
            loss = torch.nn.functional.cross_entropy(ac(x), y)
            if not torch.isfinite(loss):
                raise NumericalAbort("AC pretraining loss is not finite", step=step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            _append_simple_row(metrics_path, step, float(loss.detach()))
            if log_step is not None:
                log_step(step, float(loss.detach()))
            step += 1
    ckpt_dir = out_dir / "ac"
    ckpt.save_model(ac, ckpt_dir, epoch=cfg.effective_ac_epochs, seed=cfg.seed, metrics={})
    return ckpt_dir


# --------------------------------------------------------------------------
# Phase 3: joint generator + classifier training
# --------------------------------------------------------------------------


def _load_compatible(kind: str, directory: str | Path, cfg: TrainConfig):
    model = ckpt.load_model(directory)
    if model.kind != kind:
        raise ConfigError(f"{directory}: expected a {kind} checkpoint, found {model.kind}")
    expected = cfg.net_config()
    if model.config != expected:
        raise ConfigError(
            f"{directory}: checkpoint config conflicts with the run config "
            f"(stored {model.config}, requested {expected})"
        )
    return model


def _frames_view(per_k: dict[int, torch.Tensor]) -> tuple[torch.Tensor, list[int], int]:
    """Flatten per-modality (B, 3, S, H, W) blocks into one (sum B*S, 3, H, W)
    image batch for the single-frame models; returns keys and per-key count."""
    keys = sorted(per_k)
    tensors = []
    per_count = None
    for k in keys:
        block = per_k[k]
        b, c, s, h, w = block.shape
        flat = block.permute(0, 2, 1, 3, 4).reshape(b * s, c, h, w)
        per_count = flat.shape[0]
        tensors.append(flat)
    return torch.cat(tensors, dim=0), keys, per_count


def _frames_unview(flat: torch.Tensor, keys: list[int], per_count: int, like: dict[int, torch.Tensor]) -> dict[int, torch.Tensor]:
    out = {}
    for i, k in enumerate(keys):
        b, c, s, h, w = like[k].shape
        chunk = flat[i * per_count : (i + 1) * per_count]
        out[k] = chunk.reshape(b, s, c, h, w).permute(0, 2, 1, 3, 4)
    return out


@dataclass
class JointState:
    epoch: int = 0
    global_step: int = 0


def _save_run_state(
    state_dir: Path,
    js: JointState,
    dg: DomainGenerator,
    ac: ActionClassifier,
    opt_dg: Adam,
    opt_ac: Adam,
    sampler: ChunkSampler,
) -> None:
    state_dir.mkdir(parents=True, exist_ok=True)
    ckpt.save_model(dg, state_dir / "dg", epoch=js.epoch)
    ckpt.save_model(ac, state_dir / "ac", epoch=js.epoch)
    for name, opt, model in (("opt_dg", opt_dg, dg), ("opt_ac", opt_ac, ac)):
        tensors = _optimizer_tensors(opt, model)
        index = ckpt.write_tensor_blob(state_dir / f"{name}.bin", tensors)
        (state_dir / f"{name}.json").write_text(json.dumps(index, sort_keys=True))
    (state_dir / "torch_rng.bin").write_bytes(torch.get_rng_state().numpy().tobytes())
    progress = {
        "epoch": js.epoch,
        "global_step": js.global_step,
        "sampler_state": sampler.state(),
    }
    (state_dir / "progress.json").write_text(json.dumps(progress, sort_keys=True))


def _optimizer_tensors(opt: Adam, model) -> dict[str, np.ndarray]:
    names = {id(p): n for n, p in model.named_parameters()}
    out: dict[str, np.ndarray] = {}
    for group in opt.param_groups:
        for p in group["params"]:
            state = opt.state.get(p)
            if not state:
                continue
            base = names[id(p)]
            out[f"{base}.step"] = np.asarray(state["step"], dtype=np.float32).reshape(1)
            out[f"{base}.exp_avg"] = state["exp_avg"].detach().cpu().numpy()
            out[f"{base}.exp_avg_sq"] = state["exp_avg_sq"].detach().cpu().numpy()
    return out


def _restore_optimizer(opt: Adam, model, blob_path: Path, index_path: Path) -> None:
    index = json.loads(index_path.read_text())
    tensors = ckpt.read_tensor_blob(blob_path, index)
    by_name = dict(model.named_parameters())
    for group in opt.param_groups:
        for p in group["params"]:
            name = next(n for n, q in by_name.items() if q is p)
            key = f"{name}.step"
            if key not in tensors:
                continue
            opt.state[p] = {
                "step": torch.tensor(float(tensors[key][0])),
                "exp_avg": torch.from_numpy(tensors[f"{name}.exp_avg"]).clone(),
                "exp_avg_sq": torch.from_numpy(tensors[f"{name}.exp_avg_sq"]).clone(),
            }


def joint_train(
    cfg: TrainConfig,
    index: DatasetIndex,
    dc_ckpt: str | Path,
    ac_ckpt: str | Path,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
    stop_after_epoch: int | None = None,
    log_progress=None,
    log_step=None,
) -> dict:
    """Joint phase: per iteration the generator transforms every frame of
    every modality into the novel counterpart, losses are assembled per the
    composite objectives, and DG and AC take separate Adam steps from the
    same batch while DC and AC_f stay frozen.

    Returns a dict with checkpoint paths and the metrics CSV path. Passing
    stop_after_epoch simulates an interruption: the run saves its state and
    returns early; resume_from continues from a saved run directory.
    """
    out_dir = Path(out_dir)
    apply_determinism(cfg)
    train = _train_index(index)
    combo = canonical_combo(cfg.combo)

    dc = _load_compatible("DC", dc_ckpt, cfg)
    dc.freeze_()
    ac = _load_compatible("AC", ac_ckpt, cfg)
    acf = freeze_copy(ac)
    dg = build_model("DG", cfg.net_config(), seed=cfg.seed + 10)

    opt_dg = _make_optimizer(dg, cfg)
    opt_ac = _make_optimizer(ac, cfg)
    sampler = ChunkSampler(train, cfg.chunk_len, cfg.seq_len, seed=cfg.seed + 3)
    js = JointState()

    _write_run_files(out_dir, cfg, "joint")
    metrics_path = out_dir / "metrics.csv"
    state_dir = out_dir / "state"
    if resume_from is None and metrics_path.exists():
        metrics_path.unlink()

    if resume_from is not None:
        resume_from = Path(resume_from)
        src_state = resume_from / "state"
        dg = ckpt.load_model(src_state / "dg")
        ac = ckpt.load_model(src_state / "ac")
        opt_dg = _make_optimizer(dg, cfg)
        opt_ac = _make_optimizer(ac, cfg)
        _restore_optimizer(opt_dg, dg, src_state / "opt_dg.bin", src_state / "opt_dg.json")
        _restore_optimizer(opt_ac, ac, src_state / "opt_ac.bin", src_state / "opt_ac.json")
        progress = json.loads((src_state / "progress.json").read_text())
        js = JointState(epoch=progress["epoch"], global_step=progress["global_step"])
        sampler.set_state(progress["sampler_state"])
        rng_bytes = (src_state / "torch_rng.bin").read_bytes()
        torch.set_rng_state(torch.from_numpy(np.frombuffer(rng_bytes, dtype=np.uint8).copy()))
        if resume_from != out_dir:
            existing = (resume_from / "metrics.csv").read_bytes() if (resume_from / "metrics.csv").exists() else b""
            metrics_path.write_bytes(existing)

    spe = steps_per_epoch(sampler, cfg.batch_size)
    freeze_hashes: list[dict] = []
    for epoch in range(js.epoch, cfg.effective_joint_epochs):
        for _ in range(spe):
            batch = sampler.draw_stacks(cfg.batch_size, combo)
            fused_src, labels = stacks_to_tensor(batch)
            src_k = split_stack_tensor(fused_src, combo)
            batch_id = ";".join(s.video_id for s in batch)

            # Generator pass over every frame of every modality (S=1 each),
            # batched as one image tensor, then reassembled into sequences.
            src_flat, keys, per_count = _frames_view(src_k)
            nov_flat = dg(src_flat)
            nov_k = _frames_unview(nov_flat, keys, per_count, src_k)
            fused_nov = torch.cat([nov_k[k] for k in keys], dim=1)

            # Embeddings through the frozen DC; source side needs no graph.
            with torch.no_grad():
                _, src_emb_flat = dc(src_flat)
            _, nov_emb_flat = dc(nov_flat)
            src_embs = {k: src_emb_flat[i * per_count : (i + 1) * per_count] for i, k in enumerate(keys)}
            nov_embs = {k: nov_emb_flat[i * per_count : (i + 1) * per_count] for i, k in enumerate(keys)}

            report = LossReport()
            report.novelty = novelty_loss(src_embs, nov_embs, cfg.sinkhorn)
            report.diversity = diversity_loss(nov_embs, cfg.sinkhorn)
            report.class_term = class_loss({FUSED: acf(fused_nov)}, {FUSED: labels})
            report.cycle = cycle_loss(dg, {FUSED: src_flat}, {FUSED: nov_flat})
            dg_total = dg_objective(report, cfg.weights)
            report.dg_total = dg_total

            opt_dg.zero_grad()
            dg_total.backward()
            opt_dg.step()

            # AC trains on the same batch; the novel stacks act as augmented
            # data, detached so the classifier loss does not steer DG.
            src_logits = ac(fused_src)
            nov_logits = ac(fused_nov.detach())
            ac_loss = ac_task_loss({FUSED: src_logits}, {FUSED: nov_logits}, {FUSED: labels}, cfg.weights.alpha)
            report.ac_task = ac_loss
            opt_ac.zero_grad()
            ac_loss.backward()
            opt_ac.step()

            if not report.all_finite():
                raise NumericalAbort(
                    f"non-finite loss at step {js.global_step} (batch {batch_id})",
                    step=js.global_step,
                    batch_id=batch_id,
                )
            append_metrics_row(metrics_path, js.global_step, report)
            if log_step is not None:
                log_step(js.global_step, report.detached())
            js.global_step += 1
        js.epoch = epoch + 1
        freeze_hashes.append({"epoch": js.epoch, "dc": dc.parameter_hash(), "acf": acf.parameter_hash()})
        _save_run_state(state_dir, js, dg, ac, opt_dg, opt_ac, sampler)
        if log_progress is not None:
            log_progress(epoch, js.global_step)
        if stop_after_epoch is not None and js.epoch >= stop_after_epoch:
            return {
                "interrupted": True,
                "run_dir": out_dir,
                "metrics": metrics_path,
                "epoch": js.epoch,
                "freeze_hashes": freeze_hashes,
            }

    dg_dir = ckpt.save_model(dg, out_dir / "dg", epoch=js.epoch, seed=cfg.seed)
    ac_dir = ckpt.save_model(ac, out_dir / "ac", epoch=js.epoch, seed=cfg.seed)
    return {
        "interrupted": False,
        "run_dir": out_dir,
        "metrics": metrics_path,
        "dg": dg_dir,
        "ac": ac_dir,
        "epoch": js.epoch,
        "freeze_hashes": freeze_hashes,
    }
