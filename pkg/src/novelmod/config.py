"""Flat key=value configuration shared by every CLI command.

A config file holds one `key=value` per line (# comments allowed); repeatable
--set overrides take precedence over file values. Unknown keys are rejected.
The resolved mapping is echoed into each run's manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from .errors import ConfigError
from .flow import FlowConfig
from .losses import LossWeights
from .modalities import Modality
from .sinkhorn import SinkhornConfig
from .toy import DEFAULT_SHIFTS, DomainShift, ToyConfig
from .training import TrainConfig

MODALITY_NAMES = {m.name.lower(): int(m) for m in Modality}


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _parse_combo(v: str) -> tuple[int, ...]:
    parts = [p.strip().lower() for p in v.replace("+", ",").split(",") if p.strip()]
    ids = []
    for p in parts:
        if p in MODALITY_NAMES:
            ids.append(MODALITY_NAMES[p])
        else:
            ids.append(int(p))
    return tuple(sorted(set(Modality(i) for i in ids)))


def _parse_opt_float(v: str) -> float | None:
    v = v.strip()
    return None if v in ("", "none", "adaptive") else float(v)


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable
    default: object
    help: str


def _shift_keys(domain: str, shift: DomainShift) -> list[Key]:
    return [
        Key(f"{domain}_texture_strength", float, shift.texture_strength, f"{domain} background texture contrast"),
        Key(f"{domain}_noise_level", float, shift.noise_level, f"{domain} per-pixel noise std"),
        Key(f"{domain}_actor_brightness", float, shift.actor_brightness, f"{domain} stick-figure brightness factor"),
        Key(f"{domain}_actor_tint", float, shift.actor_tint, f"{domain} actor color randomization in [0,1]"),
        Key(f"{domain}_background_brightness", float, shift.background_brightness, f"{domain} background brightness factor"),
        Key(f"{domain}_keypoint_jitter", float, shift.keypoint_jitter, f"{domain} reported-keypoint jitter std (px)"),
        Key(f"{domain}_confidence_lo", float, shift.confidence_range[0], f"{domain} min keypoint confidence"),
        Key(f"{domain}_confidence_hi", float, shift.confidence_range[1], f"{domain} max keypoint confidence"),
    ]


_KEY_LIST: list[Key] = [
    # toy benchmark generation
    Key("num_actions", int, 10, "number of action classes (10 motion programs)"),
    Key("videos_per_action", int, 3, "videos per action per domain"),
    Key("frames_per_video", int, 90, "frames per video (>= 90)"),
    Key("data_seed", int, 0, "seed fully determining toy dataset content"),
    Key("frame_size", int, 112, "square frame size in px (default 112)"),
    Key("fps", float, 30.0, "nominal frame rate of the toy motion programs"),
    *_shift_keys("synthetic", DEFAULT_SHIFTS["synthetic"]),
    *_shift_keys("real", DEFAULT_SHIFTS["real"]),
    # modality extraction
    Key("sigma", float, 6.0, "heatmap Gaussian std in px (default 6)"),
    Key("line_width", int, 2, "limb line width in px"),
    Key("max_magnitude", float, 10.0, "flow magnitude mapped to full value in the flow image"),
    Key("edges_file", str, "", "skeleton edge list JSON (empty = bundled COCO-17)"),
    Key("flow_levels", int, 3, "flow pyramid levels"),
    Key("flow_scale", float, 0.5, "flow pyramid scale"),
    Key("flow_window", int, 15, "flow averaging window in px"),
    Key("flow_iterations", int, 3, "flow iterations per level"),
    Key("flow_poly_n", int, 5, "flow polynomial-expansion neighborhood"),
    Key("flow_poly_sigma", float, 1.1, "flow polynomial-expansion std"),
    # training
    Key("combo", _parse_combo, (0, 1, 2, 3), "modality subset, ids or names (e.g. rgb,heatmaps)"),
    Key("desk_scale", _parse_bool, True, "desk-scale presets (small widths, 30/15 epochs)"),
    Key("dc_epochs", int, 20, "domain-classifier pretraining epochs (default 20)"),
    Key("ac_epochs", _parse_opt_float, None, "action-classifier pretraining epochs (default 200; desk 30)"),
    Key("joint_epochs", _parse_opt_float, None, "joint-phase epochs (default 50; desk 15)"),
    Key("batch_size", int, 8, "mini-batch size B (default 8)"),
    Key("lr", float, 1e-4, "Adam learning rate (default 1e-4)"),
    Key("beta1", float, 0.5, "Adam beta1 (default 0.5)"),
    Key("beta2", float, 0.999, "Adam beta2 (default 0.999)"),
    Key("weight_decay", float, 5e-5, "weight decay on non-norm weights (default 5e-5)"),
    Key("lambda_c", float, 1.0, "classification-loss weight (default 1)"),
    Key("lambda_r", float, 10.0, "reconstruction-loss weight (default 10)"),
    Key("lambda_d", float, 1.0, "novelty+diversity weight (default 1)"),
    Key("alpha", float, 0.5, "source/novel blend in the task loss (default 0.5)"),
    Key("sinkhorn_epsilon", _parse_opt_float, None, "entropic regularizer; empty = 0.05 * mean cost"),
    Key("sinkhorn_epsilon_scale", float, 0.05, "adaptive epsilon scale"),
    Key("sinkhorn_max_iterations", int, 200, "Sinkhorn iteration cap"),
    Key("sinkhorn_tolerance", float, 1e-6, "Sinkhorn marginal-residual tolerance"),
    Key("chunk_len", int, 90, "chunk length in frames (default 90)"),
    Key("seq_len", int, 16, "sampled window length S (default 16)"),
    Key("seed", int, 0, "training seed"),
    Key("deterministic", _parse_bool, True, "deterministic mode (byte-identical reruns)"),
    # evaluation / dumps
    Key("eval_domain", str, "real", "domain tag evaluated against"),
    Key("n_frames_per_video", int, 10, "frames sampled per video for embedding dumps"),
]

REGISTRY: dict[str, Key] = {k.name: k for k in _KEY_LIST}


def defaults() -> dict:
    return {k.name: k.default for k in _KEY_LIST}


def parse_config(path: str | Path | None, overrides: list[str] | None = None) -> dict:
    """Resolve file values and overrides against the registry defaults."""
    values = defaults()

    def apply(name: str, raw: str, origin: str) -> None:
        key = REGISTRY.get(name)
        if key is None:
            raise ConfigError(f"{origin}: unknown config key {name!r}")
        try:
            values[name] = key.parse(raw) if isinstance(raw, str) else raw
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{origin}: bad value for {name!r}: {exc}") from exc

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"{path}: config file not found")
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            name, raw = line.split("=", 1)
            apply(name.strip(), raw.strip(), f"{path}:{lineno}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        name, raw = item.split("=", 1)
        apply(name.strip(), raw.strip(), f"--set {name.strip()}")
    return values


def toy_config(values: dict) -> ToyConfig:
    def shift(domain: str) -> DomainShift:
        return DomainShift(
            texture_strength=values[f"{domain}_texture_strength"],
            noise_level=values[f"{domain}_noise_level"],
            actor_brightness=values[f"{domain}_actor_brightness"],
            actor_tint=values[f"{domain}_actor_tint"],
            background_brightness=values[f"{domain}_background_brightness"],
            keypoint_jitter=values[f"{domain}_keypoint_jitter"],
            confidence_range=(values[f"{domain}_confidence_lo"], values[f"{domain}_confidence_hi"]),
        )

    size = int(values["frame_size"])
    try:
        return ToyConfig(
            num_actions=values["num_actions"],
            videos_per_action=values["videos_per_action"],
            frames_per_video=values["frames_per_video"],
            seed=values["data_seed"],
            frame_size=(size, size),
            fps=values["fps"],
            shift_params={"synthetic": shift("synthetic"), "real": shift("real")},
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def extract_config(values: dict):
    from .extract import ExtractConfig
    from .modalities import load_edges

    edges = load_edges(values["edges_file"]) if values["edges_file"] else None
    try:
        return ExtractConfig(
            sigma=values["sigma"],
            line_width=values["line_width"],
            max_magnitude=values["max_magnitude"],
            flow=FlowConfig(
                pyramid_levels=values["flow_levels"],
                pyramid_scale=values["flow_scale"],
                window_size=values["flow_window"],
                iterations=values["flow_iterations"],
                poly_n=values["flow_poly_n"],
                poly_sigma=values["flow_poly_sigma"],
            ),
            edges=edges,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def train_config(values: dict) -> TrainConfig:
    def opt_int(v):
        return None if v is None else int(v)

    try:
        return TrainConfig(
            combo=values["combo"],
            desk_scale=values["desk_scale"],
            dc_epochs=values["dc_epochs"],
            ac_epochs=opt_int(values["ac_epochs"]),
            joint_epochs=opt_int(values["joint_epochs"]),
            batch_size=values["batch_size"],
            lr=values["lr"],
            beta1=values["beta1"],
            beta2=values["beta2"],
            weight_decay=values["weight_decay"],
            weights=LossWeights(
                lambda_c=values["lambda_c"],
                lambda_r=values["lambda_r"],
                lambda_d=values["lambda_d"],
                alpha=values["alpha"],
            ),
            sinkhorn=SinkhornConfig(
                epsilon=values["sinkhorn_epsilon"],
                epsilon_scale=values["sinkhorn_epsilon_scale"],
                max_iterations=values["sinkhorn_max_iterations"],
                tolerance=values["sinkhorn_tolerance"],
            ),
            chunk_len=values["chunk_len"],
            seq_len=values["seq_len"],
            num_actions=values["num_actions"],
            seed=values["seed"],
            deterministic=values["deterministic"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def describe_keys() -> str:
    lines = []
    for k in _KEY_LIST:
        default = "" if k.default is None else k.default
        lines.append(f"  {k.name:<28} default={default!r:<12} {k.help}")
    return "\n".join(lines)
