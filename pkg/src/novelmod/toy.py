"""Procedural two-domain toy benchmark: articulated stick figures performing
ten parametric motion patterns, rendered in a clean "synthetic" domain and a
shifted "real" domain.

Every random draw is keyed by (seed, action, video) only, never by domain, so
the two domains render identical motion and differ exactly by their
shift parameters; equal shift parameters therefore produce bit-identical
streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .dataset import DatasetIndex, MODALITY_DIRS, Modality, scan_dataset, write_labels
from .errors import DataError
from .extract import ExtractConfig, extract_dataset, save_frame_png
from .modalities import NUM_JOINTS, PoseSkeleton, load_edges, render_limbs, write_keypoints_csv

# Standing base pose in normalized coordinates (x right, y down).
BASE_POSE = np.array(
    [
        (0.50, 0.18), (0.53, 0.155), (0.47, 0.155), (0.56, 0.17), (0.44, 0.17),
        (0.62, 0.32), (0.38, 0.32), (0.66, 0.45), (0.34, 0.45), (0.68, 0.58),
        (0.32, 0.58), (0.57, 0.55), (0.43, 0.55), (0.58, 0.72), (0.42, 0.72),
        (0.58, 0.89), (0.42, 0.89),
    ],
    dtype=np.float64,
)

HEAD, L_SHO, R_SHO, L_ELB, R_ELB, L_WRI, R_WRI = 0, 5, 6, 7, 8, 9, 10
L_HIP, R_HIP, L_KNE, R_KNE, L_ANK, R_ANK = 11, 12, 13, 14, 15, 16
UPPER_BODY = tuple(range(0, 11))
HEAD_GROUP = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class DomainShift:
    """Appearance parameters of one domain; motion is domain-independent."""

    texture_strength: float = 0.0  # background texture contrast
    noise_level: float = 0.0  # per-pixel gaussian noise std
    actor_brightness: float = 1.0
    actor_tint: float = 0.0  # 0 = neutral gray actor, 1 = fully random color
    background_brightness: float = 1.0
    keypoint_jitter: float = 0.0  # px std on reported joint locations
    confidence_range: tuple[float, float] = (0.95, 1.0)

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_SHIFTS = {
    "synthetic": DomainShift(),
    "real": DomainShift(
        texture_strength=0.45,
        noise_level=0.06,
        actor_brightness=0.72,
        actor_tint=0.5,
        background_brightness=1.25,
        keypoint_jitter=1.25,
        confidence_range=(0.55, 0.9),
    ),
}


@dataclass(frozen=True)
class ToyConfig:
    num_actions: int = 10
    videos_per_action: int = 3
    frames_per_video: int = 90
    seed: int = 0
    frame_size: tuple[int, int] = (112, 112)
    fps: float = 30.0
    shift_params: dict[str, DomainShift] = field(default_factory=lambda: dict(DEFAULT_SHIFTS))

    def __post_init__(self):
        if not 1 <= self.num_actions <= 10:
            raise ValueError(f"num_actions must be in [1, 10] (10 motion programs exist), got {self.num_actions}")
        if self.frames_per_video < 90:
            raise ValueError(f"frames_per_video must be >= 90, got {self.frames_per_video}")
        if self.videos_per_action < 1:
            raise ValueError("videos_per_action must be >= 1")


def _motion_rng(cfg: ToyConfig, action: int, video: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, action, video, 0])


def _appearance_rng(cfg: ToyConfig, action: int, video: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, action, video, 1])


def _noise_rng(cfg: ToyConfig, action: int, video: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, action, video, 2])


def motion_trajectory(cfg: ToyConfig, action: int, video: int) -> np.ndarray:
    """Joint trajectories for one video: (T, 17, 2) in normalized coordinates.

    Each action id selects a distinct parametric motion program; per-video
    phase, speed, amplitude, placement and scale vary within a class.
    """
    rng = _motion_rng(cfg, action, video)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(0.85, 1.15)
    amp = 0.10 * rng.uniform(0.85, 1.15)
    offset = rng.uniform(-0.05, 0.05, size=2)
    scale = rng.uniform(0.92, 1.08)

    T = cfg.frames_per_video
    out = np.empty((T, NUM_JOINTS, 2), dtype=np.float64)
    base_freq = 0.8  # Hz; ~2.4 cycles over 90 frames at 30 fps
    for t in range(T):
        theta = 2.0 * math.pi * base_freq * speed * t / cfg.fps + phase
        s, c = math.sin(theta), math.cos(theta)
        pose = BASE_POSE.copy()
        if action == 0:  # wave right arm
            pose[R_WRI] += (amp * s, -amp * (1 + c) * 0.7)
            pose[R_ELB] += (0.5 * amp * s, -0.5 * amp * (1 + c) * 0.7)
        elif action == 1:  # wave left arm
            pose[L_WRI] += (-amp * s, -amp * (1 + c) * 0.7)
            pose[L_ELB] += (-0.5 * amp * s, -0.5 * amp * (1 + c) * 0.7)
        elif action == 2:  # both arms raise and lower
            lift = amp * (1 + s)
            for j in (L_WRI, R_WRI):
                pose[j, 1] -= 1.4 * lift
            for j in (L_ELB, R_ELB):
                pose[j, 1] -= 0.7 * lift
        elif action == 3:  # squat
            drop = 0.8 * amp * (1 + s) * 0.5
            pose[UPPER_BODY, 1] += drop
            for j in (L_HIP, R_HIP):
                pose[j, 1] += drop
            for j in (L_KNE, R_KNE):
                pose[j, 0] += (0.6 * amp if j == L_KNE else -0.6 * amp) * (1 + s) * 0.5
        elif action == 4:  # sway side to side
            pose[:, 0] += amp * s
            pose[HEAD_GROUP, 0] += 0.5 * amp * s
        elif action == 5:  # march in place
            lift = amp * max(s, 0.0)
            lift2 = amp * max(-s, 0.0)
            pose[L_KNE, 1] -= lift
            pose[L_ANK, 1] -= 1.6 * lift
            pose[R_KNE, 1] -= lift2
            pose[R_ANK, 1] -= 1.6 * lift2
        elif action == 6:  # nod head
            pose[HEAD_GROUP, 1] += 0.8 * amp * s
        elif action == 7:  # shoulder shrug / compress
            squeeze = 1.0 + 0.9 * amp * s / 0.12
            for j in (L_SHO, R_SHO, L_ELB, R_ELB, L_WRI, R_WRI):
                pose[j, 0] = 0.5 + (pose[j, 0] - 0.5) * squeeze
        elif action == 8:  # bow forward
            bend = amp * (1 + s) * 0.5
            pose[UPPER_BODY, 1] += bend * 1.2
            pose[UPPER_BODY, 0] += bend * 0.9
            pose[HEAD_GROUP, 1] += bend * 0.8
        elif action == 9:  # side kick with right leg
            kick = amp * max(s, 0.0)
            pose[R_ANK] += (-2.0 * kick, -0.8 * kick)
            pose[R_KNE] += (-1.0 * kick, -0.4 * kick)
        else:
            raise ValueError(f"no motion program for action {action}")
        pose = 0.5 + (pose - 0.5) * scale + offset
        out[t] = pose
    return out


def _background(cfg: ToyConfig, shift: DomainShift, app_rng: np.random.Generator) -> np.ndarray:
    """Static per-video background: a base color plus an optional plaid-like
    texture whose contrast is the domain's texture_strength."""
    h, w = cfg.frame_size
    base = 0.25 + 0.15 * app_rng.uniform(size=3)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ys /= h
    xs /= w
    tex = np.zeros((h, w, 3))
    for ch in range(3):
        fx, fy = app_rng.uniform(2.0, 7.0, size=2)
        ph1, ph2 = app_rng.uniform(0.0, 2.0 * math.pi, size=2)
        tex[:, :, ch] = 0.5 * np.sin(2 * math.pi * fx * xs + ph1) + 0.5 * np.sin(2 * math.pi * fy * ys + ph2)
    bg = base[None, None, :] + shift.texture_strength * 0.5 * tex
    return np.clip(bg * shift.background_brightness, 0.0, 1.0)


def _actor_color(shift: DomainShift, app_rng: np.random.Generator) -> np.ndarray:
    neutral = np.array([0.92, 0.90, 0.88])
    random_color = 0.35 + 0.6 * app_rng.uniform(size=3)
    color = (1.0 - shift.actor_tint) * neutral + shift.actor_tint * random_color
    return np.clip(color * shift.actor_brightness, 0.0, 1.0)


def _render_rgb_frame(
    cfg: ToyConfig,
    background: np.ndarray,
    actor_color: np.ndarray,
    joints_px: np.ndarray,
    noise: np.ndarray | None,
) -> np.ndarray:
    h, w = cfg.frame_size
    full_conf = np.concatenate([joints_px, np.ones((NUM_JOINTS, 1))], axis=1)
    sk = PoseSkeleton(joints=full_conf, frame_size=cfg.frame_size)
    mask = render_limbs(sk, load_edges(), line_width=max(2, h // 28)).astype(np.float64)
    # Head disc on top of the limb mask.
    cx, cy = joints_px[HEAD]
    radius = 0.05 * h
    ys, xs = np.mgrid[0:h, 0:w]
    mask = np.maximum(mask, ((xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2).astype(np.float64))
    frame = background * (1.0 - mask[:, :, None]) + actor_color[None, None, :] * mask[:, :, None]
    if noise is not None:
        frame = frame + noise
    return np.clip(frame, 0.0, 1.0)


def make_toy_dataset(cfg: ToyConfig, out_path: str | Path, extract: ExtractConfig | None = None) -> DatasetIndex:
    """Render the benchmark to out_path and derive all four modality streams.

    Writes RGB frames and keypoint files first, then runs the shared
    extraction pipeline for heatmaps, limbs and flow, and returns the scanned
    index. Fully determined by cfg.seed.
    """
    out_path = Path(out_path)
    out_path.mkdir(parents=True, exist_ok=True)
    labels = {f"action_{a:02d}": a for a in range(cfg.num_actions)}
    write_labels(out_path, labels)

    h, w = cfg.frame_size
    for domain, shift in cfg.shift_params.items():
        for action in range(cfg.num_actions):
            for video in range(cfg.videos_per_action):
                traj = motion_trajectory(cfg, action, video)
                app_rng = _appearance_rng(cfg, action, video)
                noise_rng = _noise_rng(cfg, action, video)
                background = _background(cfg, shift, app_rng)
                color = _actor_color(shift, app_rng)

                video_dir = out_path / domain / f"action_{action:02d}" / f"vid_{video:03d}"
                rgb_dir = video_dir / MODALITY_DIRS[Modality.RGB]
                rgb_dir.mkdir(parents=True, exist_ok=True)

                skeletons = []
                for t in range(cfg.frames_per_video):
                    joints_px = traj[t] * np.array([w - 1, h - 1])
                    noise = None
                    if shift.noise_level > 0:
                        noise = shift.noise_level * noise_rng.standard_normal((h, w, 3))
                    elif shift.noise_level == 0:
                        # Keep the draw sequence identical across domains so
                        # that equal shift params give bit-identical streams.
                        noise_rng.standard_normal((h, w, 3))
                    frame = _render_rgb_frame(cfg, background, color, joints_px, noise)
                    save_frame_png(rgb_dir / f"{t:06d}.png", frame)

                    jitter = shift.keypoint_jitter * noise_rng.standard_normal((NUM_JOINTS, 2))
                    lo, hi = shift.confidence_range
                    conf = lo + (hi - lo) * noise_rng.uniform(size=(NUM_JOINTS, 1))
                    reported = np.concatenate([joints_px + jitter, conf], axis=1)
                    skeletons.append(PoseSkeleton(joints=reported, frame_size=cfg.frame_size))
                write_keypoints_csv(video_dir / "keypoints.csv", skeletons)

    extract_cfg = extract if extract is not None else ExtractConfig()
    return extract_dataset(out_path, extract_cfg, overwrite=True)
