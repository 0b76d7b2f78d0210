"""Source-modality extraction pipeline: derive heatmap, limb, and optical-flow
streams from a video's RGB frames and keypoint file.

The same pipeline serves both dataset preparation and test-time extraction,
so the shifted-domain streams are produced exactly like the training ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import KEYPOINTS_FILE, MODALITY_DIRS, DatasetIndex, Modality, scan_dataset
from .errors import DataError
from .flow import DEFAULT_MAX_MAGNITUDE, FlowConfig, estimate_flow, rgb_to_gray, zero_flow
from .modalities import SkeletonEdges, load_edges, read_keypoints_csv, render_heatmaps, render_limbs, to_modality_image


@dataclass(frozen=True)
class ExtractConfig:
    sigma: float = 6.0
    line_width: int = 2
    max_magnitude: float = DEFAULT_MAX_MAGNITUDE
    flow: FlowConfig = field(default_factory=FlowConfig)
    edges: SkeletonEdges | None = None

    def resolved_edges(self) -> SkeletonEdges:
        return self.edges if self.edges is not None else load_edges()


def save_frame_png(path: Path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float32), 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8)).save(path)


def extract_video(video_dir: str | Path, cfg: ExtractConfig = ExtractConfig(), overwrite: bool = True) -> int:
    """Derive the heatmaps/limbs/flow streams for one video directory that
    already has rgb/ frames and a keypoints file. Returns the frame count."""
    video_dir = Path(video_dir)
    rgb_dir = video_dir / MODALITY_DIRS[Modality.RGB]
    frames = sorted(rgb_dir.glob("*.png"))
    if not frames:
        raise DataError(f"{rgb_dir}: no RGB frames to extract from")
    kp_path = video_dir / KEYPOINTS_FILE
    if not kp_path.exists():
        raise DataError(f"{kp_path}: keypoints file missing")
    with Image.open(frames[0]) as im:
        frame_size = (im.height, im.width)
    skeletons = read_keypoints_csv(kp_path, frame_size)
    if len(skeletons) != len(frames):
        raise DataError(f"{kp_path}: {len(skeletons)} keypoint rows for {len(frames)} RGB frames")

    out_dirs = {m: video_dir / MODALITY_DIRS[m] for m in (Modality.HEATMAPS, Modality.LIMBS, Modality.FLOW)}
    for d in out_dirs.values():
        d.mkdir(exist_ok=True)

    edges = cfg.resolved_edges()
    prev_gray = None
    for t, frame_path in enumerate(frames):
        name = frame_path.name
        heat_path = out_dirs[Modality.HEATMAPS] / name
        limb_path = out_dirs[Modality.LIMBS] / name
        flow_path = out_dirs[Modality.FLOW] / name
        with Image.open(frame_path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
        gray = rgb_to_gray(rgb)

        if overwrite or not heat_path.exists():
            heat = render_heatmaps(skeletons[t], cfg.sigma)
            save_frame_png(heat_path, to_modality_image(heat, Modality.HEATMAPS))
        if overwrite or not limb_path.exists():
            limbs = render_limbs(skeletons[t], edges, cfg.line_width)
            save_frame_png(limb_path, to_modality_image(limbs, Modality.LIMBS))
        if overwrite or not flow_path.exists():
            # Frame 0 carries zero flow; frame t encodes motion from t-1 to t.
            fl = zero_flow(frame_size) if prev_gray is None else estimate_flow(prev_gray, gray, cfg.flow)
            save_frame_png(flow_path, to_modality_image(fl, Modality.FLOW, max_magnitude=cfg.max_magnitude))
        prev_gray = gray
    return len(frames)


def extract_dataset(root: str | Path, cfg: ExtractConfig = ExtractConfig(), overwrite: bool = True) -> DatasetIndex:
    """Run extraction over every video under root, then return the validated
    index of the completed dataset."""
    root = Path(root)
    video_dirs = sorted(p.parent for p in root.glob("*/*/*/rgb") if p.is_dir())
    if not video_dirs:
        raise DataError(f"{root}: no videos with an rgb stream found")
    for video_dir in video_dirs:
        extract_video(video_dir, cfg, overwrite=overwrite)
    return scan_dataset(root)
