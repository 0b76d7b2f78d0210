"""Pose-derived modality rendering: joint heatmaps, limb images, and the
common 3-channel modality image format shared by all modalities.

All renderers are pure functions of their inputs and safe to call from
concurrent workers. Rendered values always lie in [0, 1].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources
from pathlib import Path

import numpy as np

NUM_JOINTS = 17


class Modality(IntEnum):
    RGB = 0
    HEATMAPS = 1
    LIMBS = 2
    FLOW = 3


# Directory names inside a video folder, one stream per modality.
MODALITY_DIRS = {
    Modality.RGB: "rgb",
    Modality.HEATMAPS: "heatmaps",
    Modality.LIMBS: "limbs",
    Modality.FLOW: "flow",
}

ALL_MODALITIES = tuple(Modality)


@dataclass(frozen=True)
class PoseSkeleton:
    """17 body joints with per-joint confidence, in pixel coordinates.

    joints: (17, 3) array of (x, y, c). x/y may lie outside the frame;
    renderers clip at the frame boundary. c must be in [0, 1].
    """

    joints: np.ndarray
    frame_size: tuple[int, int]  # (H, W)

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.shape != (NUM_JOINTS, 3):
            raise ValueError(f"expected {NUM_JOINTS} joints with (x, y, c), got shape {joints.shape}")
        if not np.all(np.isfinite(joints[:, :2])):
            raise ValueError("joint coordinates must be finite")
        c = joints[:, 2]
        if np.any(c < 0) or np.any(c > 1) or not np.all(np.isfinite(c)):
            raise ValueError("joint confidences must lie in [0, 1]")
        object.__setattr__(self, "joints", joints)
        h, w = self.frame_size
        if h < 1 or w < 1:
            raise ValueError(f"bad frame size {self.frame_size}")


@dataclass(frozen=True)
class SkeletonEdges:
    """Limb topology over the 17 joints: (a, b) index pairs, no self-loops."""

    edges: tuple[tuple[int, int], ...]
    name: str = "custom"
    version: int = 0

    def __post_init__(self):
        for a, b in self.edges:
            if not (0 <= a < NUM_JOINTS and 0 <= b < NUM_JOINTS):
                raise ValueError(f"edge ({a}, {b}) out of range [0, {NUM_JOINTS})")
            if a == b:
                raise ValueError(f"self-loop edge ({a}, {b})")


def load_edges(path: str | Path | None = None) -> SkeletonEdges:
    """Load a skeleton edge list, defaulting to the bundled COCO-17 topology."""
    if path is None:
        raw = resources.files("novelmod.data").joinpath("coco_skeleton.json").read_text()
    else:
        raw = Path(path).read_text()
    spec = json.loads(raw)
    return SkeletonEdges(
        edges=tuple((int(a), int(b)) for a, b in spec["edges"]),
        name=spec.get("name", "custom"),
        version=int(spec.get("version", 0)),
    )


COCO_EDGES = load_edges()


def render_heatmaps(skeleton: PoseSkeleton, sigma: float) -> np.ndarray:
    """Render the joint-heatmap modality as a single-channel H x W array.

    Each joint contributes a Gaussian bump centered at its location and
    scaled by its confidence; overlapping joints combine by per-pixel max,
    which keeps values in [0, 1].
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    h, w = skeleton.frame_size
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    out = np.zeros((h, w), dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    for x_i, y_i, c_i in skeleton.joints:
        if c_i == 0.0:
            continue
        g = np.exp(-((xs - x_i) ** 2 + (ys - y_i) ** 2) * inv) * c_i
        np.maximum(out, g, out=out)
    return out.astype(np.float32)


def _line_pixels(x0: int, y0: int, x1: int, y1: int):
    """Integer Bresenham line from (x0, y0) to (x1, y1), endpoints included."""
    pixels = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        pixels.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return pixels


def render_limbs(skeleton: PoseSkeleton, edges: SkeletonEdges | None = None, line_width: int = 2) -> np.ndarray:
    """Render the limb modality: each edge is a Bresenham segment between its
    joints with intensity min of the endpoint confidences; overlaps take the
    per-pixel max. Pixels outside the frame are clipped, background is 0.
    """
    if edges is None:
        edges = COCO_EDGES
    if line_width < 1:
        raise ValueError(f"line_width must be >= 1, got {line_width}")
    h, w = skeleton.frame_size
    out = np.zeros((h, w), dtype=np.float32)
    # Width is applied by stamping a line_width x line_width square on every
    # line pixel; even widths extend right/down.
    lo = -((line_width - 1) // 2)
    hi = line_width // 2
    joints = skeleton.joints
    for a, b in edges.edges:
        value = min(joints[a, 2], joints[b, 2])
        if value <= 0.0:
            continue
        x0, y0 = int(round(joints[a, 0])), int(round(joints[a, 1]))
        x1, y1 = int(round(joints[b, 0])), int(round(joints[b, 1]))
        for px, py in _line_pixels(x0, y0, x1, y1):
            for oy in range(lo, hi + 1):
                yy = py + oy
                if yy < 0 or yy >= h:
                    continue
                for ox in range(lo, hi + 1):
                    xx = px + ox
                    if 0 <= xx < w and out[yy, xx] < value:
                        out[yy, xx] = value
    return out


def to_modality_image(raw, modality_id: Modality, max_magnitude: float = 10.0) -> np.ndarray:
    """Harmonize any raw modality into the common H x W x 3 format in [0, 1].

    Single-channel arrays are replicated across 3 channels; flow fields go
    through the hue/saturation encoding; 3-channel inputs pass through.
    Values are clipped to [0, 1].
    """
    from .flow import FlowField, flow_to_image

    modality_id = Modality(modality_id)
    if isinstance(raw, FlowField):
        return flow_to_image(raw, max_magnitude=max_magnitude)
    arr = np.asarray(raw, dtype=np.float32)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    elif arr.ndim == 3 and arr.shape[2] == 3:
        pass
    else:
        raise ValueError(f"expected H x W or H x W x 3 array, got shape {arr.shape}")
    return np.clip(arr, 0.0, 1.0)


def write_keypoints_csv(path: str | Path, skeletons: list[PoseSkeleton]) -> None:
    """Write one row per frame: frame_index then 17 (x, y, c) triples."""
    header = ["frame_index"]
    for j in range(NUM_JOINTS):
        header += [f"x{j}", f"y{j}", f"c{j}"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx, sk in enumerate(skeletons):
            row = [idx]
            for x, y, c in sk.joints:
                row += [f"{x:.4f}", f"{y:.4f}", f"{c:.4f}"]
            writer.writerow(row)


def read_keypoints_csv(path: str | Path, frame_size: tuple[int, int]) -> list[PoseSkeleton]:
    """Read skeletons written by write_keypoints_csv, in frame order."""
    skeletons: list[tuple[int, PoseSkeleton]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0] == "frame_index":
                continue
            if len(row) != 1 + 3 * NUM_JOINTS:
                raise ValueError(f"{path}: expected {1 + 3 * NUM_JOINTS} columns, got {len(row)}")
            vals = [float(v) for v in row[1:]]
            joints = np.array(vals, dtype=np.float64).reshape(NUM_JOINTS, 3)
            skeletons.append((int(row[0]), PoseSkeleton(joints=joints, frame_size=frame_size)))
    skeletons.sort(key=lambda t: t[0])
    return [sk for _, sk in skeletons]
