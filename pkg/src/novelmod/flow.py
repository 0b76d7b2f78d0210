"""Dense two-frame optical flow (Farnebäck) and its 3-channel image encoding."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

# ITU-R 601 luminance weights, applied before flow estimation.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)

DEFAULT_MAX_MAGNITUDE = 10.0


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement of `next` relative to `prev`: H x W x 2 (u, v) in px/frame."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError(f"expected H x W x 2 flow array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("flow vectors must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def frame_size(self) -> tuple[int, int]:
        return self.vectors.shape[0], self.vectors.shape[1]


@dataclass(frozen=True)
class FlowConfig:
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window_size: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if self.pyramid_levels < 1 or self.window_size < 1 or self.iterations < 1 or self.poly_n < 1:
            raise ValueError("flow parameters must be positive")
        if not (0 < self.pyramid_scale < 1):
            raise ValueError(f"pyramid_scale must be in (0, 1), got {self.pyramid_scale}")
        if self.poly_sigma <= 0:
            raise ValueError(f"poly_sigma must be positive, got {self.poly_sigma}")


def rgb_to_gray(image: np.ndarray) -> np.ndarray:
    """Collapse an H x W x 3 image in [0, 1] to single-channel luminance."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        return arr
    return arr @ LUMA_WEIGHTS


def estimate_flow(prev: np.ndarray, next: np.ndarray, cfg: FlowConfig = FlowConfig()) -> FlowField:
    """Farnebäck polynomial-expansion flow between two grayscale frames in [0, 1]."""
    prev = np.asarray(prev, dtype=np.float32)
    next = np.asarray(next, dtype=np.float32)
    if prev.shape != next.shape or prev.ndim != 2:
        raise ValueError(f"frames must be equal-shape 2-D arrays, got {prev.shape} vs {next.shape}")
    prev8 = np.clip(prev * 255.0, 0, 255).astype(np.uint8)
    next8 = np.clip(next * 255.0, 0, 255).astype(np.uint8)
    vectors = cv2.calcOpticalFlowFarneback(
        prev8,
        next8,
        None,
        cfg.pyramid_scale,
        cfg.pyramid_levels,
        cfg.window_size,
        cfg.iterations,
        cfg.poly_n,
        cfg.poly_sigma,
        0,
    )
    return FlowField(vectors=vectors)


def zero_flow(frame_size: tuple[int, int]) -> FlowField:
    h, w = frame_size
    return FlowField(vectors=np.zeros((h, w, 2), dtype=np.float32))


def flow_to_image(flow: FlowField, max_magnitude: float = DEFAULT_MAX_MAGNITUDE) -> np.ndarray:
    """Encode flow as H x W x 3 RGB in [0, 1]: angle -> hue, magnitude -> value
    (clipped at max_magnitude, then normalized), saturation fixed at 1.

    Zero flow therefore maps to black; a pixel at or above max_magnitude is at
    full saturation and value.
    """
    if not max_magnitude > 0:
        raise ValueError(f"max_magnitude must be positive, got {max_magnitude}")
    u = flow.vectors[:, :, 0]
    v = flow.vectors[:, :, 1]
    magnitude = np.sqrt(u * u + v * v)
    value = np.clip(magnitude / max_magnitude, 0.0, 1.0).astype(np.float32)
    hue_deg = (np.degrees(np.arctan2(v, u)) % 360.0).astype(np.float32)
    hsv = np.stack([hue_deg, np.ones_like(value), value], axis=2)
    rgb = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return np.clip(rgb, 0.0, 1.0)
