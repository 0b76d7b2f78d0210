"""Frame-based dataset ingestion, chunking/sampling protocol, and modality
stack assembly.

Expected layout:
    root/<domain>/<action_name>/<video_id>/{rgb,heatmaps,limbs,flow}/%06d.png
    root/<domain>/<action_name>/<video_id>/keypoints.csv
    root/labels.csv                       # action_name,label rows

Videos are tiled into non-overlapping chunks of 90 frames (trailing remainder
dropped); training draws pick a chunk uniformly, then a start offset uniformly
in [0, chunk_len - S], and read the S consecutive frames of every requested
modality.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .modalities import MODALITY_DIRS, Modality

log = logging.getLogger("novelmod")

DOMAIN_TAGS = ("synthetic", "real")
CHUNK_LEN = 90
SEQ_LEN = 16
LABELS_FILE = "labels.csv"
KEYPOINTS_FILE = "keypoints.csv"


@dataclass(frozen=True)
class VideoItem:
    video_id: str  # "<domain>/<action_name>/<name>", unique within the index
    action_label: int
    action_name: str
    domain_tag: str
    frame_count: int
    path: Path

    def stream_dir(self, modality: Modality) -> Path:
        return self.path / MODALITY_DIRS[Modality(modality)]

    def frame_path(self, modality: Modality, frame: int) -> Path:
        return self.stream_dir(modality) / f"{frame:06d}.png"

    @property
    def keypoints_path(self) -> Path:
        return self.path / KEYPOINTS_FILE


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    items: tuple[VideoItem, ...]
    num_actions: int
    frame_size: tuple[int, int]  # (H, W)

    def subset(self, domain_tag: str | None = None) -> "DatasetIndex":
        items = tuple(it for it in self.items if domain_tag is None or it.domain_tag == domain_tag)
        return DatasetIndex(self.root, items, self.num_actions, self.frame_size)

    def __len__(self) -> int:
        return len(self.items)


def read_labels(root: Path) -> dict[str, int]:
    path = root / LABELS_FILE
    if not path.exists():
        raise DataError(f"{path}: action-name mapping file missing")
    mapping: dict[str, int] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "name":
                continue
            mapping[row[0]] = int(row[1])
    return mapping


def write_labels(root: Path, mapping: dict[str, int]) -> None:
    with open(root / LABELS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "id"])
        for name in sorted(mapping):
            writer.writerow([name, mapping[name]])


def _png_frames(stream_dir: Path) -> list[Path]:
    return sorted(stream_dir.glob("*.png"))


def scan_dataset(root: str | Path) -> DatasetIndex:
    """Build a validated index of every video under root; deterministic
    ordering (lexicographic by video_id). Raises DataError naming the
    offending path on any layout violation."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset root is not a directory")
    domains = sorted(p for p in root.iterdir() if p.is_dir())
    if not domains:
        return DatasetIndex(root=root, items=(), num_actions=0, frame_size=(0, 0))
    labels = read_labels(root)
    num_actions = max(labels.values()) + 1 if labels else 0

    items: list[VideoItem] = []
    frame_size: tuple[int, int] | None = None
    for domain_dir in domains:
        if domain_dir.name not in DOMAIN_TAGS:
            raise DataError(f"{domain_dir}: unknown domain directory (expected one of {DOMAIN_TAGS})")
        for action_dir in sorted(p for p in domain_dir.iterdir() if p.is_dir()):
            if action_dir.name not in labels:
                raise DataError(f"{action_dir}: action directory not listed in {root / LABELS_FILE}")
            label = labels[action_dir.name]
            if not 0 <= label < num_actions:
                raise DataError(f"{action_dir}: label {label} out of range [0, {num_actions})")
            for video_dir in sorted(p for p in action_dir.iterdir() if p.is_dir()):
                counts = {}
                for modality, sub in MODALITY_DIRS.items():
                    stream = video_dir / sub
                    if not stream.is_dir():
                        raise DataError(f"{video_dir}: missing modality stream {sub!r}")
                    counts[modality] = len(_png_frames(stream))
                if len(set(counts.values())) != 1:
                    detail = ", ".join(f"{MODALITY_DIRS[m]}={n}" for m, n in counts.items())
                    raise DataError(f"{video_dir}: unequal frame counts across streams ({detail})")
                if not (video_dir / KEYPOINTS_FILE).exists():
                    raise DataError(f"{video_dir}: missing {KEYPOINTS_FILE}")
                frame_count = counts[Modality.RGB]
                if frame_count == 0:
                    raise DataError(f"{video_dir}: no frames")
                with Image.open(video_dir / MODALITY_DIRS[Modality.RGB] / f"{0:06d}.png") as im:
                    size = (im.height, im.width)
                if frame_size is None:
                    frame_size = size
                elif size != frame_size:
                    raise DataError(f"{video_dir}: frame size {size} differs from {frame_size}")
                items.append(
                    VideoItem(
                        video_id=f"{domain_dir.name}/{action_dir.name}/{video_dir.name}",
                        action_label=label,
                        action_name=action_dir.name,
                        domain_tag=domain_dir.name,
                        frame_count=frame_count,
                        path=video_dir,
                    )
                )
    items.sort(key=lambda it: it.video_id)
    return DatasetIndex(root=root, items=tuple(items), num_actions=num_actions, frame_size=frame_size or (0, 0))


@dataclass(frozen=True)
class Chunk:
    item_index: int
    start_frame: int
    length: int = CHUNK_LEN


def enumerate_chunks(index: DatasetIndex, chunk_len: int = CHUNK_LEN) -> list[Chunk]:
    """Tile every indexed video into non-overlapping chunks; videos shorter
    than chunk_len are excluded with a warning."""
    chunks: list[Chunk] = []
    for i, item in enumerate(index.items):
        n = item.frame_count // chunk_len
        if n == 0:
            log.warning("%s: %d frames < chunk length %d, excluded", item.video_id, item.frame_count, chunk_len)
            continue
        for c in range(n):
            chunks.append(Chunk(item_index=i, start_frame=c * chunk_len, length=chunk_len))
    return chunks


def load_frame(item: VideoItem, modality: Modality, frame: int) -> np.ndarray:
    path = item.frame_path(modality, frame)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise DataError(f"{path}: frame missing") from None
    return arr


def canonical_combo(combo) -> tuple[Modality, ...]:
    mods = tuple(sorted(Modality(m) for m in set(combo)))
    if not mods:
        raise ValueError("modality combo must be nonempty")
    return mods


@dataclass(frozen=True)
class ModalityStack:
    """S frames of channel-concatenated modalities: (S, H, W, 3 * |combo|),
    channel blocks in ascending modality-id order."""

    frames: np.ndarray
    combo: tuple[Modality, ...]
    label: int
    video_id: str

    def channel_block(self, j: int) -> np.ndarray:
        return self.frames[:, :, :, 3 * j : 3 * (j + 1)]


def load_stack(item: VideoItem, start: int, seq_len: int, combo) -> ModalityStack:
    combo = canonical_combo(combo)
    if start < 0 or start + seq_len > item.frame_count:
        raise ValueError(f"window [{start}, {start + seq_len}) out of range for {item.video_id} ({item.frame_count} frames)")
    blocks = []
    for m in combo:
        frames = np.stack([load_frame(item, m, start + t) for t in range(seq_len)])
        blocks.append(frames)
    return ModalityStack(frames=np.concatenate(blocks, axis=3), combo=combo, label=item.action_label, video_id=item.video_id)


class ChunkSampler:
    """Seeded draw stream over (chunk, offset) pairs; fully reproducible from
    its seed, and its rng state can be captured/restored for run checkpoints."""

    def __init__(self, index: DatasetIndex, chunk_len: int = CHUNK_LEN, seq_len: int = SEQ_LEN, seed: int = 0):
        if seq_len > chunk_len:
            raise ValueError(f"seq_len {seq_len} exceeds chunk length {chunk_len}")
        self.index = index
        self.chunk_len = chunk_len
        self.seq_len = seq_len
        self.chunks = enumerate_chunks(index, chunk_len)
        if not self.chunks:
            raise DataError(f"{index.root}: no video has at least {chunk_len} frames")
        self.rng = np.random.default_rng(seed)

    @property
    def num_chunks(self) -> int:
        return len(self.chunks)

    def draw(self, batch_size: int) -> list[tuple[VideoItem, int]]:
        """batch_size (item, absolute start frame) pairs: chunk uniform, then
        offset uniform in [0, chunk_len - seq_len]."""
        out = []
        for _ in range(batch_size):
            chunk = self.chunks[int(self.rng.integers(0, len(self.chunks)))]
            offset = int(self.rng.integers(0, self.chunk_len - self.seq_len + 1))
            out.append((self.index.items[chunk.item_index], chunk.start_frame + offset))
        return out

    def draw_stacks(self, batch_size: int, combo) -> list[ModalityStack]:
        return [load_stack(item, start, self.seq_len, combo) for item, start in self.draw(batch_size)]

    def state(self) -> dict:
        return self.rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state


def stacks_to_tensor(stacks: list[ModalityStack]):
    """Batch stacks into a torch tensor shaped (B, 3m, S, H, W) plus labels."""
    import torch

    frames = np.stack([s.frames for s in stacks])  # B, S, H, W, C
    tensor = torch.from_numpy(frames).permute(0, 4, 1, 2, 3).contiguous()
    labels = torch.tensor([s.label for s in stacks], dtype=torch.long)
    return tensor, labels


def split_stack_tensor(batch, combo) -> dict[int, "object"]:
    """Slice a (B, 3m, S, H, W) batch back into per-modality (B, 3, S, H, W)
    blocks keyed by modality id, in ascending-id order."""
    combo = canonical_combo(combo)
    return {int(m): batch[:, 3 * j : 3 * (j + 1)] for j, m in enumerate(combo)}
