"""The three parameterized networks: domain classifier (DC), domain generator
(DG), and action classifier (AC), as desk-scale variants of the full-size
architectures, plus freeze/copy semantics.

DC and AC use GroupNorm and DG uses InstanceNorm; none of the normalization
layers track running statistics, so a frozen copy is bitwise-stable no matter
what trains around it, and forwards are deterministic in train and eval mode
alike.
"""

from __future__ import annotations

import copy
import hashlib
from contextlib import contextmanager
from dataclasses import dataclass, field, asdict

import torch
import torch.nn as nn

GROUPNORM_GROUPS = 8


@dataclass(frozen=True)
class NetConfig:
    """Width/depth scalars for DC/DG/AC plus the shared input geometry."""

    num_actions: int = 10
    input_channels: int = 12  # 3 * number of active modalities
    embedding_dim: int = 64
    seq_len: int = 16
    dc_widths: tuple[int, ...] = (16, 32, 64, 64)
    dg_channels: tuple[int, ...] = (16, 32, 64)
    ac_widths: tuple[int, ...] = (16, 32, 64, 64)
    desk_scale: bool = True

    def __post_init__(self):
        if self.num_actions < 1 or self.input_channels < 3 or self.embedding_dim < 1:
            raise ValueError("num_actions, input_channels and embedding_dim must be positive")
        if self.input_channels % 3 != 0:
            raise ValueError(f"input_channels must be 3 * |combo|, got {self.input_channels}")
        if len(self.dg_channels) != 3:
            raise ValueError("dg_channels must list (stem, mid, bottleneck) widths")

    @classmethod
    def desk(cls, num_modalities: int, num_actions: int = 10, seq_len: int = 16) -> "NetConfig":
        return cls(num_actions=num_actions, input_channels=3 * num_modalities, seq_len=seq_len)

    @classmethod
    def paper(cls, num_modalities: int, num_actions: int = 10, seq_len: int = 16) -> "NetConfig":
        """Full-scale preset (ResNet18-ish DC, S3D-ish AC, 512-dim embedding).
        Kept behind this flag; not exercised in CI."""
        return cls(
            num_actions=num_actions,
            input_channels=3 * num_modalities,
            embedding_dim=512,
            seq_len=seq_len,
            dc_widths=(64, 128, 256, 512),
            dg_channels=(64, 128, 256),
            ac_widths=(64, 128, 256, 512),
            desk_scale=False,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        for key in ("dc_widths", "dg_channels", "ac_widths"):
            d[key] = tuple(d[key])
        return cls(**d)


@contextmanager
def seeded_rng(seed: int | None):
    if seed is None:
        yield
        return
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        yield


class ModelBase(nn.Module):
    kind = "?"

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        self.frozen = False

    def freeze_(self) -> None:
        for p in self.parameters():
            p.requires_grad_(False)
        self.frozen = True

    def parameter_manifest(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(p.shape) for name, p in self.named_parameters()}

    def parameter_hash(self) -> str:
        h = hashlib.sha256()
        for name, p in sorted(self.named_parameters()):
            h.update(name.encode())
            h.update(p.detach().cpu().numpy().tobytes())
        return h.hexdigest()

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _gn(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(GROUPNORM_GROUPS, channels), channels)


class _ResidualBlock2d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.norm1 = _gn(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.norm2 = _gn(out_ch)
        self.act = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False), _gn(out_ch))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.act(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return self.act(out + self.shortcut(x))


class DomainClassifier(ModelBase):
    """Image-based residual CNN that classifies which of the 4 modalities an
    image belongs to; its penultimate embedding defines the divergence space.
    """

    kind = "DC"
    NUM_MODALITIES = 4

    def __init__(self, config: NetConfig):
        super().__init__(config)
        w = config.dc_widths
        self.stem = nn.Sequential(nn.Conv2d(3, w[0], 3, padding=1, bias=False), _gn(w[0]), nn.ReLU(inplace=True))
        stages = []
        in_ch = w[0]
        for i, out_ch in enumerate(w):
            stages.append(_ResidualBlock2d(in_ch, out_ch, stride=1 if i == 0 else 2))
            in_ch = out_ch
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.embed = nn.Linear(in_ch, config.embedding_dim)
        self.head = nn.Linear(config.embedding_dim, self.NUM_MODALITIES)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"DC expects B x 3 x H x W single frames, got shape {tuple(images.shape)}")
        feats = self.pool(self.stages(self.stem(images))).flatten(1)
        embedding = self.embed(feats)
        logits = self.head(torch.relu(embedding))
        return logits, embedding


class _ResidualBlockIN(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels, affine=True),
        )

    def forward(self, x):
        return x + self.block(x)


class DomainGenerator(ModelBase):
    """Image-to-image network producing novel modalities: two down-sampling
    convolutions, two residual blocks with instance normalization, two
    transposed convolutions back to the input size, sigmoid output in [0, 1].
    """

    kind = "DG"

    def __init__(self, config: NetConfig):
        super().__init__(config)
        c0, c1, c2 = config.dg_channels
        self.stem = nn.Sequential(nn.Conv2d(3, c0, 7, padding=3), nn.InstanceNorm2d(c0, affine=True), nn.ReLU(inplace=True))
        self.down = nn.Sequential(
            nn.Conv2d(c0, c1, 3, stride=2, padding=1),
            nn.InstanceNorm2d(c1, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1),
            nn.InstanceNorm2d(c2, affine=True),
            nn.ReLU(inplace=True),
        )
        self.residual = nn.Sequential(_ResidualBlockIN(c2), _ResidualBlockIN(c2))
        self.up = nn.Sequential(
            nn.ConvTranspose2d(c2, c1, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(c1, affine=True),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(c1, c0, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(c0, affine=True),
            nn.ReLU(inplace=True),
        )
        self.out = nn.Conv2d(c0, 3, 7, padding=3)

    def _check_input(self, images: torch.Tensor) -> None:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"DG expects B x 3 x H x W single frames, got shape {tuple(images.shape)}")
        if images.shape[2] % 4 != 0 or images.shape[3] % 4 != 0:
            raise ValueError(f"spatial size must be divisible by 4 (two stride-2 stages), got {tuple(images.shape[2:])}")

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        self._check_input(images)
        z = self.residual(self.down(self.stem(images)))
        return torch.sigmoid(self.out(self.up(z)))

    def bottleneck(self, images: torch.Tensor) -> torch.Tensor:
        """Spatially pooled bottleneck features, B x dg_channels[-1]."""
        self._check_input(images)
        z = self.residual(self.down(self.stem(images)))
        return z.mean(dim=(2, 3))


class _SeparableBlock3d(nn.Module):
    """Spatial 2-D convolution followed by a temporal 1-D convolution."""

    def __init__(self, in_ch: int, out_ch: int, spatial_stride: int, temporal_stride: int):
        super().__init__()
        self.spatial = nn.Sequential(
            nn.Conv3d(in_ch, out_ch, (1, 3, 3), stride=(1, spatial_stride, spatial_stride), padding=(0, 1, 1), bias=False),
            _gn(out_ch),
            nn.ReLU(inplace=True),
        )
        self.temporal = nn.Sequential(
            nn.Conv3d(out_ch, out_ch, (3, 1, 1), stride=(temporal_stride, 1, 1), padding=(1, 0, 0), bias=False),
            _gn(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.temporal(self.spatial(x))


class ActionClassifier(ModelBase):
    """Separable-3D CNN over channel-concatenated modality sequences."""

    kind = "AC"

    def __init__(self, config: NetConfig):
        super().__init__(config)
        w = config.ac_widths
        blocks = []
        in_ch = config.input_channels
        for i, out_ch in enumerate(w):
            stride = 1 if i == 0 else 2
            blocks.append(_SeparableBlock3d(in_ch, out_ch, spatial_stride=stride, temporal_stride=stride))
            in_ch = out_ch
        self.blocks = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.head = nn.Linear(in_ch, config.num_actions)

    def forward(self, stacks: torch.Tensor) -> torch.Tensor:
        if stacks.ndim != 5:
            raise ValueError(f"AC expects B x C x S x H x W stacks, got shape {tuple(stacks.shape)}")
        if stacks.shape[1] != self.config.input_channels:
            raise ValueError(f"AC configured for {self.config.input_channels} channels, got {stacks.shape[1]}")
        if stacks.shape[2] != self.config.seq_len:
            raise ValueError(f"AC configured for S={self.config.seq_len}, got {stacks.shape[2]}")
        feats = self.pool(self.blocks(stacks)).flatten(1)
        return self.head(feats)


MODEL_KINDS = {"DC": DomainClassifier, "DG": DomainGenerator, "AC": ActionClassifier}


def build_model(kind: str, config: NetConfig, seed: int | None = None) -> ModelBase:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}, expected one of {sorted(MODEL_KINDS)}")
    with seeded_rng(seed):
        return MODEL_KINDS[kind](config)


def freeze_copy(model: ModelBase) -> ModelBase:
    """Deep copy with frozen parameters. Gradients still flow through the copy
    to its inputs, but no training step can change it."""
    clone = copy.deepcopy(model)
    clone.freeze_()
    return clone


def decay_param_groups(model: nn.Module, weight_decay: float) -> list[dict]:
    """Two Adam parameter groups: weight decay on conv/linear weights, none on
    biases or normalization gains/biases."""
    no_decay_ids = set()
    for module in model.modules():
        if isinstance(module, (nn.GroupNorm, nn.InstanceNorm2d, nn.InstanceNorm3d, nn.BatchNorm2d, nn.BatchNorm3d)):
            no_decay_ids.update(id(p) for p in module.parameters(recurse=False))
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        if id(p) in no_decay_ids or name.endswith(".bias"):
            no_decay.append(p)
        else:
            decay.append(p)
    groups = [{"params": decay, "weight_decay": weight_decay}]
    if no_decay:
        groups.append({"params": no_decay, "weight_decay": 0.0})
    return groups
