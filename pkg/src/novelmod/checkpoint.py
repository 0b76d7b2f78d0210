"""Checkpoint format shared by models and training runs.

A model checkpoint is a directory holding manifest.json plus params.bin. The
manifest records kind, NetConfig, epoch, seed, a metric snapshot and the
format version, together with an index mapping each parameter name to its
shape and byte offset; params.bin is the concatenation of the parameter
blobs as little-endian float32.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DataError
from .models import ModelBase, NetConfig, build_model

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PARAMS_NAME = "params.bin"

_DTYPE = np.dtype("<f4")


def write_tensor_blob(path: Path, tensors: dict[str, np.ndarray]) -> dict[str, dict]:
    """Concatenate named arrays into one little-endian float32 blob; return
    the name -> {shape, offset, numel} index."""
    index: dict[str, dict] = {}
    offset = 0
    with open(path, "wb") as fh:
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=_DTYPE)
            fh.write(arr.tobytes())
            index[name] = {"shape": list(arr.shape), "offset": offset, "numel": int(arr.size)}
            offset += arr.size * _DTYPE.itemsize
    return index


def read_tensor_blob(path: Path, index: dict[str, dict]) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    expected = sum(entry["numel"] for entry in index.values()) * _DTYPE.itemsize
    if len(raw) != expected:
        raise DataError(f"{path}: blob is {len(raw)} bytes, index expects {expected}")
    out = {}
    for name, entry in index.items():
        start = entry["offset"]
        end = start + entry["numel"] * _DTYPE.itemsize
        arr = np.frombuffer(raw[start:end], dtype=_DTYPE).reshape(entry["shape"])
        out[name] = arr.copy()
    return out


def save_model(
    model: ModelBase,
    directory: str | Path,
    epoch: int = 0,
    seed: int | None = None,
    metrics: dict | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = {name: p.detach().cpu().numpy() for name, p in model.named_parameters()}
    index = write_tensor_blob(directory / PARAMS_NAME, tensors)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "net_config": model.config.to_dict(),
        "epoch": epoch,
        "seed": seed,
        "metrics": metrics or {},
        "params": index,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return directory


def read_manifest(directory: str | Path) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"{path}: checkpoint manifest missing")
    manifest = json.loads(path.read_text())
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    return manifest


def load_model(directory: str | Path, expected_config: NetConfig | None = None) -> ModelBase:
    """Rebuild the model named by the manifest and load its parameters.

    Raises DataError naming the parameter on any shape mismatch or corrupt
    blob, and ConfigError when expected_config disagrees with the stored one.
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    config = NetConfig.from_dict(manifest["net_config"])
    if expected_config is not None and config != expected_config:
        raise ConfigError(
            f"{directory}: checkpoint config conflicts with the requested one: {config} vs {expected_config}"
        )
    model = build_model(manifest["kind"], config, seed=0)
    blobs = read_tensor_blob(directory / PARAMS_NAME, manifest["params"])
    own = dict(model.named_parameters())
    if set(own) != set(blobs):
        missing = sorted(set(own) ^ set(blobs))
        raise DataError(f"{directory}: parameter set mismatch, first offender: {missing[0]}")
    with torch.no_grad():
        for name, p in own.items():
            arr = blobs[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise DataError(f"{directory}: parameter {name!r} has shape {arr.shape}, model expects {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr))
    return model
