"""Binary checkpoint container with named float32 tensors.

Layout (all integers little-endian):
  magic "LIDM" | version u32 | header-length u32 | header JSON (UTF-8)
  | tensor-count u32 | per tensor: name-length u16, name UTF-8,
    ndim u8, dims u32 each, raw little-endian float32 data.

The header JSON holds the model configuration and a free-form "extra" dict.
Saving and reloading reproduces every parameter bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import CheckpointFormatError
from .models import ModelConfig, build_models

MAGIC = b"LIDM"
VERSION = 1


def _flatten_state(models: dict[str, nn.Module]) -> dict[str, torch.Tensor]:
    tensors = {}
    for model_name, model in models.items():
        for key, value in model.state_dict().items():
            if value.dtype != torch.float32:
                raise CheckpointFormatError(
                    f"tensor {model_name}.{key} has dtype {value.dtype}; only float32 is stored"
                )
            tensors[f"{model_name}.{key}"] = value
    return tensors


def save_checkpoint(path, models: dict[str, nn.Module], config: ModelConfig, extra: dict | None = None) -> None:
    tensors = _flatten_state(models)
    header = json.dumps(
        {"config": config.to_dict(), "extra": extra or {}, "models": sorted(models)},
        sort_keys=True,
    ).encode("utf-8")

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(struct.pack("<I", len(tensors)))
            for name in sorted(tensors):
                data = tensors[name].detach().cpu().numpy().astype("<f4", copy=False)
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<B", data.ndim))
                for dim in data.shape:
                    fh.write(struct.pack("<I", dim))
                fh.write(data.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointFormatError("unexpected end of file")
    return buf


def read_checkpoint(path) -> tuple[dict, dict[str, torch.Tensor]]:
    """Return (header dict, flat name->tensor table)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic; not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise CheckpointFormatError(f"{path}: unsupported version {version}")
        (header_len,) = struct.unpack("<I", _read_exact(fh, 4))
        try:
            header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"{path}: bad header: {exc}") from None
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = tuple(struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(ndim))
            numel = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = _read_exact(fh, 4 * numel)
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            tensors[name] = torch.from_numpy(arr)
    return header, tensors


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, nn.Module], dict]:
    """Rebuild the models stored in a checkpoint; returns (config, models, extra)."""
    header, tensors = read_checkpoint(path)
    try:
        config = ModelConfig(**header["config"])
        model_names = header["models"]
    except (KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"{path}: bad header contents: {exc}") from None
    models = build_models(config)
    if sorted(models) != sorted(model_names):
        raise CheckpointFormatError(
            f"{path}: header lists models {model_names}, expected {sorted(models)}"
        )
    for model_name, model in models.items():
        prefix = model_name + "."
        state = {
            key[len(prefix):]: value for key, value in tensors.items() if key.startswith(prefix)
        }
        try:
            model.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise CheckpointFormatError(f"{path}: {exc}") from None
        model.eval()
    return config, models, header.get("extra", {})
