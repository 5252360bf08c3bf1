"""
Parameter checkpoints in the ORDG1 format plus a JSON model-config sidecar.

Layout: b"ORDG1\\n", then per parameter in lexicographic name order a name
line, a shape line of space-separated extents, and the raw little-endian
float64 values.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from core.constants import CHECKPOINT_MAGIC
from core.errors import ShapeError
from core.models import ModelConfig
from ml.autodiff import Parameter
from ml.model import OrdinalNet, build


def encode_parameters(arrays: dict[str, np.ndarray]) -> bytes:
    chunks = [CHECKPOINT_MAGIC]
    for name in sorted(arrays):
        value = np.asarray(arrays[name], dtype=np.float64)
        assert "\n" not in name and name, f"invalid parameter name {name!r}"
        chunks.append(f"{name}\n".encode("utf-8"))
        chunks.append((" ".join(str(d) for d in value.shape) + "\n").encode("ascii"))
        chunks.append(value.astype("<f8").tobytes())
    return b"".join(chunks)


def decode_parameters(data: bytes) -> dict[str, np.ndarray]:
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not an ORDG1 checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    out: dict[str, np.ndarray] = {}
    while pos < len(data):
        name_end = data.index(b"\n", pos)
        name = data[pos:name_end].decode("utf-8")
        shape_end = data.index(b"\n", name_end + 1)
        shape_line = data[name_end + 1:shape_end].decode("ascii").split()
        shape = tuple(int(d) for d in shape_line)
        count = int(np.prod(shape)) if shape else 1
        start = shape_end + 1
        end = start + 8 * count
        if end > len(data):
            raise ValueError(f"checkpoint truncated inside {name!r}")
        out[name] = np.frombuffer(data[start:end], dtype="<f8").astype(np.float64).reshape(shape)
        pos = end
    return out


def save_model(model: OrdinalNet, path: Path) -> None:
    """Write path (.ordg) and its .json sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_parameters({name: p.value for name, p in model.params.items()}))
    path.with_suffix(".json").write_text(json.dumps(model.config.to_dict(), indent=2) + "\n")


def load_model(path: Path) -> OrdinalNet:
    path = Path(path)
    config = ModelConfig.from_dict(json.loads(path.with_suffix(".json").read_text()))
    arrays = decode_parameters(path.read_bytes())
    template = build(config, np.random.default_rng(0))
    params: dict[str, Parameter] = {}
    for name, p in template.params.items():
        if name not in arrays:
            raise ShapeError(f"checkpoint is missing parameter {name!r}")
        if arrays[name].shape != p.value.shape:
            raise ShapeError(f"{name}: checkpoint shape {arrays[name].shape} != model shape {p.value.shape}")
        params[name] = Parameter(arrays[name].copy(), name)
    return OrdinalNet(config, params)
