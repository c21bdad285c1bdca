"""Binary weights file: magic "SMAW1", then per-tensor records.

Record layout (all integers little-endian u32): name length, name bytes
(UTF-8), rank, dims, then row-major little-endian float32 data. Tensors are
written in sorted-name order so identical parameter sets produce identical
bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SMAW1"


class WeightsFormatError(ValueError):
    """File is not a well-formed SMAW1 weights file."""


def save_weights(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        for name in sorted(tensors):
            array = np.ascontiguousarray(tensors[name], dtype="<f4")
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack("<I", array.ndim))
            handle.write(struct.pack(f"<{array.ndim}I", *array.shape))
            handle.write(array.tobytes())


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise WeightsFormatError("missing SMAW1 magic")
    tensors: dict[str, np.ndarray] = {}
    offset = len(MAGIC)

    def read(fmt: str) -> tuple:
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise WeightsFormatError("truncated record")
        values = struct.unpack_from(fmt, data, offset)
        offset += size
        return values

    while offset < len(data):
        (name_len,) = read("<I")
        if offset + name_len > len(data):
            raise WeightsFormatError("truncated tensor name")
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = read("<I")
        dims = read(f"<{rank}I") if rank else ()
        count = int(np.prod(dims)) if dims else 1
        byte_count = count * 4
        if offset + byte_count > len(data):
            raise WeightsFormatError(f"truncated data for tensor {name!r}")
        array = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(dims)
        offset += byte_count
        tensors[name] = array.astype(np.float64)
    return tensors


def save_checkpoint(directory: str | Path, tensors: dict[str, np.ndarray], config: dict) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_weights(directory / "model.smaw", tensors)
    (directory / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    tensors = load_weights(directory / "model.smaw")
    config = json.loads((directory / "config.json").read_text())
    return tensors, config
