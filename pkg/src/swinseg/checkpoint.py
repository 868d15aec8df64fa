"""Portable model snapshots.

Layout (little-endian): magic ``RSCA``, u32 version, u32 config-hash,
u32 entry count, then per entry: u16 name length, UTF-8 name, u8 ndims,
u32 dims, raw float32 payload. Entries cover parameters first, then
running-stat buffers, in manifest order; a file must end exactly at the
last payload byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import Model, ModelConfig

MAGIC = b"RSCA"
VERSION = 1


class CheckpointError(Exception):
    """Checkpoint rejected; ``kind`` is one of magic/version/confighash/manifest/truncated."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _entries(model: Model):
    for name, p in model.store.params.items():
        yield name, p.data
    for name, b in model.store.buffers.items():
        yield name, b


def save_checkpoint(model: Model, path):
    path = Path(path)
    entries = list(_entries(model))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", model.config.config_hash()))
        fh.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated", f"file ends {self.pos + n - len(self.blob)} bytes early")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.take(1)[0]

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, config: ModelConfig) -> Model:
    """Rebuild a model for ``config`` from a snapshot, verifying every field."""
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError("magic", f"{path}: not a checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError("version", f"{path}: unsupported version {version}")
    file_hash = r.u32()
    if file_hash != config.config_hash():
        raise CheckpointError(
            "confighash",
            f"{path}: checkpoint was written for a different config "
            f"(hash {file_hash:#010x} != {config.config_hash():#010x})",
        )
    count = r.u32()

    model = Model(config, seed=0)
    manifest = model.manifest()
    if count != len(manifest):
        raise CheckpointError(
            "manifest", f"{path}: {count} entries, model needs {len(manifest)}"
        )
    arrays: dict[str, np.ndarray] = {}
    for want_name, want_shape in manifest:
        try:
            name = r.take(r.u16()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("manifest", f"{path}: undecodable entry name ({exc})") from exc
        ndim = r.u8()
        shape = tuple(r.u32() for _ in range(ndim))
        payload = r.take(4 * int(np.prod(shape, dtype=np.int64)) if shape else 4)
        if name != want_name or shape != want_shape:
            raise CheckpointError(
                "manifest",
                f"{path}: entry ({name}, {shape}) does not match manifest ({want_name}, {want_shape})",
            )
        arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(blob):
        raise CheckpointError("truncated", f"{path}: {len(blob) - r.pos} trailing bytes")

    for name, p in model.store.params.items():
        p.tensor.data = arrays[name].copy()
    for name in list(model.store.buffers):
        model.store.buffers[name][...] = arrays[name]
    return model
