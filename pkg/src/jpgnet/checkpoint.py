"""Binary checkpoint format.

Layout (little-endian)::

    b"JPGN"            magic
    u32                format version (1)
    u32                tensor count
    per tensor:
      u32              name length in bytes
      bytes            UTF-8 name
      u8               dtype tag (0 = float32, 1 = float64)
      u8               rank
      u32[rank]        dims
      bytes            payload, C order
    u32                metadata length
    bytes              UTF-8 JSON metadata (configs, RNG state)

Tensors are written as float64 by default so that a save/load round trip
reproduces parameters bit for bit; float32 is available for smaller files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagicError, IOFormatError, TruncatedFileError, VersionMismatchError

MAGIC = b"JPGN"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def subset(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under ``prefix/``, with the prefix stripped."""
        p = prefix + "/"
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}


def encode(ckpt: Checkpoint, dtype: str = "float64") -> bytes:
    dt = np.dtype(dtype).newbyteorder("<")
    if dt not in _TAGS:
        raise ValueError(f"unsupported checkpoint dtype {dtype}")
    parts = [MAGIC, struct.pack("<II", VERSION, len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        raw = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype=dt)
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", _TAGS[dt], a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    meta = json.dumps(ckpt.meta, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, file has {len(self.buf)}"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(buf: bytes) -> Checkpoint:
    if buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    r = _Reader(buf)
    r.take(4)
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, this build reads {VERSION}")
    (count,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode("utf-8")
        tag, rank = r.unpack("<BB")
        if tag not in _DTYPES:
            raise IOFormatError(f"unknown dtype tag {tag} for tensor {name!r}")
        dims = r.unpack(f"<{rank}I") if rank else ()
        dt = _DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(r.take(nbytes), dtype=dt).reshape(dims)
        tensors[name] = arr.astype(np.float64)
    (mlen,) = r.unpack("<I")
    meta = json.loads(r.take(mlen).decode("utf-8")) if mlen else {}
    if r.pos != len(buf):
        raise IOFormatError(f"{len(buf) - r.pos} trailing bytes after checkpoint payload")
    return Checkpoint(tensors, meta)


def save_checkpoint(path, nets: dict, meta: dict | None = None, dtype: str = "float64") -> Path:
    """Write every network's parameters and buffers as ``<net>/<name>``."""
    tensors: dict[str, np.ndarray] = {}
    for prefix, net in nets.items():
        for name, arr in net.state_dict().items():
            tensors[f"{prefix}/{name}"] = arr
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode(Checkpoint(tensors, meta or {}), dtype))
    except OSError as exc:
        raise IOFormatError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IOFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(buf)
