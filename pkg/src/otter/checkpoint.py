"""Binary checkpoints.

Little-endian layout::

    b"OTCK"  uint32 version  uint64 episode  32-byte config digest
    uint32 n_params
    n_params x [uint16 name_len, name utf-8, uint8 dtype code,
                uint8 ndim, ndim x uint32 extents, raw little-endian data]

Parameters are stored in model declaration order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"OTCK"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


@dataclass
class Checkpoint:
    params: list[tuple[str, np.ndarray]]
    episode: int
    digest: bytes  # 32 bytes identifying the architecture

    def equals(self, other: "Checkpoint") -> bool:
        """Bit-exact comparison of every field."""
        if self.episode != other.episode or self.digest != other.digest or len(self.params) != len(other.params):
            return False
        for (n1, a1), (n2, a2) in zip(self.params, other.params):
            if n1 != n2 or a1.dtype != a2.dtype or a1.shape != a2.shape or a1.tobytes() != a2.tobytes():
                return False
        return True


def to_bytes(ckpt: Checkpoint) -> bytes:
    if len(ckpt.digest) != 32:
        raise ValueError("config digest must be 32 bytes")
    parts = [MAGIC, struct.pack("<IQ", VERSION, ckpt.episode), ckpt.digest, struct.pack("<I", len(ckpt.params))]
    for name, arr in ckpt.params:
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise ValueError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(parts)


def from_bytes(raw: bytes) -> Checkpoint:
    if raw[:4] != MAGIC:
        raise ValueError("not an OTCK checkpoint")
    version, episode = struct.unpack_from("<IQ", raw, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 16
    digest = raw[off : off + 32]
    off += 32
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    params = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + ln].decode()
        off += ln
        code, ndim = struct.unpack_from("<BB", raw, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        dt = _DTYPES[code]
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=off).reshape(shape).astype(dt.newbyteorder("="))
        off += count * dt.itemsize
        params.append((name, arr))
    if off != len(raw):
        raise ValueError(f"checkpoint has {len(raw) - off} trailing bytes")
    return Checkpoint(params, int(episode), bytes(digest))


def save(path: str, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt))


def load(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
