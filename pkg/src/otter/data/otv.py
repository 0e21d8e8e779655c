"""``.otv`` clip files and dataset manifests.

Layout: b"OTV1", four uint32 LE extents (F, C, H, W), F*C*H*W float32 LE
values in C order, then one uint32 LE label.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"OTV1"
_HEADER = struct.Struct("<4s4I")
_LABEL = struct.Struct("<I")


def write_otv(path: str, clip: np.ndarray, label: int) -> None:
    clip = np.asarray(clip)
    if clip.ndim != 4:
        raise ValueError(f"clip must be F x C x H x W, got {clip.shape}")
    if label < 0:
        raise ValueError("label must be nonnegative")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *clip.shape))
        fh.write(np.ascontiguousarray(clip, dtype="<f4").tobytes())
        fh.write(_LABEL.pack(label))


def read_otv(path: str) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an OTV1 clip")
    _, F, C, H, W = _HEADER.unpack_from(raw)
    n = F * C * H * W
    expected = _HEADER.size + 4 * n + _LABEL.size
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    clip = np.frombuffer(raw, dtype="<f4", count=n, offset=_HEADER.size).reshape(F, C, H, W)
    (label,) = _LABEL.unpack_from(raw, _HEADER.size + 4 * n)
    return clip.astype(np.float32), int(label)


def write_manifest(path: str, entries) -> None:
    """``entries`` is an iterable of (clip path, label); paths are stored relative to the manifest."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w") as fh:
        for clip_path, label in entries:
            rel = os.path.relpath(os.path.abspath(clip_path), base)
            if any(ch.isspace() for ch in rel):
                raise ValueError(f"clip path may not contain whitespace: {rel!r}")
            fh.write(f"{rel} {int(label)}\n")


def read_manifest(path: str) -> list[tuple[str, int]]:
    base = os.path.dirname(os.path.abspath(path))
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'path label'")
            clip_path = parts[0] if os.path.isabs(parts[0]) else os.path.join(base, parts[0])
            if not os.path.exists(clip_path):
                raise FileNotFoundError(f"{path}:{lineno}: {clip_path} does not exist")
            out.append((clip_path, int(parts[1])))
    return out
