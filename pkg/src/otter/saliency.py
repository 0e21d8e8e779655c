"""CSM saliency maps: PGM export and subject-mask statistics."""

from __future__ import annotations

import os

import numpy as np

from .model import OtterModel


def to_gray(lw: np.ndarray) -> np.ndarray:
    """Channel-averaged C x H x W weights in [0, 1] -> uint8 H x W (0.5 maps to 127/128)."""
    lw = np.asarray(lw, dtype=np.float64)
    if lw.ndim == 3:
        lw = lw.mean(axis=0)
    return np.clip(np.rint(lw * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: str, image: np.ndarray) -> None:
    """Binary (P5) 8-bit PGM."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got {image.shape}")
    H, W = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    if tokens[0] != "P5" or tokens[3] != "255":
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    W, H = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw, dtype=np.uint8, count=W * H, offset=pos + 1).reshape(H, W)


def export_saliency(model: OtterModel, clip: np.ndarray, out_dir: str, prefix: str = "saliency") -> list[str]:
    """One PGM per frame of the channel-averaged CSM weights."""
    os.makedirs(out_dir, exist_ok=True)
    lw = model.saliency(clip)
    paths = []
    for f, frame in enumerate(lw):
        path = os.path.join(out_dir, f"{prefix}_{f:02d}.pgm")
        write_pgm(path, to_gray(frame))
        paths.append(path)
    return paths


def mask_contrast(lw: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    """Mean channel-averaged weight inside and outside a subject mask, over frames with a subject."""
    lw = np.asarray(lw).mean(axis=1)  # (F, H, W)
    mask = np.asarray(mask, dtype=bool)
    keep = mask.reshape(len(mask), -1).any(axis=1) & ~mask.reshape(len(mask), -1).all(axis=1)
    if not keep.any():
        raise ValueError("mask is empty or full in every frame")
    return float(lw[keep][mask[keep]].mean()), float(lw[keep][~mask[keep]].mean())


def saliency_hit_rate(model: OtterModel, samples) -> tuple[float, np.ndarray]:
    """Fraction of clips whose mean in-mask weight exceeds the out-of-mask mean, and the per-clip gaps."""
    gaps = []
    for s in samples:
        inside, outside = mask_contrast(model.saliency(s.clip), s.mask)
        gaps.append(inside - outside)
    gaps = np.asarray(gaps)
    return float(np.mean(gaps > 0)), gaps
