"""Sample-, frame- and pixel-level corruption protocols."""

from __future__ import annotations

import copy
from dataclasses import replace

import numpy as np
from scipy import ndimage

from .episodes import Episode
from .synth import SynthConfig, VideoSample, synth_generate

MAX_SAMPLE_NOISE = 0.4
VISUAL_KINDS = ("zoom", "gaussian")


def corrupted_positions(episode: Episode, ratio: float, seed: int) -> list[np.ndarray]:
    """Support positions per class that :func:`inject_sample_noise` replaces."""
    if not 0 <= ratio <= MAX_SAMPLE_NOISE:
        raise ValueError(f"sample noise ratio must lie in [0, {MAX_SAMPLE_NOISE}], got {ratio}")
    n_bad = int(round(ratio * episode.shot))
    rng = np.random.default_rng([seed, 0x5A, 0])
    return [np.sort(rng.choice(episode.shot, n_bad, replace=False)) for _ in range(episode.way)]


def inject_sample_noise(episode: Episode, ratio: float, seed: int) -> Episode:
    """Replace ``round(ratio * K)`` supports of every class with clips of other classes.

    Labels in the episode are kept, so the replacements act as mislabelled
    shots. Replacements come from unused pool samples when the episode knows
    its pool, otherwise from the other classes' supports.
    """
    positions = corrupted_positions(episode, ratio, seed)
    if not positions[0].size:
        return episode
    rng = np.random.default_rng([seed, 0x5A, 1])
    out = copy.copy(episode)
    out.support = [list(row) for row in episode.support]
    out.support_keys = [list(row) for row in episode.support_keys]
    used = {k for row in episode.support_keys for k in row} | set(episode.query_keys)
    pool = episode.pool
    for c, rows in enumerate(positions):
        for pos in rows:
            if pool is not None:
                others = [lab for lab in pool.classes() if lab != episode.class_ids[c]]
                lab = others[int(rng.integers(len(others)))]
                free = [i for i in range(pool.count(lab)) if (lab, i) not in used]
                if not free:
                    raise ValueError(f"pool class {lab} exhausted while injecting sample noise")
                idx = free[int(rng.integers(len(free)))]
                used.add((lab, idx))
                out.support[c][pos] = pool.get(lab, idx)
                out.support_keys[c][pos] = (lab, idx)
            else:
                other = int(rng.choice([j for j in range(episode.way) if j != c]))
                out.support[c][pos] = episode.support[other][int(rng.integers(episode.shot))]
    return out


def noisy_frame_positions(n_frames: int, count: int, seed: int) -> np.ndarray:
    """Frame indices that :func:`inject_frame_noise` overwrites."""
    if not 0 <= count <= n_frames // 2:
        raise ValueError(f"noisy frame count must lie in 0..{n_frames // 2}, got {count}")
    rng = np.random.default_rng([seed, 0xF4, 0])
    return np.sort(rng.choice(n_frames, count, replace=False))


def inject_frame_noise(sample: VideoSample, count: int, seed: int, cfg: SynthConfig | None = None) -> VideoSample:
    """Overwrite ``count`` random frames with the same positions of an unrelated generated clip."""
    F, C, H, W = sample.clip.shape
    positions = noisy_frame_positions(F, count, seed)
    if count == 0:
        return sample
    rng = np.random.default_rng([seed, 0xF4, 1])
    if cfg is None:
        cfg = SynthConfig(frames=F, height=H, width=W, fov_level=sample.fov_level)
    labels = [i for i in range(len(cfg.classes)) if i != sample.label]
    other = synth_generate(cfg, int(rng.integers(1 << 30)) + (1 << 40), labels[int(rng.integers(len(labels)))])
    clip = sample.clip.copy()
    clip[positions] = other.clip[positions]
    mask = None
    if sample.mask is not None:
        mask = sample.mask.copy()
        mask[positions] = False
    return replace(sample, clip=clip, mask=mask)


def _zoom_frames(arr: np.ndarray, factor: float, order: int) -> np.ndarray:
    """Centre crop by ``factor`` and resample back to the full extent (bilinear for order 1)."""
    H, W = arr.shape[-2:]
    rows = (np.arange(H) + 0.5 - H / 2) / factor + H / 2 - 0.5
    cols = (np.arange(W) + 0.5 - W / 2) / factor + W / 2 - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    flat = arr.reshape(-1, H, W)
    out = np.stack([ndimage.map_coordinates(f, [rr, cc], order=order, mode="nearest") for f in flat])
    return out.reshape(arr.shape)


def inject_visual_noise(sample: VideoSample, kind: str, strength: float, seed: int = 0) -> VideoSample:
    """``zoom``: centre crop rescaled by 1 + strength; ``gaussian``: additive noise, std = strength * dynamic range."""
    if kind not in VISUAL_KINDS:
        raise ValueError(f"unknown visual noise kind {kind!r}; expected one of {VISUAL_KINDS}")
    if not 0 <= strength <= 1:
        raise ValueError(f"strength must lie in [0, 1], got {strength}")
    if strength == 0:
        return sample
    clip = sample.clip
    if kind == "zoom":
        factor = 1.0 + strength
        new = _zoom_frames(clip.astype(np.float64), factor, 1).astype(np.float32)
        mask = None if sample.mask is None else _zoom_frames(sample.mask.astype(np.float64), factor, 0) > 0.5
        return replace(sample, clip=new, mask=mask)
    rng = np.random.default_rng([seed, 0x6A])
    span = float(clip.max() - clip.min())
    noise = rng.normal(0.0, strength * span, clip.shape)
    return replace(sample, clip=(clip + noise).astype(np.float32))
