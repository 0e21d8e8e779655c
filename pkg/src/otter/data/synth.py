"""Synthetic wide-angle motion clips.

A scene is a procedural background (a sum of random colour gratings) with a
small bright square moving along a class-specific trajectory. The camera is
simulated analytically: each output pixel is mapped through a barrel
distortion of strength ``U_d`` and a magnification ``U_m`` into scene
coordinates, so higher field-of-view levels show more background, a smaller
subject, and stronger edge compression. Coordinates are normalised so the
level-0 frame spans [-1, 1] on both axes (y grows downwards).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CLASSES = ("left", "right", "up", "down", "clockwise", "counterclockwise", "approach", "recede")
REVERSE_PAIRS = {
    "left": "right",
    "right": "left",
    "up": "down",
    "down": "up",
    "clockwise": "counterclockwise",
    "counterclockwise": "clockwise",
    "approach": "recede",
    "recede": "approach",
}
FOV_LEVELS = 5


@dataclass(frozen=True)
class SynthConfig:
    classes: tuple[str, ...] = CLASSES
    frames: int = 8
    height: int = 64
    width: int = 64
    channels: int = 3
    subject_fraction: float = 0.3  # subject side / frame side at level 0
    fov_level: int = 2
    texture_seed: int = 0
    texture_contrast: float = 0.05
    gratings: int = 6
    speed: float = 0.075  # level-0 frame widths per frame
    orbit_radius: float = 0.4
    orbit_step: float = 0.55  # radians per frame
    growth: float = 1.12  # per-frame scale factor for approach / recede
    magnification_step: float = 0.25  # U_m = 1 + step * level
    distortion_step: float = 0.08  # U_d = step * level
    sensor_noise: float = 0.02

    def __post_init__(self):
        if not 0 < self.subject_fraction < 1:
            raise ValueError(f"subject_fraction must lie in (0, 1), got {self.subject_fraction}")
        if not 0 <= self.fov_level < FOV_LEVELS:
            raise ValueError(f"fov_level must be in 0..{FOV_LEVELS - 1}")
        if len(self.classes) < 5:
            raise ValueError("need at least five classes for 5-way episodes")
        unknown = set(self.classes) - set(REVERSE_PAIRS)
        if unknown:
            raise ValueError(f"unknown motion classes {sorted(unknown)}")
        if self.channels != 3:
            raise ValueError("clips are RGB")

    @property
    def magnification(self) -> float:
        return 1.0 + self.magnification_step * self.fov_level

    @property
    def distortion(self) -> float:
        return self.distortion_step * self.fov_level


@dataclass
class VideoSample:
    clip: np.ndarray  # (F, C, H, W) float32
    label: int
    fov_level: int = 0
    mask: np.ndarray | None = field(default=None, repr=False)  # (F, H, W) subject mask
    seed: int | None = None


def _trajectory(name: str, cfg: SynthConfig, rng: np.random.Generator):
    """Per-frame subject centre (x, y) and half-size, in scene units."""
    F = cfg.frames
    t = np.arange(F, dtype=np.float64)
    half = cfg.subject_fraction  # side = fraction * 2 units
    step = 2.0 * cfg.speed
    span = step * (F - 1)
    lim = 0.85 - half
    sizes = np.full(F, half)
    if name in ("left", "right", "up", "down"):
        if span > 2 * lim:
            raise ValueError("speed too high: the path leaves the frame")
        along0 = rng.uniform(-lim, lim - span)
        along = along0 + step * t
        if name in ("left", "up"):
            along = along[::-1]
        across = np.full(F, rng.uniform(-lim, lim))
        x, y = (along, across) if name in ("left", "right") else (across, along)
    elif name in ("clockwise", "counterclockwise"):
        r = cfg.orbit_radius
        cx, cy = rng.uniform(-(lim - r), lim - r, size=2)
        theta = rng.uniform(0, 2 * np.pi) + cfg.orbit_step * t * (1 if name == "clockwise" else -1)
        x, y = cx + r * np.cos(theta), cy + r * np.sin(theta)
    else:
        scale = cfg.growth ** (t - (F - 1) / 2)
        if name == "recede":
            scale = scale[::-1]
        sizes = half * scale
        c = rng.uniform(-(lim - sizes.max() + half), lim - sizes.max() + half, size=2)
        x, y = np.full(F, c[0]), np.full(F, c[1])
    return x, y, sizes


def _background(cfg: SynthConfig, rng: np.random.Generator):
    n = cfg.gratings
    freq = rng.uniform(2.0, 9.0, n)
    ang = rng.uniform(0, np.pi, n)
    phase = rng.uniform(0, 2 * np.pi, n)
    colors = rng.uniform(0.3, 1.0, (n, 3)) * cfg.texture_contrast * 2 / np.sqrt(n)
    base = rng.uniform(0.3, 0.5, 3)

    def render(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(base[:, None, None], (3,) + X.shape).copy()
        for f, a, ph, col in zip(freq, ang, phase, colors):
            wave = np.cos(f * (X * np.cos(a) + Y * np.sin(a)) + ph)
            out += col[:, None, None] * wave
        return out

    return render


def scene_coordinates(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Scene (X, Y) sampled by each output pixel after distortion and magnification."""
    ys = (np.arange(cfg.height) + 0.5) / cfg.height * 2 - 1
    xs = (np.arange(cfg.width) + 0.5) / cfg.width * 2 - 1
    xo, yo = np.meshgrid(xs, ys)
    radial = 1.0 + cfg.distortion * (xo**2 + yo**2)
    return xo * radial * cfg.magnification, yo * radial * cfg.magnification


def field_of_view(sensor_extent: float, focal_length: float) -> float:
    """Angular field of view in degrees for a sensor extent and focal length."""
    return float(np.degrees(2 * np.arctan(sensor_extent / (2 * focal_length))))


def synth_generate(cfg: SynthConfig, seed: int, label: int | None = None) -> VideoSample:
    """Deterministic clip of class ``cfg.classes[label]`` for ``seed``.

    Without an explicit label the class cycles with the seed.
    """
    if label is None:
        label = seed % len(cfg.classes)
    if not 0 <= label < len(cfg.classes):
        raise ValueError(f"label {label} outside 0..{len(cfg.classes) - 1}")
    rng = np.random.default_rng([cfg.texture_seed, seed, label])
    bg = _background(cfg, rng)
    x, y, half = _trajectory(cfg.classes[label], cfg, rng)
    color = rng.uniform(0.9, 1.0, 3)
    X, Y = scene_coordinates(cfg)
    backdrop = bg(X, Y)
    F = cfg.frames
    clip = np.empty((F, 3, cfg.height, cfg.width), dtype=np.float64)
    mask = np.zeros((F, cfg.height, cfg.width), dtype=bool)
    for f in range(F):
        m = (np.abs(X - x[f]) <= half[f]) & (np.abs(Y - y[f]) <= half[f])
        frame = backdrop.copy()
        frame[:, m] = color[:, None]
        clip[f] = frame
        mask[f] = m
    if cfg.sensor_noise:
        clip += rng.normal(0.0, cfg.sensor_noise, clip.shape)
    return VideoSample(clip=clip.astype(np.float32), label=label, fov_level=cfg.fov_level, mask=mask, seed=seed)


def centroid_track(mask: np.ndarray) -> np.ndarray:
    """(F, 2) centroid (row, col) of a per-frame mask; NaN where empty."""
    out = np.full((mask.shape[0], 2), np.nan)
    for f, m in enumerate(mask):
        rows, cols = np.nonzero(m)
        if rows.size:
            out[f] = rows.mean(), cols.mean()
    return out
