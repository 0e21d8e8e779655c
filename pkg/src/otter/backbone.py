"""Desk-scale per-frame feature extractor built from the mixing units.

frame -> patch embedding (+ learned position embedding) -> per stage:
residual spatial mix, residual channel mix, 2x2 patch merge -> mean over
tokens -> linear head to ``out_dim``. Frames never interact here; temporal
modelling is left to the temporal reconstruction module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .mixing import (
    ChannelMixParams,
    MixParams,
    init_channel_params,
    init_mix_params,
    spatial_channel_mix,
    spatial_mix,
)
from .numerics import ShapeError, Tensor


@dataclass(frozen=True)
class BackboneConfig:
    height: int = 64
    width: int = 64
    channels: int = 3
    patch: int = 4
    widths: tuple[int, ...] = (16, 32, 64)  # stage widths; the last is the post-merge width
    out_dim: int = 64

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("need at least one stage")
        if self.out_dim < 1:
            raise ValueError("out_dim must be positive")
        if self.height % self.patch or self.width % self.patch:
            raise ValueError(f"frame {self.height}x{self.width} not divisible by patch {self.patch}")
        h, w = self.height // self.patch, self.width // self.patch
        for _ in range(self.n_stages):
            if h % 2 or w % 2:
                raise ValueError("token grid too small for the requested number of stages")
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ValueError("final spatial extent must be at least 1")

    @property
    def n_stages(self) -> int:
        return len(self.widths) - 1


@dataclass
class StageParams:
    smix: MixParams
    cmix: ChannelMixParams
    merge: Tensor  # (4 * width, next width)
    merge_bias: Tensor

    def tensors(self):
        out = [(f"smix.{n}", t) for n, t in self.smix.tensors()]
        out += [(f"cmix.{n}", t) for n, t in self.cmix.tensors()]
        return out + [("merge", self.merge), ("merge_bias", self.merge_bias)]


@dataclass
class BackboneParams:
    embed: Tensor
    embed_bias: Tensor
    pos: Tensor
    stages: list[StageParams] = field(default_factory=list)
    head: Tensor | None = None
    head_bias: Tensor | None = None

    def tensors(self):
        out = [("embed", self.embed), ("embed_bias", self.embed_bias), ("pos", self.pos)]
        for i, st in enumerate(self.stages):
            out += [(f"stage{i}.{n}", t) for n, t in st.tensors()]
        return out + [("head", self.head), ("head_bias", self.head_bias)]


def init_backbone(rng: np.random.Generator, cfg: BackboneConfig, variant: str = "rwkv56", zero_head: bool = False):
    P, C = cfg.patch, cfg.channels
    fan_in = P * P * C
    h, w = cfg.height // P, cfg.width // P
    stages = []
    for wi, wn in zip(cfg.widths[:-1], cfg.widths[1:]):
        stages.append(
            StageParams(
                smix=init_mix_params(rng, wi, variant, "sigmoid"),
                cmix=init_channel_params(rng, wi, "sigmoid", "relu"),
                merge=nm.parameter(rng.normal(0, 1 / np.sqrt(4 * wi), (4 * wi, wn))),
                merge_bias=nm.parameter(np.zeros(wn)),
            )
        )
    last = cfg.widths[-1]
    return BackboneParams(
        embed=nm.parameter(rng.normal(0, 1 / np.sqrt(fan_in), (fan_in, cfg.widths[0]))),
        embed_bias=nm.parameter(np.zeros(cfg.widths[0])),
        pos=nm.parameter(rng.normal(0, 0.5, (h, w, cfg.widths[0]))),
        stages=stages,
        head=nm.parameter(np.zeros((last, cfg.out_dim)) if zero_head else rng.normal(0, 1 / np.sqrt(last), (last, cfg.out_dim))),
        head_bias=nm.parameter(np.zeros(cfg.out_dim)),
    )


def _patchify(x: Tensor, P: int) -> Tensor:
    N, H, W, C = x.shape
    t = x.reshape(N, H // P, P, W // P, P, C).transpose(0, 1, 3, 2, 4, 5)
    return t.reshape(N, H // P, W // P, P * P * C)


def _merge(x: Tensor) -> Tensor:
    N, h, w, C = x.shape
    t = x.reshape(N, h // 2, 2, w // 2, 2, C).transpose(0, 1, 3, 2, 4, 5)
    return t.reshape(N, h // 2, w // 2, 4 * C)


def extract_frames(frames, params: BackboneParams, cfg: BackboneConfig) -> Tensor:
    """(N, H, W, C) channels-last frames -> (N, out_dim) features."""
    frames = nm.as_tensor(frames)
    if frames.shape[1:] != (cfg.height, cfg.width, cfg.channels):
        raise ShapeError(f"frames {frames.shape[1:]} do not match backbone config {(cfg.height, cfg.width, cfg.channels)}")
    x = nm.matmul(_patchify(frames, cfg.patch), params.embed) + params.embed_bias + params.pos
    for st in params.stages:
        x = spatial_mix(x, st.smix) + x
        x = spatial_channel_mix(x, st.cmix) + x
        x = nm.matmul(_merge(x), st.merge) + st.merge_bias
    pooled = nm.mean(x, axis=(1, 2))
    return nm.matmul(pooled, params.head) + params.head_bias


def extract(clip: np.ndarray, params: BackboneParams, cfg: BackboneConfig) -> np.ndarray:
    """F x C x H x W clip -> F x D features."""
    clip = np.asarray(clip)
    return extract_frames(nm.Tensor(clip.transpose(0, 2, 3, 1)), params, cfg).data
