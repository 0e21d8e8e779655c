"""Temporal reconstruction: ordered and reversed scans over frame features.

Each branch runs residual time mixing (SiLU gate) and residual channel
mixing over the frames, derives per-frame weights from a 1-D convolution
over time plus the input, and returns weights times branch features. The
module output is the input plus the mean of the enabled branches, with the
reversed branch flipped back to the original frame order first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .mixing import (
    ChannelMixParams,
    MixParams,
    init_channel_params,
    init_mix_params,
    temporal_channel_mix,
    time_mix,
)
from .numerics import ShapeError, Tensor

ORDERED = "ordered"
REVERSED = "reversed"
BOTH = "both"
BRANCH_MODES = (ORDERED, REVERSED, BOTH)


@dataclass
class TRMBranchParams:
    tmix: MixParams
    cmix: ChannelMixParams
    conv_weight: Tensor  # (k, D, D)
    conv_bias: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = [(f"tmix.{n}", t) for n, t in self.tmix.tensors()]
        out += [(f"cmix.{n}", t) for n, t in self.cmix.tensors()]
        return out + [("conv_weight", self.conv_weight), ("conv_bias", self.conv_bias)]


@dataclass
class TRMParams:
    ordered: TRMBranchParams
    reversed: TRMBranchParams

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [(f"ordered.{n}", t) for n, t in self.ordered.tensors()] + [
            (f"reversed.{n}", t) for n, t in self.reversed.tensors()
        ]


def init_branch(rng: np.random.Generator, dim: int, variant: str = "rwkv56", kernel: int = 3, zero: bool = False):
    scale = 1.0 / np.sqrt(kernel * dim)
    return TRMBranchParams(
        tmix=init_mix_params(rng, dim, variant, "silu", zero=zero),
        cmix=init_channel_params(rng, dim, "sigmoid", "relu", zero=zero),
        conv_weight=nm.parameter(np.zeros((kernel, dim, dim)) if zero else rng.normal(0, scale, (kernel, dim, dim))),
        conv_bias=nm.parameter(np.zeros(dim)),
    )


def init_trm_params(rng: np.random.Generator, dim: int, variant: str = "rwkv56", zero: bool = False) -> TRMParams:
    return TRMParams(ordered=init_branch(rng, dim, variant, zero=zero), reversed=init_branch(rng, dim, variant, zero=zero))


def _as_batch(x) -> tuple[Tensor, bool]:
    x = nm.as_tensor(x)
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    if x.ndim != 3:
        raise ShapeError(f"frame features must be (F, D) or (B, F, D), got {x.shape}")
    return x, False


def trm_branch(x, direction: str, params: TRMBranchParams) -> Tensor:
    """One scanning branch over (F, D) or (B, F, D) features."""
    if direction not in (ORDERED, REVERSED):
        raise ValueError(f"direction must be ordered or reversed, got {direction!r}")
    xb, squeeze = _as_batch(x)
    if xb.shape[-1] != params.tmix.channels:
        raise ShapeError(f"feature dim {xb.shape[-1]} != branch dim {params.tmix.channels}")
    if direction == REVERSED:
        xb = nm.flip(xb, 1)
    alpha = time_mix(xb, params.tmix) + xb
    beta = temporal_channel_mix(alpha, params.cmix) + alpha
    lw = nm.sigmoid(nm.conv1d(beta, params.conv_weight, params.conv_bias) + xb)
    out = lw * beta
    if direction == REVERSED:
        out = nm.flip(out, 1)
    return out.reshape(out.shape[1:]) if squeeze else out


def trm_forward(x, params: TRMParams, branches: str = BOTH) -> Tensor:
    """``x + mean(enabled branches)``; ``branches`` selects ordered, reversed or both."""
    if branches not in BRANCH_MODES:
        raise ValueError(f"branches must be one of {BRANCH_MODES}")
    x = nm.as_tensor(x)
    if branches == ORDERED:
        return x + trm_branch(x, ORDERED, params.ordered)
    if branches == REVERSED:
        return x + trm_branch(x, REVERSED, params.reversed)
    return x + 0.5 * (trm_branch(x, ORDERED, params.ordered) + trm_branch(x, REVERSED, params.reversed))
