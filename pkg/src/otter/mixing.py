"""RWKV-style mixing units: spatial mixing, time mixing and channel mixing.

Tokens are channels-last. Spatial units take a grid ``(B, H, W, C)`` and
flatten it in raster order for the bidirectional kernel; time units take a
sequence ``(B, T, C)`` and use the causal kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import numerics as nm
from .numerics import ShapeError, Tensor
from .wkv import wkv_bidirectional, wkv_causal

RWKV4 = "rwkv4"
RWKV56 = "rwkv56"
VARIANTS = (RWKV4, RWKV56)


@dataclass
class MixParams:
    """Learnable parameters of one spatial- or time-mixing unit.

    ``mix_*`` are stored unconstrained and squashed with a sigmoid before use.
    The gate projection and its mix vector exist only for the RWKV-5/6 variant.
    """

    proj_r: Tensor
    proj_k: Tensor
    proj_v: Tensor
    proj_o: Tensor
    mix_r: Tensor
    mix_k: Tensor
    mix_v: Tensor
    decay: Tensor
    bonus: Tensor
    norm_gain: Tensor
    norm_bias: Tensor
    proj_g: Tensor | None = None
    mix_g: Tensor | None = None
    variant: str = RWKV56
    gate_act: str = "sigmoid"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if (self.proj_g is not None) != (self.variant == RWKV56) or (self.mix_g is not None) != (
            self.variant == RWKV56
        ):
            raise ValueError("gate parameters must be present iff variant is rwkv56")
        C = self.proj_r.shape[0]
        for p in (self.proj_r, self.proj_k, self.proj_v, self.proj_o, self.proj_g):
            if p is not None and p.shape != (C, C):
                raise ShapeError(f"projection must be ({C}, {C}), got {p.shape}")

    @property
    def channels(self) -> int:
        return self.proj_r.shape[0]

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self) if isinstance(getattr(self, f.name), Tensor)]


@dataclass
class ChannelMixParams:
    proj_r: Tensor
    proj_v: Tensor
    mix_r: Tensor
    mix_v: Tensor
    act_r: str = "sigmoid"
    act_v: str = "relu"

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [(n, getattr(self, n)) for n in ("proj_r", "proj_v", "mix_r", "mix_v")]


def init_mix_params(
    rng: np.random.Generator,
    channels: int,
    variant: str = RWKV56,
    gate_act: str = "sigmoid",
    scale: float | None = None,
    zero: bool = False,
) -> MixParams:
    """Random (or all-zero projection) initialisation; W_o starts at identity."""
    C = channels
    scale = 1.0 / np.sqrt(C) if scale is None else scale

    def proj():
        return nm.parameter(np.zeros((C, C)) if zero else rng.normal(0.0, scale, (C, C)))

    gated = variant == RWKV56
    return MixParams(
        proj_r=proj(),
        proj_k=proj(),
        proj_v=proj(),
        proj_o=nm.parameter(np.eye(C)),
        mix_r=nm.parameter(np.zeros(C)),
        mix_k=nm.parameter(np.zeros(C)),
        mix_v=nm.parameter(np.zeros(C)),
        decay=nm.parameter(np.linspace(0.1, 1.0, C) if not zero else np.zeros(C)),
        bonus=nm.parameter(np.zeros(C)),
        norm_gain=nm.parameter(np.ones(C)),
        norm_bias=nm.parameter(np.zeros(C)),
        proj_g=proj() if gated else None,
        mix_g=nm.parameter(np.zeros(C)) if gated else None,
        variant=variant,
        gate_act=gate_act,
    )


def init_channel_params(
    rng: np.random.Generator,
    channels: int,
    act_r: str = "sigmoid",
    act_v: str = "relu",
    scale: float | None = None,
    zero: bool = False,
) -> ChannelMixParams:
    C = channels
    scale = 1.0 / np.sqrt(C) if scale is None else scale

    def proj():
        return nm.parameter(np.zeros((C, C)) if zero else rng.normal(0.0, scale, (C, C)))

    return ChannelMixParams(
        proj_r=proj(),
        proj_v=proj(),
        mix_r=nm.parameter(np.zeros(C)),
        mix_v=nm.parameter(np.zeros(C)),
        act_r=act_r,
        act_v=act_v,
    )


# -- shifts ----------------------------------------------------------------


def quarter_bounds(channels: int, strict: bool = True) -> list[int]:
    """Channel cut points for the four shift directions (up, down, left, right)."""
    if channels % 4 == 0:
        q = channels // 4
        return [0, q, 2 * q, 3 * q, channels]
    if strict:
        raise ShapeError(f"q_shift needs channels divisible by 4, got {channels}")
    # uneven split, as np.array_split: earlier groups get the extra channels
    return [int(part[0]) if part.size else channels for part in np.array_split(np.arange(channels), 4)] + [channels]


def _q_shift_array(x: np.ndarray, b: list[int], adjoint: bool) -> np.ndarray:
    out = np.zeros_like(x)
    s = 1 if not adjoint else -1
    # (rows, cols) source offset per group; the adjoint moves values back
    groups = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    H, W = x.shape[1], x.shape[2]
    for (dh, dw), lo, hi in zip(groups, b[:-1], b[1:]):
        if lo == hi:
            continue
        dh, dw = dh * s, dw * s
        dst_h = slice(max(0, -dh), H - max(0, dh))
        src_h = slice(max(0, dh), H - max(0, -dh))
        dst_w = slice(max(0, -dw), W - max(0, dw))
        src_w = slice(max(0, dw), W - max(0, -dw))
        out[:, dst_h, dst_w, lo:hi] = x[:, src_h, src_w, lo:hi]
    return out


def q_shift(x, strict: bool = True) -> Tensor:
    """Quad-directional shift of a (B, H, W, C) grid.

    Channel quarter 0 comes from the row above, 1 from the row below, 2 from
    the column to the left and 3 from the column to the right; neighbours
    outside the grid contribute zeros.
    """
    x = nm.as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"q_shift expects (B, H, W, C), got {x.shape}")
    b = quarter_bounds(x.shape[-1], strict)
    return nm.make(_q_shift_array(x.data, b, False), (x,), lambda g: (_q_shift_array(g, b, True),), "q_shift")


def token_shift(x) -> Tensor:
    """Previous token along axis 1 of (B, T, C); zero before the first token."""
    x = nm.as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"token_shift expects (B, T, C), got {x.shape}")
    xd = x.data
    out = np.zeros_like(xd)
    out[:, 1:] = xd[:, :-1]

    def backward(g):
        gx = np.zeros_like(g)
        gx[:, :-1] = g[:, 1:]
        return (gx,)

    return nm.make(out, (x,), backward, "token_shift")


# -- units -----------------------------------------------------------------


def interpolate(x, x_shift, mu) -> Tensor:
    """``x + (1 - mu) * x_shift`` with ``mu`` already in [0, 1]."""
    x, x_shift, mu = nm.as_tensor(x), nm.as_tensor(x_shift), nm.as_tensor(mu)
    if x.shape != x_shift.shape:
        raise ShapeError(f"interpolate: {x.shape} vs {x_shift.shape}")
    return x + (1.0 - mu) * x_shift


def token_interp(x, x_shift, params: MixParams | ChannelMixParams, names=None) -> dict[str, Tensor]:
    """Project the interpolated token for each requested stream (r, k, v, g)."""
    if names is None:
        names = ["r", "k", "v"]
        if getattr(params, "proj_g", None) is not None:
            names.append("g")
    out = {}
    for n in names:
        mu = nm.sigmoid(getattr(params, f"mix_{n}"))
        out[n] = nm.matmul(interpolate(x, x_shift, mu), getattr(params, f"proj_{n}"))
    return out


def _mix_output(x, x_shift, params: MixParams, kernel) -> Tensor:
    s = token_interp(x, x_shift, params)
    mixed = kernel(s["k"], s["v"], params.decay, params.bonus)
    o = nm.layer_norm(nm.sigmoid(s["r"]) * mixed, params.norm_gain, params.norm_bias)
    if params.variant == RWKV56:
        o = nm.activation(params.gate_act)(s["g"]) * o
    return nm.matmul(o, params.proj_o)


def spatial_mix(x, params: MixParams, strict_shift: bool = True) -> Tensor:
    """Spatial mixing over a (B, H, W, C) grid; returns the same shape."""
    x = nm.as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"spatial_mix expects (B, H, W, C), got {x.shape}")
    B, H, W, C = x.shape
    xs = q_shift(x, strict_shift)
    tokens = x.reshape(B, H * W, C)
    shifted = xs.reshape(B, H * W, C)
    return _mix_output(tokens, shifted, params, wkv_bidirectional).reshape(B, H, W, C)


def time_mix(x, params: MixParams) -> Tensor:
    """Time mixing over (B, T, C) frame-ordered tokens."""
    x = nm.as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"time_mix expects (B, T, C), got {x.shape}")
    return _mix_output(x, token_shift(x), params, wkv_causal)


def channel_mix(x, x_shift, params: ChannelMixParams) -> Tensor:
    """``act_r(R) * act_v(V)`` with R, V from the interpolated token."""
    s = token_interp(x, x_shift, params, names=("r", "v"))
    return nm.activation(params.act_r)(s["r"]) * nm.activation(params.act_v)(s["v"])


def spatial_channel_mix(x, params: ChannelMixParams, strict_shift: bool = True) -> Tensor:
    """Channel mixing on a (B, H, W, C) grid using the quad shift."""
    return channel_mix(x, q_shift(x, strict_shift), params)


def temporal_channel_mix(x, params: ChannelMixParams) -> Tensor:
    return channel_mix(x, token_shift(x), params)
