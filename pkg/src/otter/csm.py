"""Compound segmentation: per-patch mixing branches with sigmoid saliency weights.

Each frame is cut into non-overlapping ``p x p`` patches. Every patch runs
spatial mixing and channel mixing as residual branches, a 3x3 convolution
of the result plus the raw patch gives a saliency map ``lw`` in (0, 1), and
``lw * branch`` is written back in place. The reassembled frame goes through
global spatial and channel mixing (again residual) and is finally added to
the raw input.

Public functions take channel-first arrays (``C x H x W`` frames,
``F x C x H x W`` clips); internally everything is channels-last.
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
    spatial_channel_mix,
    spatial_mix,
)
from .numerics import ShapeError, Tensor

CONV_KERNEL = 3


@dataclass
class CSMParams:
    patch_smix: MixParams
    patch_cmix: ChannelMixParams
    conv_weight: Tensor  # (k, k, C, C)
    conv_bias: Tensor
    global_smix: MixParams
    global_cmix: ChannelMixParams

    def tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for prefix, unit in (("patch_smix", self.patch_smix), ("patch_cmix", self.patch_cmix)):
            out += [(f"{prefix}.{n}", t) for n, t in unit.tensors()]
        out += [("conv_weight", self.conv_weight), ("conv_bias", self.conv_bias)]
        for prefix, unit in (("global_smix", self.global_smix), ("global_cmix", self.global_cmix)):
            out += [(f"{prefix}.{n}", t) for n, t in unit.tensors()]
        return out


def init_csm_params(
    rng: np.random.Generator,
    channels: int = 3,
    variant: str = "rwkv56",
    kernel: int = CONV_KERNEL,
    zero: bool = False,
) -> CSMParams:
    C = channels
    conv_scale = 1.0 / np.sqrt(kernel * kernel * C)
    return CSMParams(
        patch_smix=init_mix_params(rng, C, variant, "sigmoid", zero=zero),
        patch_cmix=init_channel_params(rng, C, "sigmoid", "relu", zero=zero),
        conv_weight=nm.parameter(np.zeros((kernel, kernel, C, C)) if zero else rng.normal(0, conv_scale, (kernel, kernel, C, C))),
        conv_bias=nm.parameter(np.zeros(C)),
        global_smix=init_mix_params(rng, C, variant, "sigmoid", zero=zero),
        global_cmix=init_channel_params(rng, C, "sigmoid", "relu", zero=zero),
    )


def _check_divisible(H: int, W: int, p: int) -> None:
    if p < 1 or H % p or W % p:
        raise ShapeError(f"frame {H}x{W} is not divisible into {p}x{p} patches")


def segment_grid(x, p: int) -> Tensor:
    """(N, H, W, C) -> (N * H/p * W/p, p, p, C), patches in row-major order per frame."""
    x = nm.as_tensor(x)
    N, H, W, C = x.shape
    _check_divisible(H, W, p)
    nh, nw = H // p, W // p
    t = x.reshape(N, nh, p, nw, p, C).transpose(0, 1, 3, 2, 4, 5)
    return t.reshape(N * nh * nw, p, p, C)


def reassemble_grid(patches, n_frames: int, H: int, W: int) -> Tensor:
    """Inverse of :func:`segment_grid`."""
    patches = nm.as_tensor(patches)
    M, p, p2, C = patches.shape
    _check_divisible(H, W, p)
    nh, nw = H // p, W // p
    if p != p2 or M != n_frames * nh * nw:
        raise ShapeError(f"expected {n_frames * nh * nw} patches of {p}x{p}, got {M} of {p}x{p2}")
    t = patches.reshape(n_frames, nh, nw, p, p, C).transpose(0, 1, 3, 2, 4, 5)
    return t.reshape(n_frames, H, W, C)


def segment(frame: np.ndarray, p: int) -> np.ndarray:
    """Split a C x H x W frame into (H/p * W/p, C, p, p) patches, row-major."""
    frame = np.asarray(frame)
    C, H, W = frame.shape
    _check_divisible(H, W, p)
    nh, nw = H // p, W // p
    return frame.reshape(C, nh, p, nw, p).transpose(1, 3, 0, 2, 4).reshape(nh * nw, C, p, p)


def patch_origins(H: int, W: int, p: int) -> list[tuple[int, int]]:
    _check_divisible(H, W, p)
    return [(i * p, j * p) for i in range(H // p) for j in range(W // p)]


def reassemble(patches: np.ndarray, origins: list[tuple[int, int]], H: int, W: int) -> np.ndarray:
    """Write each (C, p, p) patch back at its origin; the set must tile the frame exactly."""
    patches = np.asarray(patches)
    n, C, p, _ = patches.shape
    if len(origins) != n:
        raise ShapeError(f"{n} patches but {len(origins)} origins")
    if len(set(origins)) != len(origins):
        raise ValueError("duplicate patch origin")
    expected = set(patch_origins(H, W, p))
    if set(origins) != expected:
        raise ValueError("patch origins do not tile the frame")
    out = np.empty((C, H, W), dtype=patches.dtype)
    for patch, (r, c) in zip(patches, origins):
        out[:, r : r + p, c : c + p] = patch
    return out


def patch_branch(patches, params: CSMParams) -> tuple[Tensor, Tensor]:
    """Residual spatial/channel mixing of (M, p, p, C) patches.

    Returns the branch output and its saliency weights, both (M, p, p, C).
    """
    patches = nm.as_tensor(patches)
    alpha = spatial_mix(patches, params.patch_smix, strict_shift=False) + patches
    beta = spatial_channel_mix(alpha, params.patch_cmix, strict_shift=False) + alpha
    lw = nm.sigmoid(nm.conv2d(beta, params.conv_weight, params.conv_bias) + patches)
    return beta, lw


def csm_frames(frames, params: CSMParams, p: int, return_saliency: bool = False):
    """CSM over channels-last frames (N, H, W, C)."""
    frames = nm.as_tensor(frames)
    N, H, W, C = frames.shape
    patches = segment_grid(frames, p)
    beta, lw = patch_branch(patches, params)
    dot = reassemble_grid(lw * beta, N, H, W)
    hat = spatial_mix(dot, params.global_smix, strict_shift=False) + dot
    hat = spatial_channel_mix(hat, params.global_cmix, strict_shift=False) + hat
    out = hat + frames
    if return_saliency:
        return out, reassemble_grid(lw, N, H, W)
    return out


def csm_forward(clip: np.ndarray, params: CSMParams, p: int) -> np.ndarray:
    """CSM on an F x C x H x W clip; frames are processed independently."""
    clip = np.asarray(clip)
    x = nm.Tensor(clip.transpose(0, 2, 3, 1))
    return csm_frames(x, params, p).data.transpose(0, 3, 1, 2)


def saliency_maps(clip: np.ndarray, params: CSMParams, p: int) -> np.ndarray:
    """Per-frame saliency ``lw`` as F x C x H x W."""
    clip = np.asarray(clip)
    _, lw = csm_frames(nm.Tensor(clip.transpose(0, 2, 3, 1)), params, p, return_saliency=True)
    return lw.data.transpose(0, 3, 1, 2)
