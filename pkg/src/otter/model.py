"""The full few-shot model: CSM -> backbone -> TRM -> dual-prototype head.

Every stage before the head works on one clip at a time, so query and
support features can be computed in a single batch, and evaluation can cache
per-clip features and reuse them across tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .backbone import BackboneConfig, BackboneParams, extract_frames, init_backbone
from .csm import CSMParams, csm_frames, init_csm_params
from .head import (
    DistanceWeights,
    LossWeights,
    attention_prototype,
    build_prototype,
    combined_distances,
    proto_distance,
    query_specific_prototype,
    total_loss,
)
from .mixing import VARIANTS
from .numerics import ShapeError, Tensor
from .trm import BOTH, BRANCH_MODES, ORDERED, REVERSED, TRMParams, init_trm_params, trm_forward

PROTO_KINDS = ("avg", "attn", "qsp")

# independent init streams so switching one module off leaves the others untouched
_STREAM_CSM, _STREAM_BACKBONE, _STREAM_TRM = 1, 2, 3


@dataclass(frozen=True)
class ModelConfig:
    frames: int = 8
    height: int = 64
    width: int = 64
    channels: int = 3
    patch: int = 16  # CSM patch size
    embed_patch: int = 4  # backbone patch embedding
    widths: tuple[int, ...] = (16, 32, 64)
    dim: int = 64
    variant: str = "rwkv56"
    csm_on: bool = True
    trm_on: bool = True
    branch: str = BOTH
    proto_kind: str = "avg"
    distance: str = "frobenius"
    temperature: float = 1.0
    omega: DistanceWeights = field(default_factory=DistanceWeights)
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.branch not in BRANCH_MODES:
            raise ValueError(f"branch must be one of {BRANCH_MODES}")
        if self.proto_kind not in PROTO_KINDS:
            raise ValueError(f"proto_kind must be one of {PROTO_KINDS}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.height % self.patch or self.width % self.patch:
            raise ValueError(f"frame {self.height}x{self.width} not divisible by CSM patch {self.patch}")
        self.backbone_config()

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(self.height, self.width, self.channels, self.embed_patch, self.widths, self.dim)


@dataclass
class EpisodeOutput:
    loss: Tensor
    parts: dict
    distances: Tensor  # (Q, N)
    temporal: Tensor  # (M, F, D) features of supports then queries
    regular: Tensor


class OtterModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        self.bcfg = cfg.backbone_config()
        self.csm: CSMParams | None = None
        self.trm: TRMParams | None = None
        if cfg.csm_on:
            self.csm = init_csm_params(np.random.default_rng([seed, _STREAM_CSM]), cfg.channels, cfg.variant)
        self.backbone: BackboneParams = init_backbone(np.random.default_rng([seed, _STREAM_BACKBONE]), self.bcfg, cfg.variant)
        if cfg.trm_on:
            self.trm = init_trm_params(np.random.default_rng([seed, _STREAM_TRM]), cfg.dim, cfg.variant)

    # -- parameters ---------------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Active parameters in declaration order (CSM, backbone, TRM branches in use)."""
        out = []
        if self.csm is not None:
            out += [(f"csm.{n}", t) for n, t in self.csm.tensors()]
        out += [(f"backbone.{n}", t) for n, t in self.backbone.tensors()]
        if self.trm is not None:
            if self.cfg.branch in (ORDERED, BOTH):
                out += [(f"trm.ordered.{n}", t) for n, t in self.trm.ordered.tensors()]
            if self.cfg.branch in (REVERSED, BOTH):
                out += [(f"trm.reversed.{n}", t) for n, t in self.trm.reversed.tensors()]
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state(self) -> list[tuple[str, np.ndarray]]:
        return [(n, t.data.copy()) for n, t in self.named_parameters()]

    def load_state(self, state) -> None:
        mine = self.named_parameters()
        if [n for n, _ in state] != [n for n, _ in mine]:
            raise ValueError("checkpoint parameters do not match the model architecture")
        for (name, arr), (_, t) in zip(state, mine):
            if arr.shape != t.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != model {t.shape}")
            t.data = np.array(arr, dtype=t.data.dtype)

    def astype(self, dtype) -> "OtterModel":
        for t in self.parameters():
            t.data = t.data.astype(dtype)
        return self

    # -- features -----------------------------------------------------------

    def _frames(self, clips) -> Tensor:
        clips = np.asarray(clips)
        if clips.ndim == 4:
            clips = clips[None]
        M, F, C, H, W = clips.shape
        if (F, C, H, W) != (self.cfg.frames, self.cfg.channels, self.cfg.height, self.cfg.width):
            raise ShapeError(f"clips {clips.shape[1:]} do not match model config")
        return nm.Tensor(clips.transpose(0, 1, 3, 4, 2).reshape(M * F, H, W, C))

    def clip_features(self, clips) -> tuple[Tensor, Tensor]:
        """(M, F, C, H, W) clips -> temporal and regular features, each (M, F, D)."""
        frames = self._frames(clips)
        M = frames.shape[0] // self.cfg.frames
        if self.csm is not None:
            frames = csm_frames(frames, self.csm, self.cfg.patch)
        regular = extract_frames(frames, self.backbone, self.bcfg).reshape(M, self.cfg.frames, self.cfg.dim)
        temporal = trm_forward(regular, self.trm, self.cfg.branch) if self.trm is not None else regular
        return temporal, regular

    def features_numpy(self, clips, batch: int = 16) -> tuple[np.ndarray, np.ndarray]:
        """Gradient-free features for many clips, computed in batches."""
        clips = np.asarray(clips)
        t_out, r_out = [], []
        for i in range(0, len(clips), batch):
            t, r = self.clip_features(clips[i : i + batch])
            t_out.append(t.data)
            r_out.append(r.data)
        return np.concatenate(t_out), np.concatenate(r_out)

    def saliency(self, clip) -> np.ndarray:
        """CSM saliency weights as F x C x H x W; raises if CSM is disabled."""
        if self.csm is None:
            raise ValueError("saliency requires csm_on")
        _, lw = csm_frames(self._frames(clip), self.csm, self.cfg.patch, return_saliency=True)
        return lw.data.transpose(0, 3, 1, 2)

    # -- head ---------------------------------------------------------------

    def prototypes(self, support) -> Tensor:
        """(N, K, F, D) support features -> (N, F, D) prototypes."""
        support = nm.as_tensor(support)
        N = support.shape[0]
        make = build_prototype if self.cfg.proto_kind == "avg" else attention_prototype
        return nm.stack([make(support[c]) for c in range(N)], 0)

    def distances(self, st, sr, qt, qr) -> tuple[Tensor, Tensor, Tensor]:
        """Distance table (Q, N) plus the temporal and regular prototypes (N, F, D)."""
        st, sr = nm.as_tensor(st), nm.as_tensor(sr)
        if self.cfg.proto_kind == "qsp":
            qt, qr = nm.as_tensor(qt), nm.as_tensor(qr)
            N, Q = st.shape[0], qt.shape[0]
            rows = []
            for q in range(Q):
                pt = nm.stack([query_specific_prototype(st[c], qt[q]) for c in range(N)], 0)
                pr = nm.stack([query_specific_prototype(sr[c], qr[q]) for c in range(N)], 0)
                d1 = proto_distance(pt, qt[q].reshape(1, *qt.shape[1:]), self.cfg.distance)
                d2 = proto_distance(pr, qr[q].reshape(1, *qr.shape[1:]), self.cfg.distance)
                rows.append(self.cfg.omega.temporal * d1 + self.cfg.omega.regular * d2)
            return nm.stack(rows, 0), self.prototypes(st), self.prototypes(sr)
        pt, pr = self.prototypes(st), self.prototypes(sr)
        return combined_distances(qt, qr, (pt, pr), self.cfg.omega, self.cfg.distance), pt, pr

    def episode_forward(self, episode) -> EpisodeOutput:
        N, K = episode.way, episode.shot
        clips = [s.clip for row in episode.support for s in row] + [q.clip for q in episode.queries]
        temporal, regular = self.clip_features(np.stack(clips))
        F, D = self.cfg.frames, self.cfg.dim
        st = temporal[: N * K].reshape(N, K, F, D)
        sr = regular[: N * K].reshape(N, K, F, D)
        qt, qr = temporal[N * K :], regular[N * K :]
        dist, pt, pr = self.distances(st, sr, qt, qr)
        loss, parts = total_loss(dist, episode.query_targets, pt, pr, self.cfg.weights, self.cfg.temperature)
        return EpisodeOutput(loss, parts, dist, temporal, regular)

    def predict(self, episode) -> np.ndarray:
        return np.argmin(self.episode_forward(episode).distances.data, axis=1)
