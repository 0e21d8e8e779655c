"""Dual-prototype classification and the three-part training objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nm
from .numerics import ShapeError, Tensor

FROBENIUS = "frobenius"
FRAME_SUM = "frame_sum"


@dataclass(frozen=True)
class LossWeights:
    ce: float = 0.8
    sep_temporal: float = 0.1
    sep_regular: float = 0.1

    def __post_init__(self):
        vals = (self.ce, self.sep_temporal, self.sep_regular)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"loss weights must sum to 1, got {sum(vals)}")

    @classmethod
    def normalized(cls, ce: float, sep_temporal: float, sep_regular: float) -> "LossWeights":
        s = ce + sep_temporal + sep_regular
        if s <= 0:
            raise ValueError("loss weights sum to zero")
        return cls(ce / s, sep_temporal / s, 1.0 - ce / s - sep_temporal / s)


@dataclass(frozen=True)
class DistanceWeights:
    temporal: float = 0.5
    regular: float = 0.5

    def __post_init__(self):
        if self.temporal < 0 or self.regular < 0 or abs(self.temporal + self.regular - 1.0) > 1e-9:
            raise ValueError("distance weights must be nonnegative and sum to 1")


@dataclass
class PrototypePair:
    temporal: Tensor  # (F, D), built after temporal reconstruction
    regular: Tensor  # (F, D), built from backbone features


def build_prototype(support) -> Tensor:
    """Mean over K support features; ``support`` is (K, F, D) or a list of (F, D)."""
    if isinstance(support, (list, tuple)):
        if not support:
            raise ValueError("empty class: no support features")
        support = nm.stack(support, axis=0)
    support = nm.as_tensor(support)
    if support.shape[0] < 1:
        raise ValueError("empty class: no support features")
    return nm.mean(support, axis=0)


def proto_distance(proto, query, mode: str = FROBENIUS) -> Tensor:
    """Distance between (..., F, D) tensors; broadcasts over leading axes.

    ``frobenius`` is the norm over all F*D entries; ``frame_sum`` sums
    per-frame Euclidean norms.
    """
    proto, query = nm.as_tensor(proto), nm.as_tensor(query)
    if proto.shape[-2:] != query.shape[-2:]:
        raise ShapeError(f"prototype {proto.shape} vs query {query.shape}")
    diff = nm.square(proto - query)
    if mode == FROBENIUS:
        return nm.sqrt(nm.sum_(diff, axis=(-2, -1)))
    if mode == FRAME_SUM:
        return nm.sum_(nm.sqrt(nm.sum_(diff, axis=-1)), axis=-1)
    raise ValueError(f"unknown distance mode {mode!r}")


def _cosine_matrix(protos: Tensor) -> Tensor:
    N = protos.shape[0]
    flat = protos.reshape(N, -1)
    norms = np.sqrt((flat.data.astype(np.float64) ** 2).sum(axis=1))
    if np.any(norms == 0):
        raise ValueError("zero-norm prototype: cosine similarity undefined")
    unit = flat / nm.sqrt(nm.sum_(nm.square(flat), axis=1, keepdims=True))
    return nm.matmul(unit, nm.transpose(unit))


def separation_loss(protos) -> Tensor:
    """Sum of cosine similarities over unordered pairs of class prototypes (N, F, D)."""
    protos = nm.as_tensor(protos) if not isinstance(protos, (list, tuple)) else nm.stack(protos, 0)
    N = protos.shape[0]
    if N < 2:
        raise ValueError("separation loss needs at least two classes")
    sims = _cosine_matrix(protos)
    mask = np.triu(np.ones((N, N), dtype=sims.data.dtype), k=1)
    return nm.sum_(sims * mask)


def combined_distances(
    queries_temporal, queries_regular, pairs: Sequence[PrototypePair] | tuple[Tensor, Tensor],
    omega: DistanceWeights = DistanceWeights(), mode: str = FROBENIUS,
) -> Tensor:
    """(Q, N) matrix ``omega_1 * D_1 + omega_2 * D_2``."""
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], Tensor):
        p1, p2 = pairs
    else:
        p1 = nm.stack([p.temporal for p in pairs], 0)
        p2 = nm.stack([p.regular for p in pairs], 0)
    qt, qr = nm.as_tensor(queries_temporal), nm.as_tensor(queries_regular)
    if qt.ndim == 2:
        qt, qr = qt.reshape(1, *qt.shape), qr.reshape(1, *qr.shape)
    Q, F, D = qt.shape
    d1 = proto_distance(p1.reshape(1, *p1.shape), qt.reshape(Q, 1, F, D), mode)
    d2 = proto_distance(p2.reshape(1, *p2.shape), qr.reshape(Q, 1, F, D), mode)
    return omega.temporal * d1 + omega.regular * d2


def classify(queries_temporal, queries_regular, pairs, omega: DistanceWeights = DistanceWeights(), mode: str = FROBENIUS):
    """Predicted class per query (argmin, ties to the lowest index) and the distance table."""
    d = combined_distances(queries_temporal, queries_regular, pairs, omega, mode)
    return np.argmin(d.data, axis=1), d


def cross_entropy(distances, labels, temperature: float = 1.0) -> Tensor:
    """Mean over queries of -log softmax(-D / temperature)[label]."""
    distances = nm.as_tensor(distances)
    labels = np.asarray(labels, dtype=np.int64)
    Q, N = distances.shape
    if labels.shape != (Q,):
        raise ShapeError(f"need one label per query, got {labels.shape} for {Q} queries")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= N:
        raise ValueError(f"labels must lie in 0..{N - 1}")
    logp = nm.log_softmax(distances * (-1.0 / temperature), axis=1)
    onehot = np.zeros((Q, N), dtype=logp.data.dtype)
    onehot[np.arange(Q), labels] = 1.0
    return nm.sum_(logp * onehot) * (-1.0 / Q)


def total_loss(distances, labels, protos_temporal, protos_regular, weights: LossWeights = LossWeights(), temperature: float = 1.0):
    """Weighted sum of cross-entropy and the two prototype separation terms.

    Returns (total, parts) where parts maps term names to floats.
    """
    ce = cross_entropy(distances, labels, temperature)
    total = weights.ce * ce
    parts = {"ce": float(ce.data)}
    if weights.sep_temporal:
        s1 = separation_loss(protos_temporal)
        total = total + weights.sep_temporal * s1
        parts["sep_temporal"] = float(s1.data)
    if weights.sep_regular:
        s2 = separation_loss(protos_regular)
        total = total + weights.sep_regular * s2
        parts["sep_regular"] = float(s2.data)
    return total, parts


# Prototype variants compared in the ablation harness (not optimised further).


def attention_prototype(support) -> Tensor:
    """Support features refined by softmax self-attention among the K shots, then averaged."""
    s = nm.as_tensor(support)  # (K, F, D)
    K = s.shape[0]
    flat = s.reshape(K, -1)
    scores = nm.matmul(flat, nm.transpose(flat)) * (1.0 / np.sqrt(flat.shape[1]))
    attn = nm.exp(nm.log_softmax(scores, axis=1))
    return nm.mean(nm.matmul(attn, flat), axis=0).reshape(s.shape[1:])


def query_specific_prototype(support, query) -> Tensor:
    """Shots weighted by their softmax similarity to one query (F, D)."""
    s, q = nm.as_tensor(support), nm.as_tensor(query)
    K = s.shape[0]
    flat = s.reshape(K, -1)
    scores = nm.matmul(flat, q.reshape(-1, 1)).reshape(1, K) * (1.0 / np.sqrt(flat.shape[1]))
    attn = nm.exp(nm.log_softmax(scores, axis=1))
    return nm.matmul(attn, flat).reshape(s.shape[1:])
