"""Clip pools and N-way K-shot episode sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from .otv import read_manifest, read_otv
from .synth import SynthConfig, VideoSample, synth_generate

MAX_ANY_SHOT = 5
_INDEX_BITS = 24


class Pool(Protocol):
    def classes(self) -> Sequence[int]: ...
    def count(self, label: int) -> int: ...
    def get(self, label: int, index: int) -> VideoSample: ...


class SynthPool:
    """Generated on demand: sample ``index`` of class ``label`` is a pure function of the pool seed."""

    def __init__(self, cfg: SynthConfig, per_class: int, seed: int = 0, cache: int = 0):
        if per_class < 1:
            raise ValueError("per_class must be positive")
        if per_class >= 1 << _INDEX_BITS:
            raise ValueError("per_class too large")
        self.cfg, self.per_class, self.seed = cfg, per_class, seed
        self._get = lru_cache(maxsize=cache)(self._generate) if cache else self._generate

    def classes(self) -> Sequence[int]:
        return range(len(self.cfg.classes))

    def count(self, label: int) -> int:
        return self.per_class

    def sample_seed(self, index: int) -> int:
        return (self.seed << _INDEX_BITS) + index

    def _generate(self, label: int, index: int) -> VideoSample:
        return synth_generate(self.cfg, self.sample_seed(index), label)

    def get(self, label: int, index: int) -> VideoSample:
        if not 0 <= index < self.per_class:
            raise IndexError(f"index {index} outside pool of {self.per_class}")
        return self._get(label, index)


class FilePool:
    """Clips listed in a manifest of ``path label`` lines."""

    def __init__(self, manifest: str):
        self.by_class: dict[int, list[str]] = {}
        for path, label in read_manifest(manifest):
            self.by_class.setdefault(label, []).append(path)

    def classes(self) -> Sequence[int]:
        return sorted(self.by_class)

    def count(self, label: int) -> int:
        return len(self.by_class.get(label, ()))

    def get(self, label: int, index: int) -> VideoSample:
        clip, stored = read_otv(self.by_class[label][index])
        if stored != label:
            raise ValueError(f"{self.by_class[label][index]}: manifest label {label} != file label {stored}")
        return VideoSample(clip=clip, label=label)


@dataclass
class Episode:
    support: list[list[VideoSample]]  # N x K
    queries: list[VideoSample]
    query_targets: np.ndarray  # episode-local class index per query
    class_ids: tuple[int, ...]  # pool label of each episode class
    support_keys: list[list[tuple[int, int]]] = field(default_factory=list, repr=False)
    query_keys: list[tuple[int, int]] = field(default_factory=list, repr=False)
    pool: Pool | None = field(default=None, repr=False)

    @property
    def way(self) -> int:
        return len(self.support)

    @property
    def shot(self) -> int:
        return len(self.support[0])


@dataclass
class EpisodeKeys:
    """Index-only episode: which (label, index) pool entries play which role."""

    class_ids: tuple[int, ...]
    support_keys: list[list[tuple[int, int]]]
    query_keys: list[tuple[int, int]]
    query_targets: np.ndarray


def sample_episode_keys(
    pool: Pool,
    N: int,
    K: int | None,
    queries_per_class: int,
    seed: int,
    any_shot: bool = False,
) -> EpisodeKeys:
    """Draw N distinct classes, then K supports and ``queries_per_class`` queries per class.

    With ``any_shot`` the shot count is drawn uniformly from 1..5 for the
    episode and ``K`` is ignored.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    if any_shot:
        K = int(rng.integers(1, MAX_ANY_SHOT + 1))
    if N < 1 or K is None or K < 1 or queries_per_class < 0:
        raise ValueError(f"invalid episode shape N={N} K={K} queries={queries_per_class}")
    labels = list(pool.classes())
    if len(labels) < N:
        raise ValueError(f"pool has {len(labels)} classes, episode needs {N}")
    need = K + queries_per_class
    chosen = [labels[i] for i in rng.choice(len(labels), N, replace=False)]
    skeys, qkeys, targets = [], [], []
    for local, label in enumerate(chosen):
        n = pool.count(label)
        if n < need:
            raise ValueError(f"class {label} has {n} samples, episode needs {need}")
        idx = rng.choice(n, need, replace=False)
        skeys.append([(label, int(i)) for i in idx[:K]])
        qkeys += [(label, int(i)) for i in idx[K:]]
        targets += [local] * queries_per_class
    order = rng.permutation(len(qkeys))
    return EpisodeKeys(
        class_ids=tuple(chosen),
        support_keys=skeys,
        query_keys=[qkeys[i] for i in order],
        query_targets=np.asarray(targets, dtype=np.int64)[order],
    )


def sample_episode(
    pool: Pool,
    N: int,
    K: int | None,
    queries_per_class: int,
    seed: int,
    any_shot: bool = False,
) -> Episode:
    """Materialised episode; see :func:`sample_episode_keys` for the sampling rule."""
    keys = sample_episode_keys(pool, N, K, queries_per_class, seed, any_shot)
    return Episode(
        support=[[pool.get(*key) for key in row] for row in keys.support_keys],
        queries=[pool.get(*key) for key in keys.query_keys],
        query_targets=keys.query_targets,
        class_ids=keys.class_ids,
        support_keys=keys.support_keys,
        query_keys=keys.query_keys,
        pool=pool,
    )
