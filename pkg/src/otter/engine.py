"""Episodic training, cached-feature evaluation and the DTW relation metric."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .checkpoint import Checkpoint
from .config import RunConfig
from .data.episodes import FilePool, Pool, SynthPool, sample_episode, sample_episode_keys
from .model import OtterModel
from .numerics import NumericsError

log = logging.getLogger(__name__)

TRAIN_POOL_SIZE = 1 << 23  # effectively unbounded: training clips are rarely revisited
Z95 = 1.96


class TrainingDiverged(NumericsError):
    def __init__(self, episode: int, detail: str):
        super().__init__(f"non-finite loss at episode {episode}: {detail}")
        self.episode = episode


# -- pools ------------------------------------------------------------------


def train_pool(cfg: RunConfig) -> Pool:
    if cfg.train_manifest:
        return FilePool(cfg.train_manifest)
    return SynthPool(cfg.synth_config(), TRAIN_POOL_SIZE, seed=2 * cfg.data_seed)


def eval_pool(cfg: RunConfig) -> Pool:
    if cfg.eval_manifest:
        return FilePool(cfg.eval_manifest)
    return SynthPool(cfg.synth_config(), cfg.eval_pool, seed=2 * cfg.eval_seed + 1)


def episode_seed(cfg: RunConfig, episode: int) -> int:
    return (cfg.data_seed << 32) + episode


def task_seed(cfg: RunConfig, task: int) -> int:
    return (cfg.eval_seed << 32) + task


# -- model <-> checkpoint ---------------------------------------------------


def build_model(cfg: RunConfig, ckpt: Checkpoint | None = None) -> OtterModel:
    model = OtterModel(cfg.model_config(), cfg.seed)
    if ckpt is not None:
        if ckpt.digest != cfg.digest():
            raise ValueError("checkpoint was written for a different architecture")
        model.load_state(ckpt.params)
    return model


def snapshot(cfg: RunConfig, model: OtterModel, episode: int) -> Checkpoint:
    return Checkpoint(model.state(), episode, cfg.digest())


# -- DTW ------------------------------------------------------------------


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm frame: cosine cost undefined")
    return x / norms


def dtw_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"dtw needs (F, D) sequences with equal D, got {a.shape} and {b.shape}")
    return 1.0 - _unit_rows(a) @ _unit_rows(b).T


def dtw_score(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum total 1 - cosine cost over monotone paths with steps (1,0), (0,1), (1,1)."""
    cost = dtw_cost_matrix(a, b)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    return float(max(acc[n, m], 0.0))


def episode_dtw(queries: np.ndarray, protos: np.ndarray, targets: np.ndarray) -> float:
    """Mean DTW between each query (F, D) and its true-class prototype."""
    return float(np.mean([dtw_score(q, protos[t]) for q, t in zip(queries, targets)]))


# -- training -------------------------------------------------------------


@dataclass
class TrainResult:
    model: OtterModel
    checkpoint: Checkpoint
    losses: np.ndarray  # total loss per episode run in this call
    parts: list[dict] = field(default_factory=list)
    dtw: np.ndarray = field(default_factory=lambda: np.zeros(0))
    first_episode: int = 0


def learning_rate(cfg: RunConfig, episode: int) -> float:
    if cfg.lr_schedule == "step":
        return cfg.lr * cfg.lr_gamma ** (episode // cfg.lr_step)
    return cfg.lr


def sgd_step(params, grads, lr: float, clip: float = 0.0) -> float:
    """In-place plain SGD; returns the global gradient norm before clipping."""
    norm = math.sqrt(sum(float(np.dot(g.ravel().astype(np.float64), g.ravel().astype(np.float64))) for g in grads))
    scale = lr
    if clip > 0 and norm > clip:
        scale = lr * clip / norm
    for p, g in zip(params, grads):
        p.data -= (scale * g).astype(p.data.dtype)
    return norm


def train(
    cfg: RunConfig,
    resume: Checkpoint | None = None,
    pool: Pool | None = None,
    log_every: int = 0,
    track_dtw: bool = True,
) -> TrainResult:
    """Per-episode SGD on the total loss, from initialisation or from ``resume``.

    Deterministic given the config seeds: episode ``e`` is always drawn from
    the same seed, so a resumed run replays the uninterrupted one exactly.
    """
    model = build_model(cfg, resume)
    start = resume.episode if resume is not None else 0
    if start > cfg.train_episodes:
        raise ValueError(f"checkpoint is at episode {start}, beyond train_episodes={cfg.train_episodes}")
    pool = pool or train_pool(cfg)
    params = model.parameters()
    n = cfg.train_episodes - start
    losses = np.zeros(n)
    dtws = np.zeros(n if track_dtw else 0)
    parts = []
    K = cfg.shot
    for i, ep in enumerate(range(start, cfg.train_episodes)):
        episode = sample_episode(pool, cfg.way, K, cfg.queries, episode_seed(cfg, ep), cfg.any_shot)
        try:
            with nm.GradTape() as tape:
                out = model.episode_forward(episode)
            loss = float(out.loss.data)
            if not math.isfinite(loss):
                raise TrainingDiverged(ep, "loss")
            grads = tape.gradient(out.loss, params)
        except TrainingDiverged:
            raise
        except NumericsError as exc:
            raise TrainingDiverged(ep, str(exc)) from exc
        sgd_step(params, grads, learning_rate(cfg, ep), cfg.grad_clip)
        losses[i] = loss
        parts.append(out.parts)
        if track_dtw:
            NK = episode.way * episode.shot
            st = out.temporal.data[:NK].reshape(episode.way, episode.shot, *out.temporal.shape[1:])
            dtws[i] = episode_dtw(out.temporal.data[NK:], st.mean(axis=1), episode.query_targets)
        if log_every and (ep + 1) % log_every == 0:
            window = losses[max(0, i + 1 - log_every) : i + 1]
            log.info("episode %d loss %.4f", ep + 1, float(window.mean()))
    return TrainResult(model, snapshot(cfg, model, cfg.train_episodes), losses, parts, dtws, start)


# -- evaluation -----------------------------------------------------------


class FeatureCache:
    """Temporal and regular features of every clip in a finite pool."""

    def __init__(self, model: OtterModel, pool: Pool, batch: int = 16):
        self.index: dict[tuple[int, int], int] = {}
        clips = []
        for label in pool.classes():
            for i in range(pool.count(label)):
                self.index[(label, i)] = len(clips)
                clips.append(pool.get(label, i).clip)
        self.temporal, self.regular = model.features_numpy(np.stack(clips), batch) if clips else (None, None)

    def gather(self, keys) -> tuple[np.ndarray, np.ndarray]:
        rows = [self.index[k] for k in keys]
        return self.temporal[rows], self.regular[rows]


@dataclass
class EvalResult:
    mean: float  # accuracy in percent
    ci95: float  # half-width in percent
    accuracies: np.ndarray  # per task, fraction correct
    dtw: float = float("nan")  # mean query-to-true-prototype DTW

    def __str__(self) -> str:
        return f"{self.mean:.2f} +- {self.ci95:.2f}"


def confidence_interval(acc: np.ndarray) -> tuple[float, float]:
    """Mean and 95% half-width (normal approximation), both in percent."""
    acc = np.asarray(acc, dtype=np.float64)
    mean = 100.0 * acc.mean()
    half = 100.0 * Z95 * acc.std(ddof=1) / math.sqrt(len(acc)) if len(acc) > 1 else 0.0
    return float(mean), float(half)


def evaluate(
    cfg: RunConfig,
    model: OtterModel,
    tasks: int | None = None,
    pool: Pool | None = None,
    cache: FeatureCache | None = None,
    dtw_tasks: int = 0,
) -> EvalResult:
    """Accuracy over ``tasks`` episodes from the held-out pool; DTW over the first ``dtw_tasks``."""
    M = cfg.eval_tasks if tasks is None else tasks
    if M < 1:
        raise ValueError("evaluation needs at least one task")
    pool = pool or eval_pool(cfg)
    cache = cache or FeatureCache(model, pool)
    F, D = cfg.frames, cfg.dim
    accs = np.zeros(M)
    dtws = []
    for m in range(M):
        keys = sample_episode_keys(pool, cfg.way, cfg.shot, cfg.queries, task_seed(cfg, m), cfg.any_shot)
        N, K = len(keys.support_keys), len(keys.support_keys[0])
        st, sr = cache.gather([k for row in keys.support_keys for k in row])
        qt, qr = cache.gather(keys.query_keys)
        st, sr = st.reshape(N, K, F, D), sr.reshape(N, K, F, D)
        dist, pt, _ = model.distances(nm.Tensor(st), nm.Tensor(sr), nm.Tensor(qt), nm.Tensor(qr))
        pred = np.argmin(dist.data, axis=1)
        accs[m] = np.mean(pred == keys.query_targets)
        if m < dtw_tasks:
            dtws.append(episode_dtw(qt, pt.data, keys.query_targets))
    mean, half = confidence_interval(accs)
    return EvalResult(mean, half, accs, float(np.mean(dtws)) if dtws else float("nan"))
