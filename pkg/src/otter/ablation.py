"""Ablation grid: module switches and scan directions over several seeds."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig
from .data.episodes import SynthPool
from .engine import FeatureCache, build_model, eval_pool, evaluate, train
from .saliency import saliency_hit_rate

log = logging.getLogger(__name__)

# name -> flag overrides
VARIANTS = {
    "otter": dict(csm_on=True, trm_on=True, branch="both"),
    "csm_only": dict(csm_on=True, trm_on=False),
    "trm_only": dict(csm_on=False, trm_on=True, branch="both"),
    "baseline": dict(csm_on=False, trm_on=False),
    "reversed_only": dict(csm_on=True, trm_on=True, branch="reversed"),
    "ordered_only": dict(csm_on=True, trm_on=True, branch="ordered"),
}
DEFAULT_VARIANTS = ("otter", "csm_only", "trm_only", "baseline", "reversed_only")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
SALIENCY_CLIPS = 50
DTW_TASKS = 200


def seeded(cfg: RunConfig, seed: int) -> RunConfig:
    """Same seed triple for every variant, so runs differ only by their flags."""
    return replace(cfg, seed=seed, data_seed=1000 + seed, eval_seed=2000 + seed)


@dataclass
class RunRecord:
    variant: str
    seed: int
    accuracy: float
    ci95: float
    dtw: float  # mean query-to-true-prototype DTW after training
    saliency_hit: float  # NaN when CSM is off
    untrained_accuracy: float
    untrained_saliency_hit: float
    seconds: float
    losses: np.ndarray = field(repr=False)
    dtw_trace: np.ndarray = field(repr=False)


def run_one(cfg: RunConfig, variant: str, seed: int) -> RunRecord:
    run_cfg = seeded(replace(cfg, **VARIANTS[variant]), seed)
    t0 = time.perf_counter()
    pool = eval_pool(run_cfg)
    # untrained reference on the same held-out tasks
    init = build_model(run_cfg)
    before = evaluate(run_cfg, init, pool=pool, cache=FeatureCache(init, pool))
    sal_before = float("nan")
    held_out = None
    if run_cfg.csm_on:
        held_out = _saliency_clips(run_cfg)
        sal_before, _ = saliency_hit_rate(init, held_out)
    result = train(run_cfg)
    after = evaluate(run_cfg, result.model, pool=pool, dtw_tasks=DTW_TASKS)
    sal_after = saliency_hit_rate(result.model, held_out)[0] if held_out is not None else float("nan")
    seconds = time.perf_counter() - t0
    log.info("%s seed %d: %.2f +- %.2f (untrained %.2f) dtw %.4f %.0fs", variant, seed, after.mean, after.ci95, before.mean, after.dtw, seconds)
    return RunRecord(variant, seed, after.mean, after.ci95, after.dtw, sal_after, before.mean, sal_before, seconds, result.losses, result.dtw)


def _saliency_clips(cfg: RunConfig):
    """Held-out clips for the saliency statistic, disjoint from training and evaluation pools."""
    pool = SynthPool(cfg.synth_config(), SALIENCY_CLIPS, seed=2 * cfg.eval_seed + 1 + (1 << 20))
    n_classes = len(pool.classes())
    return [pool.get(i % n_classes, i) for i in range(SALIENCY_CLIPS)]


def run_grid(cfg: RunConfig, variants=DEFAULT_VARIANTS, seeds=DEFAULT_SEEDS, on_record=None) -> list[RunRecord]:
    records = []
    for seed in seeds:
        for name in variants:
            rec = run_one(cfg, name, seed)
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    return records


def medians(records: list[RunRecord], attr: str = "accuracy") -> dict[str, float]:
    out: dict[str, list[float]] = {}
    for r in records:
        out.setdefault(r.variant, []).append(getattr(r, attr))
    return {k: float(np.median(v)) for k, v in out.items()}


def format_records(records: list[RunRecord]) -> str:
    lines = ["variant\tseed\taccuracy\tci95\tdtw\tsaliency_hit\tuntrained_accuracy\tuntrained_saliency_hit\tseconds"]
    for r in records:
        lines.append(
            f"{r.variant}\t{r.seed}\t{r.accuracy:.3f}\t{r.ci95:.3f}\t{r.dtw:.5f}\t{r.saliency_hit:.3f}"
            f"\t{r.untrained_accuracy:.3f}\t{r.untrained_saliency_hit:.3f}\t{r.seconds:.1f}"
        )
    return "\n".join(lines) + "\n"


def format_summary(records: list[RunRecord]) -> str:
    acc, dtw, sal = medians(records), medians(records, "dtw"), medians(records, "saliency_hit")
    lines = ["variant\tmedian_accuracy\tmedian_dtw\tmedian_saliency_hit"]
    for name in acc:
        lines.append(f"{name}\t{acc[name]:.3f}\t{dtw[name]:.5f}\t{sal[name]:.3f}")
    return "\n".join(lines) + "\n"
