"""Command-line entry point: ``otter <subcommand> [options]``.

Every subcommand that trains or evaluates accepts ``--config FILE`` plus one
``--<field>`` override per run-configuration field. Tabular results go to
stdout (or ``--out``) as tab-separated text; report paths also render PNG
figures next to them.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import checkpoint as ckpt_io
from .config import add_config_arguments, config_from_args
from .data import SynthPool, synth_generate, write_manifest, write_otv
from .data.synth import CLASSES

log = logging.getLogger("otter")


def _emit(text: str, path: str | None) -> None:
    if path:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_trace(path: str, start: int, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    with open(path, "w") as fh:
        fh.write("episode\t" + "\t".join(names) + "\n")
        for i in range(len(columns[names[0]])):
            fh.write(f"{start + i + 1}\t" + "\t".join(f"{columns[n][i]:.6f}" for n in names) + "\n")


# -- subcommands ----------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = config_from_args(args)
    scfg = cfg.synth_config()
    os.makedirs(args.out, exist_ok=True)
    pool = SynthPool(scfg, args.per_class, seed=args.pool_seed)
    entries = []
    for label in pool.classes():
        for i in range(args.per_class):
            s = pool.get(label, i)
            path = os.path.join(args.out, f"{CLASSES[label]}_{i:05d}.otv")
            write_otv(path, s.clip, label)
            entries.append((path, label))
    manifest = os.path.join(args.out, "manifest.txt")
    write_manifest(manifest, entries)
    print(f"wrote {len(entries)} clips and {manifest}")
    return 0


def cmd_train(args) -> int:
    from .engine import train
    from .plots import plot_curves

    cfg = config_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    resume = ckpt_io.load(args.resume) if args.resume else None
    t0 = time.perf_counter()
    result = train(cfg, resume=resume, log_every=args.log_every)
    ckpt_io.save(os.path.join(args.out, "checkpoint.otck"), result.checkpoint)
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    cols = {"loss": result.losses}
    for key in ("ce", "sep_temporal", "sep_regular"):
        cols[key] = np.array([p.get(key, np.nan) for p in result.parts])
    cols["dtw"] = result.dtw
    _write_trace(os.path.join(args.out, "loss_trace.tsv"), result.first_episode, cols)
    if len(result.losses):
        plot_curves({"total": result.losses, "ce": cols["ce"]}, os.path.join(args.out, "loss.png"), "loss")
    print(f"episodes\t{cfg.train_episodes}\nfinal_loss\t{result.losses[-1] if len(result.losses) else float('nan'):.6f}")
    print(f"seconds\t{time.perf_counter() - t0:.1f}")
    return 0


def cmd_eval(args) -> int:
    from .engine import build_model, evaluate

    cfg = config_from_args(args)
    ck = ckpt_io.load(args.checkpoint) if args.checkpoint else None
    model = build_model(cfg, ck)
    res = evaluate(cfg, model, tasks=args.tasks, dtw_tasks=args.dtw_tasks)
    text = f"metric\tvalue\naccuracy\t{res.mean:.4f}\nci95\t{res.ci95:.4f}\ntasks\t{len(res.accuracies)}\n"
    if args.dtw_tasks:
        text += f"dtw\t{res.dtw:.6f}\n"
    _emit(text, args.out)
    return 0


def cmd_ablate(args) -> int:
    from . import ablation
    from .plots import plot_ablation, plot_curves

    cfg = config_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    variants = tuple(args.variants.split(",")) if args.variants else ablation.DEFAULT_VARIANTS
    seeds = tuple(int(s) for s in args.seeds.split(","))
    runs_path = os.path.join(args.out, "runs.tsv")

    def checkpoint_progress(rec):
        done.append(rec)
        _emit(ablation.format_records(done), runs_path)

    done: list = []
    records = ablation.run_grid(cfg, variants, seeds, on_record=checkpoint_progress)
    summary = ablation.format_summary(records)
    _emit(summary, os.path.join(args.out, "summary.tsv"))
    sys.stdout.write(summary)
    per_seed: dict[str, list[float]] = {}
    for r in records:
        per_seed.setdefault(r.variant, []).append(r.accuracy)
    plot_ablation(ablation.medians(records), per_seed, os.path.join(args.out, "ablation.png"))
    first = {r.variant: r for r in records if r.seed == seeds[0]}
    plot_curves({k: v.losses for k, v in first.items()}, os.path.join(args.out, "loss_curves.png"), "loss")
    plot_curves({k: v.dtw_trace for k, v in first.items()}, os.path.join(args.out, "dtw_curves.png"), "query-prototype DTW")
    return 0


def cmd_bench_wkv(args) -> int:
    from .plots import plot_bench
    from .wkv import format_bench, wkv_bench

    lengths = [int(x) for x in args.lengths.split(",")]
    rows = wkv_bench(lengths, args.channels, args.bidirectional, args.repeats, args.seed)
    _emit(format_bench(rows), args.out)
    if args.figure:
        plot_bench(rows, args.figure)
    return 0


def cmd_oracle_check(args) -> int:
    from .oracles import run_oracle_checks

    ok = True
    for name, passed, detail in run_oracle_checks(args.instances, args.seed):
        print(f"{'PASS' if passed else 'FAIL'}\t{name}\t{detail}")
        ok &= passed
    return 0 if ok else 1


def cmd_export_saliency(args) -> int:
    from .engine import build_model
    from .plots import plot_saliency
    from .saliency import export_saliency, mask_contrast

    cfg = config_from_args(args)
    model = build_model(cfg, ckpt_io.load(args.checkpoint) if args.checkpoint else None)
    label = CLASSES.index(args.label) if args.label in CLASSES else int(args.label)
    sample = synth_generate(cfg.synth_config(), args.sample_seed, label)
    paths = export_saliency(model, sample.clip, args.out_dir)
    lw = model.saliency(sample.clip)
    inside, outside = mask_contrast(lw, sample.mask)
    plot_saliency(sample.clip, lw, os.path.join(args.out_dir, "saliency.png"), sample.mask)
    print(f"frames\t{len(paths)}\nmean_inside\t{inside:.5f}\nmean_outside\t{outside:.5f}")
    return 0


def cmd_dtw_trace(args) -> int:
    from dataclasses import replace

    from .engine import train
    from .plots import plot_curves

    cfg = config_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    runs = {"configured": cfg}
    if args.compare_baseline:
        runs["baseline"] = replace(cfg, csm_on=False, trm_on=False)
    traces = {}
    for name, run_cfg in runs.items():
        traces[name] = train(run_cfg).dtw
    _write_trace(os.path.join(args.out, "dtw_trace.tsv"), 0, traces)
    plot_curves(traces, os.path.join(args.out, "dtw_trace.png"), "query-prototype DTW")
    lines = ["run\tfinal_window_mean"] + [f"{k}\t{np.mean(v[-100:]):.6f}" for k, v in traces.items()]
    print("\n".join(lines))
    return 0


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otter", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic clips as .otv files plus a manifest")
    add_config_arguments(p)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--pool-seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="episodic SGD training")
    add_config_arguments(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy with 95%% confidence interval")
    add_config_arguments(p)
    p.add_argument("--checkpoint", help="omit to evaluate the initialisation")
    p.add_argument("--tasks", type=int)
    p.add_argument("--dtw-tasks", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="module and scan-direction ablation grid")
    add_config_arguments(p, profile="benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--variants", help="comma list; default otter,csm_only,trm_only,baseline,reversed_only")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench-wkv", help="streaming vs direct WKV timing table")
    p.add_argument("--lengths", default="64,128,256,512,1024")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--bidirectional", action="store_true")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_bench_wkv)

    p = sub.add_parser("oracle-check", help="compare fast kernels against direct oracles")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("export-saliency", help="write CSM saliency as one PGM per frame")
    add_config_arguments(p)
    p.add_argument("--checkpoint")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--label", default="right")
    p.add_argument("--sample-seed", type=int, default=0)
    p.set_defaults(func=cmd_export_saliency)

    p = sub.add_parser("dtw-trace", help="per-episode query-prototype DTW during training")
    add_config_arguments(p, profile="benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--compare-baseline", action="store_true")
    p.set_defaults(func=cmd_dtw_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
