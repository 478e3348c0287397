"""Command-line entry point: ``gene <subcommand> ...``.

Settings come from built-in defaults, then the ``--config`` file, then flags;
later sources win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from .builder import build_from_config
from .config import ConfigError, IndexConfig
from .experiment import (
    ExperimentConfig,
    ExperimentError,
    poc_contenders,
    run_experiment,
    run_poc_benchmark,
    run_upscale,
)
from .fitness import CorrectnessViolation
from .workload import DatasetError, WorkloadError, dataset_from_spec, preset

log = logging.getLogger("gene")


def _load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    ds = dict(cfg.dataset)
    if getattr(args, "dataset", None):
        ds["kind"] = args.dataset
    if getattr(args, "dataset_path", None):
        ds["kind"], ds["path"] = "file", args.dataset_path
    if getattr(args, "n", None) is not None:
        ds["n"] = args.n
    if getattr(args, "data_seed", None) is not None:
        ds["seed"] = args.data_seed
    changes: Dict[str, Any] = {"dataset": ds}
    wl = cfg.workload
    if getattr(args, "workload", None):
        wl = preset(args.workload, seed=wl.seed)
    if getattr(args, "queries", None) is not None:
        wl = wl.with_(count=args.queries)
    if getattr(args, "workload_seed", None) is not None:
        wl = wl.with_(seed=args.workload_seed)
    changes["workload"] = wl
    gp = {}
    for flag, name in (("generations", "g_max"), ("seed", "master_seed"), ("c", "c"), ("s_init", "s_init"),
                       ("s_max", "s_max"), ("s_pi", "s_pi"), ("s_t", "s_t"), ("q", "q")):
        v = getattr(args, flag, None)
        if v is not None:
            gp[name] = int(v) if name == "s_t" and str(v).isdigit() else v
    if gp:
        changes["genetic"] = replace(cfg.genetic, **gp)
    fs = {}
    if getattr(args, "mode", None):
        fs["mode"] = args.mode
    if getattr(args, "range_mode", None):
        fs["range_mode"] = args.range_mode
    if fs:
        changes["fitness"] = replace(cfg.fitness, **fs)
    if getattr(args, "baseline", None):
        changes["baseline"] = {"kind": args.baseline}
    if getattr(args, "output_dir", None):
        changes["output_dir"] = args.output_dir
    if getattr(args, "name", None):
        changes["name"] = args.name
    cfg = cfg.with_(**changes)
    cfg.validate()
    return cfg


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec: Dict[str, Any] = {"kind": args.kind, "n": args.n, "seed": args.seed}
    if args.sample_from:
        spec = {"kind": "file", "path": args.sample_from, "n": args.n, "seed": args.seed}
    ds = dataset_from_spec(spec)
    ds.save(args.out)
    print(f"wrote {ds.n} keys ({ds.name}, fingerprint {ds.fingerprint}) to {args.out}")
    return 0


def cmd_gen_workload(args: argparse.Namespace) -> int:
    cfg = _load_experiment(args)
    ds = dataset_from_spec(cfg.dataset)
    w = cfg.workload.build(ds)
    w.to_csv(args.out)
    print(f"wrote {len(w)} queries ({w.name}, fingerprint {w.fingerprint}) to {args.out}")
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _load_experiment(args)
    summary = run_experiment(cfg)
    out = cfg.resolved_output_dir()
    print(json.dumps(summary, indent=2))
    print(f"artifacts in {out}")
    return 0


def cmd_upscale(args: argparse.Namespace) -> int:
    cfg = _load_experiment(args)
    sizes = args.sizes or list(cfg.upscale_sizes)
    if not sizes:
        raise ExperimentError("no upscale sizes given")
    out = Path(args.out) if args.out else cfg.resolved_output_dir() / "upscale.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = run_upscale(args.best, sizes, cfg, args.initial, out)
    for r in rows:
        print(f"n={r['size']}: fitness {r['fitness']:.0f}, improvement {r['improvement']:.3f}, correct {r['correct']}")
    print(f"wrote {out}")
    return 0 if all(r["correct"] for r in rows) else 1


def cmd_poc(args: argparse.Namespace) -> int:
    cfg = _load_experiment(args)
    ds = dataset_from_spec(cfg.dataset)
    wl = cfg.workload if args.workload or args.config else preset("poc")
    if args.queries is not None:
        wl = wl.with_(count=args.queries)
    w = wl.build(ds)
    contenders: Dict[str, Any] = dict(poc_contenders(ds.n)) if not args.only_extra else {}
    for path in args.contender or []:
        contenders[Path(path).stem] = IndexConfig.load(path)
    out = Path(args.out) if args.out else cfg.resolved_output_dir() / "poc.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = run_poc_benchmark(ds, w, contenders, runs=args.runs, range_mode=args.range_mode or "lower_bound", out_csv=out)
    for r in rows:
        print(f"{r['contender']:>12}: {r['mean_ns_per_query']:8.1f} ns/query (sd {r['std_ns_per_query']:.1f}), {r['nodes']} nodes")
    print(f"wrote {out}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = _load_experiment(args)
    ic = IndexConfig.load(args.index)
    ds = dataset_from_spec(cfg.dataset)
    index = build_from_config(ic, ds.keys)
    res = index.verify(ds.keys, max_exhaustive=args.max_exhaustive, samples=args.samples)
    if res:
        print(f"OK: {index.describe()} ({res.pairs_checked} checks)")
        return 0
    print(f"FAILED: query {res.counterexample} disagrees with the brute-force answer")
    return 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--dataset", choices=["uni_dense", "skewed"], help="synthetic dataset kind")
    p.add_argument("--dataset-path", help="binary dataset file to sample from")
    p.add_argument("-n", type=int, help="dataset size")
    p.add_argument("--data-seed", type=int)
    p.add_argument("--workload", help="workload preset: point, range0.001, mix, normal, poc")
    p.add_argument("--queries", type=int, help="number of queries")
    p.add_argument("--workload-seed", type=int)
    p.add_argument("--output-dir")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gene", description="Generic index structure search")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a dataset file")
    p.add_argument("--kind", choices=["uni_dense", "skewed"], default="uni_dense")
    p.add_argument("-n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-from", help="sample n keys from this dataset file instead")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-workload", help="write a workload as CSV")
    _common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("search", help="run the genetic search")
    _common(p)
    p.add_argument("--name")
    p.add_argument("--generations", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--s-init", dest="s_init", type=int)
    p.add_argument("--s-max", dest="s_max", type=int)
    p.add_argument("--s-pi", dest="s_pi", type=int)
    p.add_argument("--s-t", dest="s_t", help="tournament size, absolute or a percentage like 100%%")
    p.add_argument("-q", type=float, help="admission percentile")
    p.add_argument("-c", type=int, help="timed repetitions per evaluation")
    p.add_argument("--mode", choices=["measured", "cost"])
    p.add_argument("--range-mode", choices=["full", "lower_bound"])
    p.add_argument("--baseline", choices=["single_hash", "btree", "poc_hand"])
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("upscale", help="rebuild a found configuration at larger sizes")
    _common(p)
    p.add_argument("--best", required=True, help="best_config.json of a search run")
    p.add_argument("--initial", help="initial_best_config.json of the same run")
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("-c", type=int)
    p.add_argument("--mode", choices=["measured", "cost"])
    p.add_argument("--range-mode", choices=["full", "lower_bound"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("poc", help="lookup-time benchmark of index configurations")
    _common(p)
    p.add_argument("--contender", action="append", help="extra IndexConfig JSON (repeatable)")
    p.add_argument("--only-extra", action="store_true", help="skip the built-in hand spec and B-tree")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--range-mode", choices=["full", "lower_bound"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_poc)

    p = sub.add_parser("verify", help="check an index configuration against brute force")
    _common(p)
    p.add_argument("--index", required=True, help="IndexConfig JSON")
    p.add_argument("--max-exhaustive", type=int, default=2000)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CorrectnessViolation as e:
        print(f"error: correctness violation: {e}", file=sys.stderr)
        return 3
    except (ExperimentError, ConfigError, DatasetError, WorkloadError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
