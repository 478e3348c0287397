"""Config-driven experiments: search runs, upscaling and the lookup benchmark.

Experiment configs are JSON documents::

    {
      "format": "gene-experiment", "version": 1,
      "name": "pq_uni_dense",
      "dataset": {"kind": "uni_dense", "n": 100000},
      "workload": {"preset": "point", "count": 10000},
      "genetic": {"g_max": 2000, "s_init": 10, "s_max": 10, "s_pi": 50, "s_t": 25, "q": 50, "c": 5},
      "fitness": {"mode": "measured", "range_mode": "full"},
      "distributions": {"md": {...}, "nd": "uniform", "pd": {...}},
      "baseline": {"kind": "single_hash"},
      "output_dir": "runs/pq",
      "upscale_sizes": [1000000]
    }

Every section is optional. ``GENE_OUTPUT_DIR`` overrides ``output_dir``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .builder import (
    BulkloadSpec,
    Fixed,
    Random,
    build_from_config,
    build_single_node,
    bulkload_btree,
    default_spec,
    poc_hand_spec,
)
from .config import IndexConfig
from .fitness import Evaluator, FitnessRecord
from .genetic import TRACE_SCHEMA, GeneticParams, genetic_search
from .layouts import DataLayout, SearchMethod
from .mutations import MutationDistributions
from .physical import DEFAULT_CAPACITY, PhysicalIndex
from .workload import Dataset, WorkloadSpec, dataset_from_spec, preset

log = logging.getLogger(__name__)

FORMAT = "gene-experiment"
VERSION = 1
OUTPUT_ENV = "GENE_OUTPUT_DIR"
UPSCALE_COLUMNS = ("size", "fitness", "initial_fitness", "improvement", "baseline_fitness", "correct")
POC_COLUMNS = ("contender", "nodes", "queries", "mean_ns_per_query", "std_ns_per_query", "mean_total_ns", "runs")


class ExperimentError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class FitnessSettings:
    mode: str = "measured"
    range_mode: str = "full"
    seed: int = 0

    @classmethod
    def from_dict(cls, d: Optional[Mapping]) -> "FitnessSettings":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ExperimentError(f"unknown fitness settings: {sorted(unknown)}")
        return cls(**d)

    def evaluator(self, dataset: Dataset, workload, c: int = 5) -> Evaluator:
        return Evaluator(dataset, workload, c=c, mode=self.mode, range_mode=self.range_mode, seed=self.seed)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    dataset: Dict[str, Any] = field(default_factory=lambda: {"kind": "uni_dense", "n": 100_000})
    workload: WorkloadSpec = field(default_factory=lambda: preset("point"))
    genetic: GeneticParams = field(default_factory=GeneticParams)
    fitness: FitnessSettings = field(default_factory=FitnessSettings)
    distributions: MutationDistributions = field(default_factory=MutationDistributions)
    baseline: Dict[str, Any] = field(default_factory=lambda: {"kind": "single_hash"})
    init: Optional[Dict[str, int]] = None
    output_dir: str = "runs"
    upscale_sizes: tuple = ()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        fmt = d.pop("format", FORMAT)
        ver = d.pop("version", VERSION)
        if fmt != FORMAT or ver != VERSION:
            raise ExperimentError(f"expected {FORMAT} version {VERSION}, got {fmt!r} version {ver!r}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ExperimentError(f"unknown experiment keys: {sorted(unknown)}")
        try:
            kw: Dict[str, Any] = {}
            for k in ("name", "output_dir", "init"):
                if k in d:
                    kw[k] = d[k]
            if "dataset" in d:
                kw["dataset"] = {"kind": d["dataset"]} if isinstance(d["dataset"], str) else dict(d["dataset"])
            if "workload" in d:
                kw["workload"] = WorkloadSpec.from_dict(d["workload"])
            if "genetic" in d:
                kw["genetic"] = GeneticParams.from_dict(d["genetic"])
            if "fitness" in d:
                kw["fitness"] = FitnessSettings.from_dict(d["fitness"])
            if "distributions" in d:
                kw["distributions"] = MutationDistributions.from_dict(d["distributions"])
            if "baseline" in d:
                kw["baseline"] = {"kind": d["baseline"]} if isinstance(d["baseline"], str) else dict(d["baseline"])
            if "upscale_sizes" in d:
                kw["upscale_sizes"] = tuple(int(s) for s in d["upscale_sizes"])
            cfg = cls(**kw)
        except (TypeError, ValueError) as e:
            if isinstance(e, ExperimentError):
                raise
            raise ExperimentError(str(e)) from e
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ExperimentError(f"{path}: invalid JSON: {e}") from e

    def validate(self) -> None:
        if self.dataset.get("kind", "uni_dense") not in ("uni_dense", "skewed", "file"):
            raise ExperimentError(f"unknown dataset kind {self.dataset.get('kind')!r}")
        if self.dataset.get("kind") == "file" and not Path(self.dataset.get("path", "")).is_file():
            raise ExperimentError(f"dataset file {self.dataset.get('path')!r} not found")
        kind = self.baseline.get("kind")
        if kind not in ("single_hash", "btree", "hand_spec", "poc_hand", None):
            raise ExperimentError(f"unknown baseline {kind!r}")
        if kind == "hand_spec" and not Path(self.baseline.get("path", "")).is_file():
            raise ExperimentError(f"hand spec {self.baseline.get('path')!r} not found")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": FORMAT,
            "version": VERSION,
            "name": self.name,
            "dataset": self.dataset,
            "workload": self.workload.to_dict(),
            "genetic": self.genetic.to_dict(),
            "fitness": dict(self.fitness.__dict__),
            "distributions": self.distributions.to_dict(),
            "baseline": self.baseline,
            "init": self.init,
            "output_dir": self.output_dir,
            "upscale_sizes": list(self.upscale_sizes),
        }

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)

    def with_(self, **changes: Any) -> "ExperimentConfig":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def btree_spec(n: int, leaf_fill: int = 1000, fanout: int = 10) -> BulkloadSpec:
    """Uniform SortedCol/BinS B-tree with ``leaf_fill`` tuples per leaf."""
    leaves = max(1, math.ceil(n / leaf_fill))
    return BulkloadSpec(leaves, math.ceil(n / leaves), fanout, Fixed(DataLayout.SORTED_COL, SearchMethod.BINS))


def build_baseline(spec: Mapping[str, Any], dataset: Dataset) -> PhysicalIndex:
    kind = spec.get("kind", "single_hash")
    n = dataset.n
    if kind == "single_hash":
        return build_single_node(dataset.keys, DataLayout.HASH, SearchMethod.HASHS, capacity=max(DEFAULT_CAPACITY, n))
    if kind == "btree":
        bs = btree_spec(n, int(spec.get("leaf_fill", 1000)), int(spec.get("fanout", 10)))
        return bulkload_btree(dataset.keys, bs)
    if kind == "poc_hand":
        return build_from_config(poc_hand_spec(n), dataset.keys)
    if kind == "hand_spec":
        return build_from_config(IndexConfig.load(spec["path"]), dataset.keys)
    raise ExperimentError(f"unknown baseline {kind!r}")


def _init_spec(cfg: ExperimentConfig, n: int) -> BulkloadSpec:
    if not cfg.init:
        return default_spec(n)
    d = dict(cfg.init)
    return BulkloadSpec(int(d.get("leaf_count", 100)), int(d.get("leaf_fill", 1000)), int(d.get("fanout", 10)), Random())


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(columns)
        w.writerows(rows)


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, *, keep_timestamps: bool = True) -> Dict[str, Any]:
    """Search, evaluate the baseline and write the run's artifacts.

    Files in the output directory: ``trace.csv``, ``best_config.json``,
    ``initial_best_config.json``, ``baseline.json``, ``summary.json`` and the
    experiment config itself as ``experiment.json``. Returns the summary.
    """
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    dataset = dataset_from_spec(cfg.dataset)
    workload = cfg.workload.build(dataset)
    evaluator = cfg.fitness.evaluator(dataset, workload, cfg.genetic.c)
    log.info("%s: %s, %d queries, %s fitness", cfg.name, dataset, len(workload), cfg.fitness.mode)

    with open(out / "trace.csv", "w", newline="", encoding="utf-8") as trace:
        result = genetic_search(
            cfg.genetic, dataset, evaluator, cfg.distributions, init_spec=_init_spec(cfg, dataset.n), trace_file=trace
        )

    baseline_index = build_baseline(cfg.baseline, dataset)
    base_rec = evaluator.evaluate(baseline_index)

    def stamp(rec: FitnessRecord) -> Dict[str, Any]:
        d = rec.to_dict()
        if not keep_timestamps:
            d.pop("timestamp")
        return d

    meta = {"dataset": dataset.name, "dataset_fingerprint": dataset.fingerprint, "dataset_size": dataset.n,
            "workload_fingerprint": workload.fingerprint}
    best_cfg = result.best.index.to_config(fitness=result.best.fitness, **meta)
    init_cfg = result.initial_best.index.to_config(fitness=result.initial_best.fitness, **meta)
    best_cfg.save(out / "best_config.json")
    init_cfg.save(out / "initial_best_config.json")
    _write_json(out / "baseline.json", {
        "baseline": cfg.baseline, "structure": baseline_index.describe(), "fitness": stamp(base_rec),
    })
    summary = {
        "name": cfg.name,
        "trace_schema": TRACE_SCHEMA,
        "fitness_unit": "ns" if cfg.fitness.mode == "measured" else "cost",
        "best_fitness": result.best.fitness,
        "initial_best_fitness": result.initial_best.fitness,
        "baseline_fitness": base_rec.median,
        "ratio_to_baseline": result.best.fitness / base_rec.median if base_rec.median else math.inf,
        "best_structure": result.best.index.describe(),
        "best_node_count": result.best.index.node_count,
        "best_structural_hash": f"{result.best.index.structural_hash:016x}",
        "generations": cfg.genetic.g_max,
        "evaluations": result.evaluations,
        "cache_hits": result.cache_hits,
        "aborted_mutations": result.aborted,
    }
    if keep_timestamps:
        summary["elapsed_s"] = result.elapsed_s
    _write_json(out / "summary.json", summary)
    _write_json(out / "experiment.json", cfg.to_dict())
    log.info("%s: best %.1f vs baseline %.1f (ratio %.3f)", cfg.name, summary["best_fitness"],
             summary["baseline_fitness"], summary["ratio_to_baseline"])
    return summary


def run_upscale(
    best_config: Union[IndexConfig, str, Path],
    sizes: Sequence[int],
    cfg: ExperimentConfig,
    initial_config: Union[IndexConfig, str, Path, None] = None,
    out_csv: Union[str, Path, None] = None,
    samples: int = 10_000,
) -> List[Dict[str, Any]]:
    """Rebuild configurations at larger sizes, verify them and measure fitness.

    ``improvement`` is the initial configuration's fitness divided by the best
    configuration's, both rebuilt at the same size (> 1 means better).
    """
    best = best_config if isinstance(best_config, IndexConfig) else IndexConfig.load(best_config)
    init = None
    if initial_config is not None:
        init = initial_config if isinstance(initial_config, IndexConfig) else IndexConfig.load(initial_config)
    rows = []
    for n in sizes:
        dataset = dataset_from_spec(cfg.dataset, n)
        workload = cfg.workload.build(dataset)
        ev = cfg.fitness.evaluator(dataset, workload, cfg.genetic.c)
        index = build_from_config(best, dataset.keys)
        ok = bool(index.verify(dataset.keys, max_exhaustive=0, samples=samples))
        rec = ev.evaluate(index)
        init_fit = ev.evaluate(build_from_config(init, dataset.keys)).median if init is not None else math.nan
        base_fit = ev.evaluate(build_baseline(cfg.baseline, dataset)).median
        row = {
            "size": n,
            "fitness": rec.median,
            "initial_fitness": init_fit,
            "improvement": init_fit / rec.median if rec.median else math.nan,
            "baseline_fitness": base_fit,
            "correct": ok,
        }
        log.info("upscale %d: %s", n, row)
        rows.append(row)
    if out_csv is not None:
        write_csv(out_csv, UPSCALE_COLUMNS, [[r[c] for c in UPSCALE_COLUMNS] for r in rows])
    return rows


def run_poc_benchmark(
    dataset: Dataset,
    workload,
    contenders: Mapping[str, Union[IndexConfig, PhysicalIndex]],
    runs: int = 5,
    range_mode: str = "lower_bound",
    seed: int = 0,
    out_csv: Union[str, Path, None] = None,
) -> List[Dict[str, Any]]:
    """Average per-query lookup time of each contender over ``runs`` shuffled executions."""
    rows = []
    for name, c in contenders.items():
        index = c if isinstance(c, PhysicalIndex) else build_from_config(c, dataset.keys)
        ev = Evaluator(dataset, workload, c=runs, mode="measured", range_mode=range_mode, seed=seed)
        rec = ev.evaluate(index)
        per_query = np.asarray(rec.runs) / len(workload)
        rows.append({
            "contender": name,
            "nodes": index.node_count,
            "queries": len(workload),
            "mean_ns_per_query": float(per_query.mean()),
            "std_ns_per_query": float(per_query.std()),
            "mean_total_ns": float(np.mean(rec.runs)),
            "runs": runs,
        })
        log.info("poc %s: %.1f ns/query (sd %.1f)", name, rows[-1]["mean_ns_per_query"], rows[-1]["std_ns_per_query"])
    if out_csv is not None:
        write_csv(out_csv, POC_COLUMNS, [[r[c] for c in POC_COLUMNS] for r in rows])
    return rows


def poc_contenders(n: int) -> Dict[str, IndexConfig]:
    """The hand-written three-partition structure and the uniform B-tree."""
    keys = np.arange(n, dtype=np.uint64)
    return {
        "hand_spec": poc_hand_spec(n),
        "btree": IndexConfig.from_index(bulkload_btree(keys, btree_spec(n))),
    }
