"""Fitness of a physical index on a workload.

``measured`` mode times whole-workload executions: one untimed warm-up, then
``c`` timed runs, each on a freshly shuffled copy of the workload. The fitness
is the median run time in nanoseconds. ``cost`` mode replaces timing by a
deterministic weighted count of node visits, comparisons and hash probes.

Results are cached by (structural hash, workload fingerprint), so an index is
never evaluated twice.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import kernels as K
from .physical import PhysicalIndex, range_mode_code
from .workload import POINT, Dataset, Workload

log = logging.getLogger(__name__)

MODES = ("measured", "cost")


class CorrectnessViolation(RuntimeError):
    """An index returned a wrong answer while being evaluated."""

    def __init__(self, position: int, kind: int, lo: int, hi: int, expected: Tuple[int, int], got: Tuple[int, int]):
        self.position = position
        self.query = ("point" if kind == POINT else "range", lo, hi)
        self.expected = expected
        self.got = got
        super().__init__(f"query #{position} {self.query}: expected {expected}, got {got}")


@dataclass(frozen=True)
class FitnessRecord:
    median: float
    runs: Tuple[float, ...]
    workload_fingerprint: str
    mode: str = "measured"
    timestamp: float = field(default=0.0, compare=False)

    @property
    def median_runtime(self) -> float:
        return self.median

    def to_dict(self) -> Dict:
        return {
            "median": self.median,
            "runs": list(self.runs),
            "workload_fingerprint": self.workload_fingerprint,
            "mode": self.mode,
            "unit": "ns" if self.mode == "measured" else "cost",
            "timestamp": self.timestamp,
        }


def median(values) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


@dataclass(frozen=True)
class CostWeights:
    visit: float = 10.0
    comparison: float = 1.0
    probe: float = 4.0


class Evaluator:
    """Evaluates indexes over one dataset and workload, with a fitness cache."""

    def __init__(
        self,
        dataset: Dataset,
        workload: Workload,
        *,
        c: int = 5,
        mode: str = "measured",
        range_mode: str = "full",
        seed: int = 0,
        weights: CostWeights = CostWeights(),
        check: bool = True,
    ) -> None:
        if c < 1:
            raise ValueError("c must be at least 1")
        if mode not in MODES:
            raise ValueError(f"unknown fitness mode {mode!r}")
        self.dataset = dataset
        self.workload = workload
        self.c = c
        self.mode = mode
        self.range_mode = range_mode
        self.weights = weights
        self.check = check
        self._rng = np.random.default_rng(seed)
        self._range_code = range_mode_code(range_mode)
        self._expected = workload.expected(dataset, range_mode)
        self._out_a = np.empty(len(workload), dtype=np.int64)
        self._out_b = np.empty(len(workload), dtype=np.int64)
        self._cache: Dict[Tuple[int, str], FitnessRecord] = {}
        self.measurements = 0
        self.cache_hits = 0

    @property
    def fingerprint(self) -> str:
        return f"{self.workload.fingerprint}:{self.mode}:{self.range_mode}"

    def cached(self, index: PhysicalIndex) -> Optional[FitnessRecord]:
        return self._cache.get((index.structural_hash, self.fingerprint))

    def evaluate(self, index: PhysicalIndex) -> FitnessRecord:
        key = (index.structural_hash, self.fingerprint)
        rec = self._cache.get(key)
        if rec is not None:
            self.cache_hits += 1
            return rec
        rec = self._cost(index) if self.mode == "cost" else self._measure(index)
        self.measurements += 1
        self._cache[key] = rec
        return rec

    __call__ = evaluate

    # -- internals -------------------------------------------------------------

    def _execute(self, index: PhysicalIndex, w: Workload, st: np.ndarray, out_a=None, out_b=None) -> int:
        """Run the workload once; returns elapsed nanoseconds."""
        flat = index.flat
        stacks = index._stacks()
        out_a = self._out_a if out_a is None else out_a
        out_b = self._out_b if out_b is None else out_b
        t0 = time.perf_counter_ns()
        K.run_workload(*flat, w.kind, w.lo, w.hi, self._range_code, out_a, out_b, st, *stacks)
        return time.perf_counter_ns() - t0

    def _verify(self, w: Workload, perm: Optional[np.ndarray], out_a=None, out_b=None) -> None:
        if not self.check:
            return
        out_a = self._out_a if out_a is None else out_a
        out_b = self._out_b if out_b is None else out_b
        ea, eb = self._expected
        if perm is not None:
            ea, eb = ea[perm], eb[perm]
        bad = np.flatnonzero((out_a != ea) | (out_b != eb))
        if len(bad):
            i = int(bad[0])
            raise CorrectnessViolation(
                i, int(w.kind[i]), int(w.lo[i]), int(w.hi[i]),
                (int(ea[i]), int(eb[i])), (int(out_a[i]), int(out_b[i])),
            )

    def _measure(self, index: PhysicalIndex) -> FitnessRecord:
        # Shuffles and (pre-faulted) output buffers are prepared before the
        # warm-up and answers are checked after the last run, so no
        # bookkeeping between timed runs evicts the index from the cache.
        n = len(self.workload)
        perms = [self._rng.permutation(n) for _ in range(self.c)]
        shuffled = [self.workload.permuted(p) for p in perms]
        outs = [(np.full(n, -1, dtype=np.int64), np.full(n, -1, dtype=np.int64)) for _ in range(self.c)]
        st = np.zeros(3, dtype=np.int64)
        self._execute(index, self.workload, st)
        self._verify(self.workload, None)
        self._execute(index, shuffled[0], st, *outs[0])
        runs = [float(self._execute(index, w, st, a, b)) for w, (a, b) in zip(shuffled, outs)]
        for w, p, (a, b) in zip(shuffled, perms, outs):
            self._verify(w, p, a, b)
        return FitnessRecord(median(runs), tuple(runs), self.fingerprint, "measured", time.time())

    def _cost(self, index: PhysicalIndex) -> FitnessRecord:
        st = np.zeros(3, dtype=np.int64)
        self._execute(index, self.workload, st)
        self._verify(self.workload, None)
        wt = self.weights
        cost = float(wt.visit * st[K.ST_VISITS] + wt.comparison * st[K.ST_CMPS] + wt.probe * st[K.ST_PROBES])
        return FitnessRecord(cost, (cost,), self.fingerprint, "cost", time.time())


def fitness(index: PhysicalIndex, dataset: Dataset, workload: Workload, c: int = 5, **kw) -> FitnessRecord:
    """One-shot evaluation without a shared cache."""
    return Evaluator(dataset, workload, c=c, **kw).evaluate(index)
