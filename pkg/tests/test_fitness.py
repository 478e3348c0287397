from __future__ import annotations

import numpy as np
import pytest

from gene.builder import BulkloadSpec, build_single_node, bulkload_btree, init_population
from gene.fitness import CorrectnessViolation, Evaluator, FitnessRecord, fitness, median
from gene.layouts import DataLayout, SearchMethod
from gene.physical import PhysicalIndex, PhysicalNode
from gene.workload import POINT, Dataset, Workload, gen_uni_dense, preset

SC, BINS = DataLayout.SORTED_COL, SearchMethod.BINS


@pytest.fixture(scope="module")
def small():
    ds = gen_uni_dense(5000)
    return ds, preset("mix", count=2000).build(ds)


def test_median_of_five():
    assert median([10, 12, 11, 30, 9]) == 11
    rec = FitnessRecord(median([10, 12, 11, 30, 9]), (10, 12, 11, 30, 9), "w")
    assert rec.median_runtime == 11


def test_second_evaluation_is_cached(small):
    ds, w = small
    ev = Evaluator(ds, w, c=3)
    idx = init_population(ds.keys, 1, 0)[0]
    a = ev.evaluate(idx)
    assert ev.measurements == 1
    b = ev.evaluate(idx)
    assert b is a and ev.measurements == 1 and ev.cache_hits == 1


def test_cache_keyed_by_structure_not_identity(small):
    ds, w = small
    ev = Evaluator(ds, w, mode="cost")
    spec = BulkloadSpec(10, 500, 4)
    a = bulkload_btree(ds.keys, spec, np.random.default_rng(1))
    b = bulkload_btree(ds.keys, spec, np.random.default_rng(1))
    assert a is not b and a.structural_hash == b.structural_hash
    ev.evaluate(a)
    ev.evaluate(b)
    assert ev.measurements == 1


def test_measured_record_shape(small):
    ds, w = small
    rec = fitness(build_single_node(ds.keys, SC, BINS), ds, w, c=5)
    assert len(rec.runs) == 5 and rec.median == float(np.median(rec.runs))
    assert rec.mode == "measured" and rec.timestamp > 0
    assert rec.workload_fingerprint.startswith(w.fingerprint)


def test_cost_mode_is_deterministic(small):
    ds, w = small
    idx = init_population(ds.keys, 1, 3)[0]
    a = fitness(idx, ds, w, mode="cost")
    b = fitness(idx, ds, w, mode="cost", seed=99)
    assert a.median == b.median and a.mode == "cost"


def test_cost_mode_orders_obvious_cases(small):
    ds, _ = small
    w = preset("point", count=2000).build(ds)
    scan = build_single_node(ds.keys, SC, SearchMethod.SCAN)
    bins = build_single_node(ds.keys, SC, BINS)
    assert fitness(bins, ds, w, mode="cost").median < fitness(scan, ds, w, mode="cost").median


def test_wrong_answer_raises(example_keys):
    ds = Dataset("ex", example_keys)
    vals = np.arange(6, dtype=np.int64)
    a = PhysicalNode.leaf(example_keys[:3], vals[:3], SC, BINS)
    b = PhysicalNode.leaf(example_keys[3:], vals[3:], SC, BINS)
    bad = PhysicalIndex(PhysicalNode.inner([a, b], SC, BINS, np.array([6], np.uint64)), validate=False)
    w = Workload("w", np.full(3, POINT, np.uint8), np.array([1, 6, 12], np.uint64), np.array([1, 6, 12], np.uint64))
    for mode in ("measured", "cost"):
        with pytest.raises(CorrectnessViolation) as e:
            Evaluator(ds, w, mode=mode).evaluate(bad)
        assert e.value.query == ("point", 6, 6) and e.value.expected[0] == 2


def test_invalid_arguments(small):
    ds, w = small
    with pytest.raises(ValueError):
        Evaluator(ds, w, c=0)
    with pytest.raises(ValueError):
        Evaluator(ds, w, mode="wallclock")


def test_hash_beats_random_three_level_tree():
    """Direction only: a single hash node against randomized bulkloaded trees."""
    ds = gen_uni_dense(100_000)
    w = preset("point").build(ds)
    ev = Evaluator(ds, w, c=5)
    h = ev.evaluate(build_single_node(ds.keys, DataLayout.HASH, SearchMethod.HASHS)).median
    trees = [ev.evaluate(t).median for t in init_population(ds.keys, 5, 0)]
    assert h < np.median(trees)
