from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gene.builder import build_single_node, bulkload_btree, BulkloadSpec, Fixed, init_population
from gene.core import check_correct
from gene.layouts import (
    ORDERED_METHODS,
    DataLayout,
    IncompatiblePhysicalChoice,
    SearchMethod,
    compatibility_matrix,
    compatible,
    valid_pairs,
)
from gene.physical import PhysicalIndex, PhysicalNode, fit_linreg, lower_bound
from gene.workload import gen_range_workload, gen_uni_dense

SC, HASH, TREE = DataLayout.SORTED_COL, DataLayout.HASH, DataLayout.TREE
ORDERED_PAIRS = [(SC, m) for m in ORDERED_METHODS] + [(TREE, SearchMethod.BINS)]


class TestLowerBound:
    @pytest.mark.parametrize("layout,method", ORDERED_PAIRS)
    def test_running_example_positions(self, example_keys, layout, method):
        assert lower_bound(example_keys, 7, method, layout) == 3
        assert lower_bound(example_keys, 0, method, layout) == 0
        assert lower_bound(example_keys, 13, method, layout) == 6
        assert lower_bound(example_keys, 8, method, layout) == 4

    def test_hash_exact_match_only(self, example_keys):
        assert lower_bound(example_keys, 7, SearchMethod.HASHS, HASH) == 3
        assert lower_bound(example_keys, 8, SearchMethod.HASHS, HASH) is None

    def test_incompatible_rejected(self, example_keys):
        with pytest.raises(IncompatiblePhysicalChoice):
            lower_bound(example_keys, 7, SearchMethod.BINS, HASH)

    def test_agree_with_scan_on_random_cases(self):
        # 10^4 (array, probe) cases; np.searchsorted is the independent oracle
        rng = np.random.default_rng(7)
        for i in range(10_000):
            n = int(rng.integers(0, 40))
            hi = int(rng.choice([50, 10**6, 2**63]))
            keys = np.unique(rng.integers(0, hi, n, dtype=np.uint64))
            q = int(rng.integers(0, hi)) if i % 3 else int(keys[rng.integers(len(keys))]) if len(keys) else 0
            want = int(np.searchsorted(keys, np.uint64(q)))
            assert lower_bound(keys, q, SearchMethod.SCAN) == want
            for layout, m in ORDERED_PAIRS[1:]:
                assert lower_bound(keys, q, m, layout) == want, (keys, q, m)

    @given(st.lists(st.integers(0, 2**64 - 1), max_size=60, unique=True), st.integers(0, 2**64 - 1))
    def test_property_ordered_methods(self, raw, q):
        keys = np.array(sorted(raw), dtype=np.uint64)
        want = int(np.searchsorted(keys, np.uint64(q)))
        for layout, m in ORDERED_PAIRS:
            assert lower_bound(keys, q, m, layout) == want


class TestLinReg:
    def test_dense_fit_exact(self):
        m = fit_linreg(np.arange(1000, dtype=np.uint64))
        assert m.slope == pytest.approx(1.0)
        assert m.intercept == pytest.approx(0.0, abs=1e-9)
        assert (m.lower, m.upper) == (0, 0)

    def test_running_example_every_key_found(self, example_keys):
        m = fit_linreg(example_keys)
        for pos, k in enumerate(example_keys):
            a, b = m.window(int(k), len(example_keys))
            assert a <= pos < b
            assert lower_bound(example_keys, int(k), SearchMethod.LINREGS) == pos

    def test_single_key(self):
        m = fit_linreg(np.array([42], dtype=np.uint64))
        assert (m.slope, m.lower, m.upper) == (0.0, 0, 0)
        assert m.predict(0, 1) == 0 and m.predict(10**9, 1) == 0

    @given(st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=200, unique=True))
    def test_bounds_cover_all_keys(self, raw):
        keys = np.array(sorted(raw), dtype=np.uint64)
        m = fit_linreg(keys)
        assert m.lower >= 0 and m.upper >= 0
        for pos, k in enumerate(keys):
            a, b = m.window(int(k), len(keys))
            assert a <= pos < b


class TestCompatibility:
    def test_matrix(self):
        assert not compatible(HASH, SearchMethod.BINS)
        assert compatible(SC, SearchMethod.SCAN)
        assert compatible(HASH, SearchMethod.HASHS)
        assert compatible(TREE, SearchMethod.BINS)
        assert not compatible(TREE, SearchMethod.SCAN)
        assert sum(compatibility_matrix(l, m) for l in DataLayout for m in SearchMethod) == 7

    def test_pairs(self):
        assert len(valid_pairs()) == 7
        assert all(p[0] != HASH for p in valid_pairs(routing=True))

    @pytest.mark.parametrize("layout", list(DataLayout))
    @pytest.mark.parametrize("method", list(SearchMethod))
    def test_incompatible_node_rejected(self, example_keys, layout, method):
        vals = np.arange(len(example_keys), dtype=np.int64)
        if compatible(layout, method):
            PhysicalNode.leaf(example_keys, vals, layout, method)
        else:
            with pytest.raises(ValueError):
                PhysicalNode.leaf(example_keys, vals, layout, method)

    def test_hash_inner_node_rejected(self, example_keys):
        vals = np.arange(6, dtype=np.int64)
        leaf = PhysicalNode.leaf(example_keys, vals, SC, SearchMethod.BINS)
        with pytest.raises(ValueError):
            PhysicalNode.inner([leaf], HASH, SearchMethod.HASHS)

    def test_capacity(self, example_keys):
        with pytest.raises(ValueError):
            build_single_node(example_keys, SC, SearchMethod.BINS, capacity=5)


class TestExecution:
    def test_point_on_running_example(self, example_keys):
        for layout, m in valid_pairs():
            idx = build_single_node(example_keys, layout, m)
            assert idx.execute_point(6) == 2
            assert idx.execute_point(5) is None

    def test_range_on_running_example(self, example_keys):
        idx = bulkload_btree(example_keys, BulkloadSpec(3, 2, 2))
        got = idx.execute_range(6, 12)
        assert [r.key for r in got] == [6, 7, 11, 12]
        assert idx.execute_range(13, 100) == []
        with pytest.raises(ValueError):
            idx.execute_range(5, 4)

    def test_single_hash_all_100k_keys(self):
        keys = np.arange(100_000, dtype=np.uint64)
        idx = build_single_node(keys, HASH, SearchMethod.HASHS)
        assert idx.verify(keys, max_exhaustive=0, samples=1000)
        assert idx.execute_point(100_000) is None

    def test_point_fuzz_no_false_answers(self, keys1k):
        idx = init_population(keys1k, 1, 3)[0]
        rng = np.random.default_rng(1)
        probes = rng.integers(0, int(keys1k[-1]) + 10, 100_000).astype(np.uint64)
        stored = set(keys1k.tolist())
        ranks = {int(k): i for i, k in enumerate(keys1k)}
        for q in probes[:100_000:10]:
            got = idx.execute_point(int(q))
            assert got == ranks.get(int(q))
            assert (got is None) == (int(q) not in stored)

    def test_selectivity_range_returns_100(self):
        ds = gen_uni_dense(100_000)
        idx = bulkload_btree(ds.keys, BulkloadSpec(100, 1000, 10, Fixed(SC, SearchMethod.BINS)))
        w = gen_range_workload(ds, 0.001, count=200, seed=3)
        out_a, out_b, stats = idx.run(w)
        assert np.all(out_a == 100)
        assert stats.visits > 0 and stats.comparisons > 0

    def test_lower_bound_mode(self, example_keys):
        idx = bulkload_btree(example_keys, BulkloadSpec(3, 2, 2))
        assert idx.lower_bound(8) == 4
        assert idx.lower_bound(13) is None
        assert idx.lower_bound(0) == 0

    def test_hash_range_probes_counted(self, example_keys):
        idx = build_single_node(example_keys, HASH, SearchMethod.HASHS)
        assert idx.range_count(2, 11) == (4, 1 + 2 + 3 + 4)


class TestIndexProperties:
    def test_verify_flags_misplaced_key(self, example_keys):
        vals = np.arange(6, dtype=np.int64)
        a = PhysicalNode.leaf(example_keys[:3], vals[:3], SC, SearchMethod.BINS)
        b = PhysicalNode.leaf(example_keys[3:], vals[3:], SC, SearchMethod.BINS)
        # pivot 6 sends key 6 right, but it is stored left
        bad = PhysicalIndex(PhysicalNode.inner([a, b], SC, SearchMethod.BINS, np.array([6], np.uint64)), validate=False)
        res = bad.verify(example_keys, vals)
        assert not res and res.counterexample is not None

    def test_logical_view_correct(self, example_keys):
        idx = bulkload_btree(example_keys, BulkloadSpec(3, 2, 2))
        assert check_correct(idx.to_logical())

    def test_structural_hash_matches_config_bytes(self, keys1k):
        pop = init_population(keys1k, 6, 0)
        for a in pop:
            for b in pop:
                same_cfg = a.to_config().to_json() == b.to_config().to_json()
                assert (a.structural_hash == b.structural_hash) == same_cfg

    def test_verify_exhaustive_pairs(self, keys1k):
        idx = init_population(keys1k, 1, 0)[0]
        res = idx.verify(keys1k)
        assert res and res.pairs_checked == 1002 * 1003 // 2
