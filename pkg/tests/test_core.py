from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gene.core import (
    KEY_MAX,
    BitPrefix,
    BitSuffix,
    LinearModel,
    LogicalIndex,
    LogicalNode,
    RangePivots,
    Record,
    RoutingInformation,
    StructuralError,
    apply_partition,
    check_complete,
    check_correct,
    partition_from_dict,
    query_grid,
    range_query,
    running_example,
)

R = running_example()  # keys 1,2,6,7,11,12 with payload = rank


def two_level(records, pivots=(7,)):
    """Root with range pivots over one leaf per key range."""
    p = RangePivots(np.array(pivots, dtype=np.uint64))
    bounds = [0, *pivots, KEY_MAX + 1]
    leaves = []
    for i in range(len(bounds) - 1):
        dt = frozenset(t for t in records if bounds[i] <= t.key < bounds[i + 1])
        leaves.append(LogicalNode(i + 1, dt=dt))
    root = LogicalNode(0, p, RoutingInformation.of({i: [i + 1] for i in range(len(leaves))}))
    return LogicalIndex.from_nodes([root, *leaves], (0,))


class TestPartitionFunctions:
    def test_bit_suffix_of_12(self):
        assert apply_partition(BitSuffix(3), 12) == 4

    def test_linear_model_third(self):
        assert apply_partition(LinearModel(1 / 3, 0.0, 10), 12) == 4

    def test_empty_pivots_single_partition(self):
        p = RangePivots(np.zeros(0, dtype=np.uint64))
        assert p.domain_size == 1
        assert {p(k) for k in (0, 5, KEY_MAX)} == {0}

    def test_pivot_ranges_half_open(self):
        p = RangePivots(np.array([6, 11], dtype=np.uint64))
        assert [p(k) for k in (0, 5, 6, 10, 11, KEY_MAX)] == [0, 0, 1, 1, 2, 2]

    def test_bit_prefix_two_bits(self):
        # start counts from the most significant bit
        p = BitPrefix(0, 2)
        assert p(0) == 0 and p(KEY_MAX) == 3 and p(1 << 62) == 1 and p(1 << 63) == 2
        assert BitPrefix(62, 2)(6) == 2

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            RangePivots(np.array([5, 5], dtype=np.uint64))
        with pytest.raises(ValueError):
            BitSuffix(0)
        with pytest.raises(ValueError):
            LinearModel(1.0, 0.0, 0)

    @pytest.mark.parametrize(
        "d",
        [
            {"kind": "pivots", "pivots": [3, 9]},
            {"kind": "linear", "slope": 0.5, "intercept": 1.0, "bins": 4},
            {"kind": "bit_suffix", "width": 3},
            {"kind": "bit_prefix", "start": 60, "width": 4},
        ],
    )
    def test_dict_round_trip(self, d):
        p = partition_from_dict(d)
        assert partition_from_dict(p.describe()) == p

    def test_determinism_fuzz(self):
        keys = np.random.default_rng(0).integers(0, 2**63, 100_000, dtype=np.uint64)
        fs = [BitSuffix(5), BitPrefix(40, 6), LinearModel(1e-15, 3.0, 64), RangePivots(np.array([2**40, 2**60], np.uint64))]
        for f in fs:
            a = [f(int(k)) for k in keys[:20_000]]
            b = [f(int(k)) for k in keys[:20_000]]
            assert a == b
            assert all(0 <= v < f.domain_size for v in a)

    @given(st.integers(0, KEY_MAX), st.integers(1, 64))
    def test_bit_suffix_total(self, key, width):
        v = BitSuffix(width)(key)
        assert 0 <= v < 2**width and v == key & ((1 << width) - 1)

    @given(st.integers(0, KEY_MAX), st.integers(0, KEY_MAX))
    def test_value_range_covers_keys(self, a, b):
        l, h = min(a, b), max(a, b)
        for p in (RangePivots(np.array([100, 2**40], np.uint64)), LinearModel(1e-12, 0.0, 16), BitPrefix(0, 8)):
            vr = p.value_range(l, h)
            assert p(l) in vr and p(h) in vr


class TestRangeQuery:
    def test_running_example_6_to_12(self):
        idx = two_level(R)
        got = {t.key for t in range_query(idx, idx.start_nodes, 6, 12)}
        assert got == {7, 6, 12, 11}

    def test_point_query_7(self):
        idx = two_level(R)
        assert range_query(idx, idx.start_nodes, 7, 7) == {Record(7, 3)}

    def test_outside_domain_empty(self):
        idx = two_level(R)
        assert range_query(idx, idx.start_nodes, 13, 20) == set()

    def test_unknown_start_node(self):
        idx = two_level(R)
        with pytest.raises(StructuralError):
            range_query(idx, (99,), 0, 5)

    def test_l_greater_than_h_rejected(self):
        idx = two_level(R)
        with pytest.raises(ValueError):
            range_query(idx, idx.start_nodes, 5, 4)

    def test_shared_child_visited_once(self):
        # a bit-suffix root maps several values to one leaf; results are still a set
        leaf = LogicalNode(1, dt=frozenset(R))
        root = LogicalNode(0, BitSuffix(2), RoutingInformation.of({0: [1], 1: [1], 2: [1], 3: [1]}))
        idx = LogicalIndex.from_nodes([root, leaf], (0,))
        assert range_query(idx, (0,), 0, KEY_MAX) == set(R)
        assert check_correct(idx)


class TestCompleteness:
    def test_two_level_complete(self):
        assert check_complete(two_level(R, (6, 11)))

    def test_single_node_complete(self):
        idx = LogicalIndex.from_nodes([LogicalNode(0, dt=frozenset(R))], (0,))
        assert check_complete(idx)

    def test_removed_target_incomplete(self):
        idx = two_level(R)
        assert not check_complete(idx.without(1))

    def test_removing_any_referenced_node(self):
        idx = two_level(R, (2, 6, 11))
        for nid in range(1, 5):
            assert not check_complete(idx.without(nid))

    def test_dag(self):
        assert two_level(R).is_dag()
        a = LogicalNode(0, RangePivots(np.zeros(0, np.uint64)), RoutingInformation.of({0: [1]}))
        b = LogicalNode(1, RangePivots(np.zeros(0, np.uint64)), RoutingInformation.of({0: [0]}))
        assert not LogicalIndex.from_nodes([a, b], (0,)).is_dag()

    def test_internal_nodes_carry_no_data(self):
        with pytest.raises(ValueError):
            LogicalNode(0, BitSuffix(1), RoutingInformation.of({0: [1]}), frozenset(R))

    def test_routing_needs_partition(self):
        with pytest.raises(ValueError):
            LogicalNode(0, None, RoutingInformation.of({0: [1]}))


class TestCorrectness:
    def test_bulkloaded_shape_correct(self):
        res = check_correct(two_level(R, (2, 7, 11)))
        assert res and res.pairs_checked == 8 * 9 // 2

    def test_misplaced_tuple_detected(self):
        idx = two_level(R, (7,))
        left, right = idx.nodes[1], idx.nodes[2]
        moved = Record(12, 5)
        nodes = dict(idx.nodes)
        nodes[1] = LogicalNode(1, dt=left.dt | {moved})
        nodes[2] = LogicalNode(2, dt=right.dt - {moved})
        bad = LogicalIndex(nodes, (0,))
        res = check_correct(bad, R)
        assert not res and res.counterexample is not None

    def test_empty_index(self):
        idx = LogicalIndex.from_nodes([LogicalNode(0)], (0,))
        assert check_correct(idx, [])

    def test_grid_has_sentinels(self):
        assert query_grid([3, 1, 7]) == [0, 1, 3, 7, 8]
        assert query_grid([0, KEY_MAX]) == [0, KEY_MAX]

    @given(st.lists(st.integers(0, 200), min_size=1, max_size=25, unique=True), st.lists(st.integers(0, 200), max_size=4, unique=True))
    def test_pivot_indexes_always_correct(self, keys, pivots):
        recs = [Record(k, i) for i, k in enumerate(sorted(keys))]
        piv = tuple(sorted(p for p in pivots if p > 0))
        assert check_correct(two_level(recs, piv))
