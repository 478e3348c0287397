from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gene.builder import bulkload_btree, BulkloadSpec
from gene.workload import (
    POINT,
    RANGE,
    DatasetError,
    NormalSpec,
    PointSpec,
    RangeSpec,
    Workload,
    WorkloadError,
    WorkloadSpec,
    dataset_from_spec,
    gen_mix,
    gen_normal_point_workload,
    gen_point_workload,
    gen_range_workload,
    gen_skewed,
    gen_uni_dense,
    load_and_sample,
    load_dataset,
    preset,
    write_keys,
)

CHI2_9DOF_P01 = 21.666


@pytest.fixture(scope="module")
def dense100k():
    return gen_uni_dense(100_000)


@pytest.fixture
def keyfile(tmp_path):
    keys = np.random.default_rng(7).choice(10**12, size=50_000, replace=False).astype(np.uint64)
    path = tmp_path / "keys.bin"
    write_keys(path, keys)
    return path, keys


class TestDatasets:
    def test_uni_dense(self, dense100k):
        assert dense100k.n == 100_000
        assert np.array_equal(dense100k.keys, np.arange(100_000, dtype=np.uint64))

    def test_uni_dense_single(self):
        assert gen_uni_dense(1).keys.tolist() == [0]

    def test_uni_dense_identity_cdf(self, dense100k):
        assert np.array_equal(np.searchsorted(dense100k.keys, dense100k.keys), np.arange(100_000))

    def test_dataset_is_read_only(self, dense100k):
        with pytest.raises(ValueError):
            dense100k.keys[0] = 5

    def test_rejects_unsorted(self):
        from gene.workload import Dataset

        with pytest.raises(DatasetError):
            Dataset("x", np.array([3, 1], dtype=np.uint64))
        with pytest.raises(DatasetError):
            gen_uni_dense(0)

    def test_skewed_is_strictly_increasing(self):
        ds = gen_skewed(20_000, seed=3)
        assert ds.n == 20_000 and np.all(ds.keys[1:] > ds.keys[:-1])
        gaps = np.diff(ds.keys.astype(np.float64))
        assert gaps.max() / np.median(gaps) > 100

    def test_load_and_sample(self, keyfile):
        path, keys = keyfile
        ds = load_and_sample(path, 10_000, seed=1)
        assert ds.n == 10_000 and np.all(ds.keys[1:] > ds.keys[:-1])
        assert np.isin(ds.keys, keys).all()

    def test_sample_full_file(self, keyfile):
        path, keys = keyfile
        assert np.array_equal(load_and_sample(path, len(keys)).keys, np.sort(keys))

    def test_different_seeds_differ(self, keyfile):
        path, _ = keyfile
        for s in range(10):
            a = load_and_sample(path, 1000, seed=2 * s)
            b = load_and_sample(path, 1000, seed=2 * s + 1)
            assert a.fingerprint != b.fingerprint

    def test_sample_too_large(self, keyfile):
        path, keys = keyfile
        with pytest.raises(DatasetError):
            load_and_sample(path, len(keys) + 1)

    def test_truncated_file(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(np.array([10, 1, 2], dtype="<u8").tobytes())
        with pytest.raises(DatasetError, match="header"):
            load_dataset(p)
        p.write_bytes(b"abc")
        with pytest.raises(DatasetError):
            load_dataset(p)

    def test_duplicate_keys_in_file(self, tmp_path):
        p = tmp_path / "dup.bin"
        write_keys(p, np.array([5, 1, 5], dtype=np.uint64))
        with pytest.raises(DatasetError, match="duplicate"):
            load_dataset(p)
        with pytest.raises(DatasetError, match="duplicate"):
            load_and_sample(p, 3)

    def test_round_trip(self, tmp_path):
        ds = gen_skewed(1000, seed=1)
        ds.save(tmp_path / "s.bin")
        assert load_dataset(tmp_path / "s.bin").fingerprint == ds.fingerprint

    def test_dataset_from_spec(self, keyfile):
        path, _ = keyfile
        assert dataset_from_spec({"kind": "uni_dense", "n": 10}).n == 10
        assert dataset_from_spec({"kind": "file", "path": str(path), "n": 100}).n == 100
        assert dataset_from_spec("skewed", n=50).n == 50
        with pytest.raises(DatasetError):
            dataset_from_spec({"kind": "books"})


class TestPointWorkloads:
    def test_paper_point_workload(self, dense100k):
        w = gen_point_workload(dense100k, 0, 100_000, 10_000, seed=0)
        assert len(w) == 10_000 and (w.kind == POINT).all()
        assert np.array_equal(w.lo, w.hi)

    def test_single_key_domain(self, dense100k):
        w = gen_point_workload(dense100k, 500, 501, 100)
        assert set(w.lo.tolist()) == {500}

    def test_decile_frequencies(self, dense100k):
        w = gen_point_workload(dense100k, count=100_000, seed=0)
        counts = np.bincount((w.lo // 10_000).astype(np.int64), minlength=10)
        chi2 = float(((counts - 10_000) ** 2 / 10_000).sum())
        assert chi2 < CHI2_9DOF_P01

    def test_with_replacement(self, dense100k):
        w = gen_point_workload(dense100k, 0, 100, 1000)
        assert len(np.unique(w.lo)) < 1000

    def test_invalid_domain(self, dense100k):
        for a, b in [(5, 5), (-1, 10), (0, 100_001)]:
            with pytest.raises(WorkloadError):
                gen_point_workload(dense100k, a, b, 10)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 500))
    def test_point_keys_exist(self, seed, count):
        ds = gen_skewed(2000, seed=seed % 17)
        w = gen_point_workload(ds, count=count, seed=seed)
        assert np.isin(w.lo, ds.keys).all()

    def test_normal_workload(self, dense100k):
        w = gen_normal_point_workload(dense100k, 75_000, 10_000, 50_000, seed=0)
        lo = w.lo.astype(np.float64)
        assert abs(lo.mean() - 75_000) < 200
        assert abs(lo.std() - 10_000) < 300
        assert lo.max() < 100_000

    def test_normal_clamps(self):
        ds = gen_uni_dense(100)
        w = gen_normal_point_workload(ds, 99, 1000, 1000)
        assert w.lo.min() >= 0 and w.lo.max() <= 99


class TestRangeWorkloads:
    def test_range_0001_spans_100_ranks(self, dense100k):
        w = gen_range_workload(dense100k, 0.001, count=10_000, seed=0)
        assert (w.kind == RANGE).all()
        assert ((w.hi - w.lo) == 99).all()

    def test_executed_cardinality(self, dense100k):
        w = gen_range_workload(dense100k, 0.001, count=500, seed=1)
        idx = bulkload_btree(dense100k.keys, BulkloadSpec(100, 1000, 10))
        for lo, hi in zip(w.lo[:200], w.hi[:200]):
            assert idx.range_count(int(lo), int(hi))[0] == 100

    def test_sel_zero_is_point(self, dense100k):
        w = gen_range_workload(dense100k, 0.0, count=100)
        assert np.array_equal(w.lo, w.hi)

    def test_span_too_large(self):
        ds = gen_uni_dense(100)
        with pytest.raises(WorkloadError):
            gen_range_workload(ds, 0.5, 0, 40)
        with pytest.raises(WorkloadError):
            gen_range_workload(ds, 1.5)

    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.2))
    def test_ranges_inside_domain(self, seed, sel):
        ds = gen_skewed(1000, seed=seed % 13)
        w = gen_range_workload(ds, sel, count=50, seed=seed)
        assert (w.lo <= w.hi).all()
        assert (w.lo >= ds.keys[0]).all() and (w.hi <= ds.keys[-1]).all()
        span = max(round(1000 * sel), 1)
        assert (np.searchsorted(ds.keys, w.hi, "right") - np.searchsorted(ds.keys, w.lo) == span).all()


class TestMixAndSpecs:
    def test_paper_mix_proportions(self, dense100k):
        w = preset("mix").build(dense100k)
        assert len(w) == 10_000
        assert (w.kind == POINT).sum() == 8000
        assert ((w.hi - w.lo)[w.kind == RANGE] == 999).all()

    def test_mix_is_shuffled(self, dense100k):
        w = preset("mix").build(dense100k)
        assert (w.kind[:2000] == POINT).sum() < 1900

    def test_pure_point_mix(self, dense100k):
        w = gen_mix(dense100k, [PointSpec(), RangeSpec(0.01)], [1.0, 0.0], 1000)
        assert (w.kind == POINT).all()

    def test_proportions_must_sum_to_one(self, dense100k):
        with pytest.raises(WorkloadError):
            gen_mix(dense100k, [PointSpec(), RangeSpec()], [0.5, 0.4], 100)

    def test_poc_partitions(self):
        ds = gen_uni_dense(1_000_000)
        w = preset("poc", count=100_000).build(ds)
        pt = w.lo[w.kind == POINT]
        assert (w.kind == RANGE).sum() == 20_000
        assert (pt < 100_000).sum() == 20_000
        assert ((pt >= 100_000) & (pt < 850_000)).sum() == 10_000
        assert (pt >= 850_000).sum() == 50_000
        rg = w.lo[w.kind == RANGE]
        assert rg.min() >= 100_000 and w.hi[w.kind == RANGE].max() < 850_000

    def test_deterministic(self, dense100k):
        a = preset("mix", seed=3).build(dense100k)
        b = preset("mix", seed=3).build(dense100k)
        c = preset("mix", seed=4).build(dense100k)
        assert a.fingerprint == b.fingerprint != c.fingerprint
        assert a.lo.tobytes() == b.lo.tobytes()

    def test_csv_round_trip(self, tmp_path, dense100k):
        w = preset("mix", count=300).build(dense100k)
        w.to_csv(tmp_path / "w.csv")
        back = Workload.from_csv(tmp_path / "w.csv")
        assert back.fingerprint == w.fingerprint
        assert (tmp_path / "w.csv").read_text().splitlines()[0] == "kind,lo,hi"

    def test_spec_dict_round_trip(self):
        spec = WorkloadSpec((PointSpec(frac_max=0.5), NormalSpec(100, 5.0)), (0.25, 0.75), 77, 9, "x")
        assert WorkloadSpec.from_dict(spec.to_dict()) == spec
        assert WorkloadSpec.from_dict({"preset": "range0.01", "count": 5}).count == 5
        assert WorkloadSpec.from_dict("point") == preset("point")

    def test_unknown_preset(self):
        with pytest.raises(WorkloadError):
            preset("zipf")
        with pytest.raises(WorkloadError):
            WorkloadSpec.from_dict({"parts": [{"type": "zipf"}]})

    def test_expected_answers(self):
        ds = gen_uni_dense(1000)
        w = Workload("t", np.array([POINT, RANGE, RANGE], np.uint8),
                     np.array([5, 10, 2000], np.uint64), np.array([5, 19, 3000], np.uint64))
        a, b = w.expected(ds, "full")
        assert a.tolist() == [5, 10, 0] and b.tolist()[1] == sum(range(10, 20))
        a, _ = w.expected(ds, "lower_bound")
        assert a.tolist() == [5, 10, -1]
