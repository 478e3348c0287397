"""Datasets and read-only query workloads.

Dataset files are little-endian: one uint64 element count followed by that many
uint64 keys. Workloads are three parallel arrays (kind, lo, hi); point queries
have ``lo == hi``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels as K

log = logging.getLogger(__name__)

POINT = K.Q_POINT
RANGE = K.Q_RANGE


class DatasetError(ValueError):
    """Malformed dataset file or invalid dataset contents."""


class WorkloadError(ValueError):
    """A workload specification that does not fit its dataset."""


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Strictly increasing uint64 keys; the payload of the i-th key is i."""

    name: str
    keys: np.ndarray

    def __post_init__(self) -> None:
        keys = np.ascontiguousarray(self.keys, dtype=np.uint64)
        if len(keys) == 0:
            raise DatasetError("a dataset needs at least one key")
        if len(keys) > 1 and not np.all(keys[1:] > keys[:-1]):
            raise DatasetError("dataset keys must be strictly increasing")
        if keys.flags.writeable:
            keys = keys.copy()
            keys.setflags(write=False)
        object.__setattr__(self, "keys", keys)

    @property
    def n(self) -> int:
        return len(self.keys)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def payloads(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.int64)

    @property
    def fingerprint(self) -> str:
        return hashlib.blake2b(self.keys.tobytes(), digest_size=8).hexdigest()

    def save(self, path: Union[str, Path]) -> None:
        write_keys(path, self.keys)

    def __repr__(self) -> str:
        return f"Dataset({self.name!r}, n={self.n})"


def gen_uni_dense(n: int) -> Dataset:
    if n < 1:
        raise DatasetError("n must be at least 1")
    return Dataset(f"uni_dense_{n}", np.arange(n, dtype=np.uint64))


def gen_skewed(n: int, seed: int = 0, segments: int = 8, span: int = 2**48) -> Dataset:
    """Synthetic stand-in for real-world data: a random piecewise-linear CDF.

    Each of ``segments`` equally sized rank ranges gets a random key density,
    so gaps vary by orders of magnitude between segments. Not derived from any
    real dataset.
    """
    if n < 1:
        raise DatasetError("n must be at least 1")
    rng = np.random.default_rng(seed)
    segments = max(1, min(segments, n))
    dens = 10.0 ** rng.uniform(0, 4, segments)
    counts = np.diff(np.linspace(0, n, segments + 1).round().astype(np.int64))
    widths = dens * counts
    widths = widths / widths.sum() * (span - n)
    parts, base = [], 0.0
    for c, w in zip(counts, widths):
        gaps = rng.exponential(1.0, c)
        pos = base + np.cumsum(gaps) / gaps.sum() * w
        parts.append(pos)
        base += w
    keys = np.floor(np.concatenate(parts)).astype(np.uint64) + np.arange(n, dtype=np.uint64)
    return Dataset(f"skewed_{n}_s{seed}", keys)


def write_keys(path: Union[str, Path], keys: np.ndarray) -> None:
    keys = np.ascontiguousarray(keys, dtype="<u8")
    with open(path, "wb") as f:
        f.write(np.array([len(keys)], dtype="<u8").tobytes())
        f.write(keys.tobytes())


def read_keys(path: Union[str, Path]) -> np.ndarray:
    """All keys of a dataset file, validated against the header count."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DatasetError(f"{path}: missing element count header")
    (count,) = np.frombuffer(raw[:8], dtype="<u8")
    if len(raw) != 8 + 8 * int(count):
        raise DatasetError(f"{path}: header says {int(count)} keys but file holds {(len(raw) - 8) / 8:g}")
    return np.frombuffer(raw, dtype="<u8", offset=8).astype(np.uint64)


def load_dataset(path: Union[str, Path], name: Optional[str] = None) -> Dataset:
    keys = np.sort(read_keys(path))
    if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
        raise DatasetError(f"{path}: duplicate keys")
    return Dataset(name or Path(path).stem, keys)


def load_and_sample(path: Union[str, Path], target_n: int, seed: int = 0, name: Optional[str] = None) -> Dataset:
    """Uniform sample of ``target_n`` distinct positions, returned sorted."""
    keys = read_keys(path)
    if target_n < 1 or target_n > len(keys):
        raise DatasetError(f"cannot sample {target_n} keys from {len(keys)}")
    rng = np.random.default_rng(seed)
    if target_n == len(keys):
        sample = keys
    else:
        sample = keys[rng.choice(len(keys), size=target_n, replace=False)]
    sample = np.sort(sample)
    if len(sample) > 1 and np.any(sample[1:] == sample[:-1]):
        raise DatasetError(f"{path}: duplicate keys in the sample")
    return Dataset(name or f"{Path(path).stem}_{target_n}", sample)


# ---------------------------------------------------------------------------
# workloads
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Workload:
    name: str
    kind: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        kind = np.ascontiguousarray(self.kind, dtype=np.uint8)
        lo = np.ascontiguousarray(self.lo, dtype=np.uint64)
        hi = np.ascontiguousarray(self.hi, dtype=np.uint64)
        if not (len(kind) == len(lo) == len(hi)):
            raise WorkloadError("kind, lo and hi must have the same length")
        if np.any(lo > hi):
            raise WorkloadError("every query needs lo <= hi")
        for a in (kind, lo, hi):
            a.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __len__(self) -> int:
        return len(self.kind)

    @property
    def point_fraction(self) -> float:
        return float(np.mean(self.kind == POINT)) if len(self) else 0.0

    @property
    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=8)
        for a in (self.kind, self.lo, self.hi):
            h.update(a.tobytes())
        return h.hexdigest()

    def permuted(self, perm: np.ndarray) -> "Workload":
        return Workload(self.name, self.kind[perm], self.lo[perm], self.hi[perm])

    def expected(self, dataset: Dataset, range_mode: str = "full") -> Tuple[np.ndarray, np.ndarray]:
        """Answers computed from the sorted dataset, in the layout ``PhysicalIndex.run`` produces."""
        keys = dataset.keys
        n = len(keys)
        a = np.searchsorted(keys, self.lo, side="left")
        out_a = np.empty(len(self), dtype=np.int64)
        out_b = np.zeros(len(self), dtype=np.int64)
        pt = self.kind == POINT
        hit = (a < n) & (keys[np.minimum(a, n - 1)] == self.lo)
        out_a[pt] = np.where(hit[pt], a[pt], -1)
        rq = ~pt
        if range_mode == "full":
            b = np.searchsorted(keys, self.hi, side="right")
            cnt = (b - a)[rq]
            out_a[rq] = cnt
            # payloads are ranks: sum of a .. b-1
            out_b[rq] = (a[rq] + b[rq] - 1) * cnt // 2
        elif range_mode == "lower_bound":
            out_a[rq] = np.where(a[rq] < n, a[rq], -1)
        else:
            raise ValueError(f"unknown range mode {range_mode!r}")
        return out_a, out_b

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["kind", "lo", "hi"])
            for k, lo, hi in zip(self.kind.tolist(), self.lo.tolist(), self.hi.tolist()):
                w.writerow(["point" if k == POINT else "range", lo, hi])

    @classmethod
    def from_csv(cls, path: Union[str, Path], name: Optional[str] = None) -> "Workload":
        kind, lo, hi = [], [], []
        with open(path, newline="", encoding="utf-8") as f:
            r = csv.reader(f)
            header = next(r, None)
            if header != ["kind", "lo", "hi"]:
                raise WorkloadError(f"{path}: expected header kind,lo,hi")
            for row in r:
                kind.append(POINT if row[0] == "point" else RANGE)
                lo.append(int(row[1]))
                hi.append(int(row[2]))
        return cls(name or Path(path).stem, np.array(kind), np.array(lo, dtype=np.uint64), np.array(hi, dtype=np.uint64))

    @classmethod
    def concat(cls, name: str, parts: Sequence["Workload"]) -> "Workload":
        return cls(
            name,
            np.concatenate([p.kind for p in parts]),
            np.concatenate([p.lo for p in parts]),
            np.concatenate([p.hi for p in parts]),
        )


def _domain(n: int, idx_min: Optional[int], idx_max: Optional[int]) -> Tuple[int, int]:
    a = 0 if idx_min is None else int(idx_min)
    b = n if idx_max is None else int(idx_max)
    if not 0 <= a < b <= n:
        raise WorkloadError(f"index domain [{a}, {b}) is not a non-empty subset of [0, {n})")
    return a, b


def gen_point_workload(
    dataset: Dataset,
    idx_min: Optional[int] = None,
    idx_max: Optional[int] = None,
    count: int = 10_000,
    seed: int = 0,
) -> Workload:
    """Keys drawn uniformly, with replacement, from ranks [idx_min, idx_max)."""
    a, b = _domain(dataset.n, idx_min, idx_max)
    ranks = np.random.default_rng(seed).integers(a, b, size=count)
    q = dataset.keys[ranks]
    return Workload(f"point[{a},{b})", np.full(count, POINT, np.uint8), q, q)


def gen_normal_point_workload(
    dataset: Dataset,
    mean_key: int,
    sigma: float,
    count: int = 10_000,
    seed: int = 0,
) -> Workload:
    """Point queries at ranks drawn from N(rank(mean_key), sigma), clamped to [0, n)."""
    mu = int(np.searchsorted(dataset.keys, np.uint64(mean_key)))
    r = np.random.default_rng(seed).normal(mu, sigma, size=count)
    ranks = np.clip(np.rint(r), 0, dataset.n - 1).astype(np.int64)
    q = dataset.keys[ranks]
    return Workload(f"normal({mean_key},{sigma:g})", np.full(count, POINT, np.uint8), q, q)


def range_span(n: int, sel: float) -> int:
    return int(round(n * sel))


def gen_range_workload(
    dataset: Dataset,
    sel: float,
    idx_min: Optional[int] = None,
    idx_max: Optional[int] = None,
    count: int = 10_000,
    seed: int = 0,
) -> Workload:
    """Ranges covering exactly ``round(n * sel)`` consecutive ranks.

    The first rank is uniform in [idx_min, idx_max - span); bounds are the keys
    at the first and last covered rank. ``sel == 0`` degenerates to point
    lookups expressed as ranges.
    """
    if not 0.0 <= sel <= 1.0:
        raise WorkloadError("selectivity must lie in [0, 1]")
    a, b = _domain(dataset.n, idx_min, idx_max)
    span = range_span(dataset.n, sel)
    top = b - span if span > 0 else b
    if top <= a:
        raise WorkloadError(f"span {span} does not fit into [{a}, {b})")
    start = np.random.default_rng(seed).integers(a, top, size=count)
    last = start + max(span, 1) - 1
    return Workload(
        f"range{sel:g}[{a},{b})", np.full(count, RANGE, np.uint8), dataset.keys[start], dataset.keys[last]
    )


# ---------------------------------------------------------------------------
# declarative specs
# ---------------------------------------------------------------------------


def _resolve(n: int, idx: Optional[int], frac: Optional[float], default: int) -> int:
    if idx is not None:
        return int(idx)
    if frac is not None:
        return int(round(frac * n))
    return default


@dataclass(frozen=True)
class PointSpec:
    idx_min: Optional[int] = None
    idx_max: Optional[int] = None
    frac_min: Optional[float] = None
    frac_max: Optional[float] = None

    def domain(self, n: int) -> Tuple[int, int]:
        return _resolve(n, self.idx_min, self.frac_min, 0), _resolve(n, self.idx_max, self.frac_max, n)

    def generate(self, dataset: Dataset, count: int, seed: int) -> Workload:
        return gen_point_workload(dataset, *self.domain(dataset.n), count=count, seed=seed)


@dataclass(frozen=True)
class RangeSpec:
    sel: float = 0.001
    idx_min: Optional[int] = None
    idx_max: Optional[int] = None
    frac_min: Optional[float] = None
    frac_max: Optional[float] = None

    def domain(self, n: int) -> Tuple[int, int]:
        return _resolve(n, self.idx_min, self.frac_min, 0), _resolve(n, self.idx_max, self.frac_max, n)

    def generate(self, dataset: Dataset, count: int, seed: int) -> Workload:
        return gen_range_workload(dataset, self.sel, *self.domain(dataset.n), count=count, seed=seed)


@dataclass(frozen=True)
class NormalSpec:
    mean_key: int = 75_000
    sigma: float = 10_000.0

    def generate(self, dataset: Dataset, count: int, seed: int) -> Workload:
        return gen_normal_point_workload(dataset, self.mean_key, self.sigma, count, seed)


PartSpec = Union[PointSpec, RangeSpec, NormalSpec]
_PART_TYPES = {"point": PointSpec, "range": RangeSpec, "normal": NormalSpec}


def _part_to_dict(p: PartSpec) -> Dict[str, Any]:
    kind = {PointSpec: "point", RangeSpec: "range", NormalSpec: "normal"}[type(p)]
    d = {"type": kind}
    d.update({k: v for k, v in p.__dict__.items() if v is not None})
    return d


def _part_from_dict(d: Mapping[str, Any]) -> PartSpec:
    d = dict(d)
    kind = d.pop("type", "point")
    d.pop("proportion", None)
    if kind not in _PART_TYPES:
        raise WorkloadError(f"unknown workload part type {kind!r}")
    try:
        return _PART_TYPES[kind](**d)
    except TypeError as e:
        raise WorkloadError(f"bad {kind} workload part: {e}") from e


def _allocate(count: int, proportions: Sequence[float]) -> List[int]:
    """Largest-remainder split of ``count`` by ``proportions``."""
    p = np.asarray(proportions, dtype=np.float64)
    raw = p * count
    out = np.floor(raw).astype(np.int64)
    rest = count - int(out.sum())
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:rest]] += 1
    return out.tolist()


def gen_mix(
    dataset: Dataset,
    parts: Sequence[PartSpec],
    proportions: Sequence[float],
    count: int = 10_000,
    seed: int = 0,
    name: str = "mix",
) -> Workload:
    """Concatenate the parts in the given proportions and shuffle the result."""
    if len(parts) != len(proportions) or not parts:
        raise WorkloadError("need one proportion per workload part")
    if any(p < 0 for p in proportions) or not math.isclose(sum(proportions), 1.0, abs_tol=1e-9):
        raise WorkloadError("proportions must be non-negative and sum to 1")
    ss = np.random.SeedSequence(seed)
    child_seeds = ss.spawn(len(parts) + 1)
    chunks = []
    for part, c, s in zip(parts, _allocate(count, proportions), child_seeds):
        if c:
            chunks.append(part.generate(dataset, c, int(s.generate_state(1)[0])))
    w = Workload.concat(name, chunks)
    perm = np.random.default_rng(child_seeds[-1]).permutation(len(w))
    return w.permuted(perm)


@dataclass(frozen=True)
class WorkloadSpec:
    """Weighted parts plus total query count and seed; serializable to JSON."""

    parts: Tuple[PartSpec, ...] = (PointSpec(),)
    proportions: Tuple[float, ...] = (1.0,)
    count: int = 10_000
    seed: int = 0
    name: str = "point"

    def build(self, dataset: Dataset) -> Workload:
        if len(self.parts) == 1:
            w = self.parts[0].generate(dataset, self.count, self.seed)
            return Workload(self.name, w.kind, w.lo, w.hi)
        return gen_mix(dataset, self.parts, self.proportions, self.count, self.seed, self.name)

    def with_(self, **changes: Any) -> "WorkloadSpec":
        d = dict(self.__dict__)
        d.update(changes)
        return WorkloadSpec(**d)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "count": self.count,
            "seed": self.seed,
            "parts": [dict(_part_to_dict(p), proportion=w) for p, w in zip(self.parts, self.proportions)],
        }

    @classmethod
    def from_dict(cls, d: Union[str, Mapping[str, Any]]) -> "WorkloadSpec":
        if isinstance(d, str):
            return preset(d)
        d = dict(d)
        if "preset" in d:
            base = preset(d.pop("preset"))
            return base.with_(**{k: d[k] for k in ("count", "seed", "name") if k in d})
        raw = d.get("parts") or [{"type": "point"}]
        parts = tuple(_part_from_dict(p) for p in raw)
        props = tuple(float(p.get("proportion", 1.0 / len(raw))) for p in raw)
        return cls(parts, props, int(d.get("count", 10_000)), int(d.get("seed", 0)), str(d.get("name", "custom")))


def preset(name: str, count: Optional[int] = None, seed: int = 0) -> WorkloadSpec:
    """Named workloads of the experiments.

    ``point``: uniform point lookups; ``range0.001`` / ``range0.01``: ranges;
    ``mix``: 80% point and 20% range0.01; ``normal``: point lookups around key
    75,000 (sigma 10,000); ``poc``: three point partitions split at 10% and
    85% of the data (20/10/50%) and 20% ranges in the middle partition.
    """
    key = name.lower()
    if key == "point":
        spec = WorkloadSpec((PointSpec(),), (1.0,), 10_000, seed, "point")
    elif key.startswith("range"):
        sel = float(key[5:] or 0.001)
        spec = WorkloadSpec((RangeSpec(sel),), (1.0,), 10_000, seed, f"range{sel:g}")
    elif key == "mix":
        spec = WorkloadSpec((PointSpec(), RangeSpec(0.01)), (0.8, 0.2), 10_000, seed, "mix")
    elif key == "normal":
        spec = WorkloadSpec((NormalSpec(),), (1.0,), 10_000, seed, "normal")
    elif key == "poc":
        parts = (
            PointSpec(frac_min=0.0, frac_max=0.1),
            PointSpec(frac_min=0.1, frac_max=0.85),
            PointSpec(frac_min=0.85, frac_max=1.0),
            RangeSpec(0.0001, frac_min=0.1, frac_max=0.85),
        )
        spec = WorkloadSpec(parts, (0.2, 0.1, 0.5, 0.2), 1_000_000, seed, "poc")
    else:
        raise WorkloadError(f"unknown workload preset {name!r}")
    return spec if count is None else spec.with_(count=count)


# ---------------------------------------------------------------------------
# dataset specs
# ---------------------------------------------------------------------------


def dataset_from_spec(spec: Union[str, Mapping[str, Any]], n: Optional[int] = None) -> Dataset:
    """``{"kind": "uni_dense" | "skewed" | "file", "n": ..., "seed": ..., "path": ...}``.

    ``n`` overrides the size in the spec (used when upscaling).
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "uni_dense")
    size = int(n if n is not None else spec.get("n", 100_000))
    seed = int(spec.get("seed", 0))
    if kind == "uni_dense":
        return gen_uni_dense(size)
    if kind == "skewed":
        return gen_skewed(size, seed)
    if kind == "file":
        if "path" not in spec:
            raise DatasetError("file datasets need a path")
        return load_and_sample(spec["path"], size, seed)
    raise DatasetError(f"unknown dataset kind {kind!r}")
