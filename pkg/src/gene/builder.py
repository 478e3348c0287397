"""Index construction: single nodes, randomized bulkloading, rebuilding from configs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import ConfigNode, IndexConfig
from .core import partition_from_dict
from .layouts import DataLayout, SearchMethod, require_compatible, valid_pairs
from .physical import DEFAULT_CAPACITY, BuildError, PhysicalIndex, PhysicalNode, partition_values, pivots_for

log = logging.getLogger(__name__)

Pair = Tuple[DataLayout, SearchMethod]


@dataclass(frozen=True)
class Fixed:
    layout: DataLayout
    search: SearchMethod
    inner_layout: Optional[DataLayout] = None
    inner_search: Optional[SearchMethod] = None

    def __post_init__(self) -> None:
        require_compatible(self.layout, self.search)
        if self.inner_layout is not None:
            require_compatible(self.inner_layout, self.inner_search)

    def leaf_pair(self, rng: np.random.Generator) -> Pair:
        return self.layout, self.search

    def inner_pair(self, rng: np.random.Generator) -> Pair:
        if self.inner_layout is not None:
            return self.inner_layout, self.inner_search
        if self.layout == DataLayout.HASH:
            raise BuildError("inner nodes cannot use the hash layout; give inner_layout")
        return self.layout, self.search


@dataclass(frozen=True)
class Random:
    """Uniform draw over the valid pairs; inner nodes exclude the hash layout."""

    seed: Optional[int] = None

    def leaf_pair(self, rng: np.random.Generator) -> Pair:
        pairs = valid_pairs()
        return pairs[int(rng.integers(len(pairs)))]

    def inner_pair(self, rng: np.random.Generator) -> Pair:
        pairs = valid_pairs(routing=True)
        return pairs[int(rng.integers(len(pairs)))]


PhysicalChoice = Union[Fixed, Random]


@dataclass(frozen=True)
class BulkloadSpec:
    leaf_count: int = 100
    leaf_fill: int = 1000
    fanout: int = 10
    physical: PhysicalChoice = Random()

    def __post_init__(self) -> None:
        if self.leaf_count < 1 or self.leaf_fill < 1:
            raise ValueError("leaf_count and leaf_fill must be positive")
        if self.fanout < 2:
            raise ValueError("fanout must be at least 2")


BTREE_BASELINE = BulkloadSpec(100, 1000, 10, Fixed(DataLayout.SORTED_COL, SearchMethod.BINS))


def as_dataset(keys, payloads=None) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted, read-only (keys, payloads); payload defaults to the key's rank."""
    keys = np.asarray(getattr(keys, "keys", keys), dtype=np.uint64)
    rank_payloads = payloads is None
    if rank_payloads:
        payloads = np.zeros(len(keys), dtype=np.int64)
    payloads = np.asarray(payloads, dtype=np.int64)
    if len(keys) > 1 and not np.all(keys[1:] > keys[:-1]):
        order = np.argsort(keys, kind="stable")
        keys, payloads = keys[order], payloads[order]
        if np.any(keys[1:] == keys[:-1]):
            raise BuildError("dataset keys must be unique")
    if rank_payloads:
        payloads = np.arange(len(keys), dtype=np.int64)
    keys = np.array(keys, copy=True)
    payloads = np.array(payloads, copy=True)
    keys.setflags(write=False)
    payloads.setflags(write=False)
    return keys, payloads


def build_single_node(
    keys,
    layout: DataLayout,
    search: SearchMethod,
    payloads=None,
    capacity: int = DEFAULT_CAPACITY,
) -> PhysicalIndex:
    keys, payloads = as_dataset(keys, payloads)
    if len(keys) > capacity:
        raise BuildError(f"{len(keys)} tuples exceed the node capacity {capacity}")
    return PhysicalIndex(PhysicalNode.leaf(keys, payloads, layout, search), capacity)


def _chunks(n: int, parts: int) -> List[Tuple[int, int]]:
    """``parts`` contiguous, near-equal [start, stop) ranges over n items."""
    bounds = [(i * n) // parts for i in range(parts + 1)]
    return list(zip(bounds[:-1], bounds[1:]))


def bulkload_btree(
    keys,
    spec: BulkloadSpec,
    rng: Optional[np.random.Generator] = None,
    payloads=None,
    capacity: int = DEFAULT_CAPACITY,
) -> PhysicalIndex:
    """Bottom-up bulkload: equal leaves, then groups of ``fanout`` until one root remains."""
    keys, payloads = as_dataset(keys, payloads)
    n = len(keys)
    if rng is None:
        seed = spec.physical.seed if isinstance(spec.physical, Random) else 0
        rng = np.random.default_rng(seed)
    if spec.leaf_count * spec.leaf_fill < n:
        raise BuildError(f"{spec.leaf_count} leaves x {spec.leaf_fill} cannot hold {n} tuples")
    leaves = max(1, min(spec.leaf_count, n)) if n else 1
    level: List[PhysicalNode] = []
    for a, b in _chunks(n, leaves):
        lay, se = spec.physical.leaf_pair(rng)
        level.append(PhysicalNode.leaf(keys[a:b], payloads[a:b], lay, se))
    while len(level) > 1:
        groups = math.ceil(len(level) / spec.fanout)
        nxt = []
        for a, b in _chunks(len(level), groups):
            lay, se = spec.physical.inner_pair(rng)
            nxt.append(PhysicalNode.inner(level[a:b], lay, se))
        level = nxt
    return PhysicalIndex(level[0], capacity)


bulkload_btree_random = bulkload_btree


def init_population(
    keys,
    s_init: int,
    rng_or_seed: Union[np.random.Generator, int, None] = 0,
    spec: Optional[BulkloadSpec] = None,
    payloads=None,
    capacity: int = DEFAULT_CAPACITY,
) -> List[PhysicalIndex]:
    """``s_init`` randomized bulkloads, each with its own seed derived from one master seed."""
    if s_init < 1:
        raise ValueError("s_init must be at least 1")
    keys, payloads = as_dataset(keys, payloads)
    if isinstance(rng_or_seed, np.random.Generator):
        seeds = [int(s) for s in rng_or_seed.integers(0, 2**63 - 1, s_init)]
        children = [np.random.SeedSequence(s) for s in seeds]
    else:
        children = np.random.SeedSequence(rng_or_seed).spawn(s_init)
    spec = spec or default_spec(len(keys))
    return [bulkload_btree(keys, spec, np.random.default_rng(ss), payloads, capacity) for ss in children]


def default_spec(n: int, physical: PhysicalChoice = Random()) -> BulkloadSpec:
    """100 equally filled leaves with fanout 10, shrunk for tiny datasets."""
    leaves = max(1, min(100, n))
    return BulkloadSpec(leaves, max(1, math.ceil(n / leaves)), 10, physical)


# ---------------------------------------------------------------------------
# rebuilding from a configuration
# ---------------------------------------------------------------------------


def _split_by_fill(n: int, weights: Sequence[int]) -> List[Tuple[int, int]]:
    """Rank-proportional split of n items; exact when n equals the total weight."""
    total = sum(weights)
    if total == 0:
        return _chunks(n, len(weights))
    cum = 0
    bounds = [0]
    for w in weights:
        cum += w
        bounds.append((cum * n + total // 2) // total if cum < total else n)
    return list(zip(bounds[:-1], bounds[1:]))


def _build_node(cfg: ConfigNode, keys: np.ndarray, vals: np.ndarray) -> PhysicalNode:
    if cfg.is_leaf:
        return PhysicalNode.leaf(keys, vals, DataLayout.parse(cfg.dt[0]), SearchMethod.parse(cfg.dt[1]))
    ri_layout = DataLayout.parse(cfg.ri[0])
    ri_search = SearchMethod.parse(cfg.ri[1])
    if cfg.routing["kind"] == "pivots":
        parts = _split_by_fill(len(keys), [c.total_fill for c in cfg.children])
        children = []
        for c, (a, b) in zip(cfg.children, parts):
            if a == b:
                raise BuildError("dataset too small for this configuration: a key range would be empty")
            children.append(_build_node(c, keys[a:b], vals[a:b]))
        return PhysicalNode.inner(children, ri_layout, ri_search, pivots_for(children))
    p = partition_from_dict(cfg.routing)
    slots = np.asarray(cfg.routing["slots"], dtype=np.int64)
    target = slots[partition_values(p, keys)] if len(keys) else np.zeros(0, dtype=np.int64)
    if np.any(target < 0):
        raise BuildError("function routing sends keys to an empty slot")
    children = []
    for i, c in enumerate(cfg.children):
        sel = np.flatnonzero(target == i)
        children.append(_build_node(c, keys[sel], vals[sel]))
    return PhysicalNode(
        partition=p, children=tuple(children), ri_layout=ri_layout, ri_search=ri_search,
        slots=tuple(int(s) for s in slots),
    )


def build_from_config(config: IndexConfig, keys, payloads=None) -> PhysicalIndex:
    """Distribute a dataset over a configuration's topology.

    Pivot-routed subtrees receive contiguous key ranges proportional to their
    original fill, so rebuilding on the origin dataset reproduces the original
    index and larger datasets scale every leaf by the same factor. Leaves that
    outgrow the configured capacity raise the index capacity.
    """
    config.root.validate()
    keys, payloads = as_dataset(keys, payloads)
    root = _build_node(config.root, keys, payloads)
    largest = max(n.entry_count for n in PhysicalIndex(root, 2**62, validate=False).nodes())
    capacity = max(config.capacity, largest)
    if capacity > config.capacity:
        log.info("raising node capacity from %d to %d for %d tuples", config.capacity, capacity, len(keys))
    return PhysicalIndex(root, capacity)


# ---------------------------------------------------------------------------
# hand-written configurations
# ---------------------------------------------------------------------------


def btree_config(n: int, spec: BulkloadSpec = BTREE_BASELINE) -> IndexConfig:
    """Configuration of the uniform B-tree baseline for n tuples."""
    keys = np.arange(n, dtype=np.uint64)
    return IndexConfig.from_index(bulkload_btree(keys, spec))


def poc_hand_spec(n: int, leaf_fill: int = 1000, fanout: int = 10) -> IndexConfig:
    """Three partitions at 10% / 85% of the data: hash | B-tree | hash, under a sorted binary-search root."""
    a, b = round(0.10 * n), round(0.85 * n)
    keys = np.arange(n, dtype=np.uint64)
    vals = np.arange(n, dtype=np.int64)
    left = PhysicalNode.leaf(keys[:a], vals[:a], DataLayout.HASH, SearchMethod.HASHS)
    mid_n = b - a
    leaves = max(1, math.ceil(mid_n / leaf_fill))
    mid_spec = BulkloadSpec(leaves, math.ceil(mid_n / leaves), fanout, Fixed(DataLayout.SORTED_COL, SearchMethod.BINS))
    middle = bulkload_btree(keys[a:b], mid_spec, payloads=vals[a:b]).root
    right = PhysicalNode.leaf(keys[b:], vals[b:], DataLayout.HASH, SearchMethod.HASHS)
    root = PhysicalNode.inner([left, middle, right], DataLayout.SORTED_COL, SearchMethod.BINS)
    return IndexConfig.from_index(PhysicalIndex(root, max(DEFAULT_CAPACITY, a, n - b)))
