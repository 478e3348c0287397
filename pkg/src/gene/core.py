"""Logical indexing model: nodes, routing, recursive range queries and correctness checks.

A logical index is nothing more than a graph of nodes. Each node carries an
optional partitioning function, optional routing information mapping partition
values to child node ids, and a (possibly empty) set of data tuples.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np

KEY_MAX = (1 << 64) - 1


class StructuralError(ValueError):
    """Raised when an index references node ids it does not contain."""


class Record(NamedTuple):
    """A (key, payload) tuple; payload is the key's rank in the sorted dataset."""

    key: int
    payload: int


# ---------------------------------------------------------------------------
# partitioning functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RangePivots:
    """Identity partitioning whose domain is cut into k+1 half-open key ranges.

    ``(-inf, p1), [p1, p2), ..., [pk, +inf)``; the partition value is the range index.
    """

    pivots: np.ndarray

    def __post_init__(self) -> None:
        piv = np.ascontiguousarray(np.asarray(self.pivots, dtype=np.uint64))
        if piv.ndim != 1:
            raise ValueError("pivots must be one-dimensional")
        if len(piv) > 1 and not np.all(piv[1:] > piv[:-1]):
            raise ValueError("pivots must be strictly increasing")
        piv.setflags(write=False)
        object.__setattr__(self, "pivots", piv)

    @property
    def domain_size(self) -> int:
        return len(self.pivots) + 1

    def __call__(self, key: int) -> int:
        return int(np.searchsorted(self.pivots, np.uint64(key), side="right"))

    def value_range(self, lo: int, hi: int) -> range:
        return range(self(lo), self(hi) + 1)

    @property
    def monotone(self) -> bool:
        return True

    def describe(self) -> dict:
        return {"kind": "pivots", "pivots": [int(p) for p in self.pivots]}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RangePivots) and np.array_equal(self.pivots, other.pivots)

    def __hash__(self) -> int:
        return hash(("pivots", self.pivots.tobytes()))


@dataclass(frozen=True)
class LinearModel:
    """``bin = clamp(floor(slope * key + intercept), 0, bins - 1)``."""

    slope: float
    intercept: float
    bins: int

    def __post_init__(self) -> None:
        if self.bins < 1:
            raise ValueError("LinearModel needs at least one bin")

    @property
    def domain_size(self) -> int:
        return self.bins

    def __call__(self, key: int) -> int:
        v = self.slope * float(key) + self.intercept
        if not v > 0:
            return 0
        if v >= self.bins:
            return self.bins - 1
        return min(int(math.floor(v)), self.bins - 1)

    @property
    def monotone(self) -> bool:
        return self.slope >= 0

    def value_range(self, lo: int, hi: int) -> range:
        if self.monotone:
            return range(self(lo), self(hi) + 1)
        return range(self.bins)

    def describe(self) -> dict:
        return {"kind": "linear", "slope": self.slope, "intercept": self.intercept, "bins": self.bins}


@dataclass(frozen=True)
class BitSuffix:
    """Lowest ``width`` bits of the key, as in an extendible-hashing directory."""

    width: int

    def __post_init__(self) -> None:
        if not 1 <= self.width <= 64:
            raise ValueError("bit width must lie in [1, 64]")

    @property
    def domain_size(self) -> int:
        return 1 << self.width

    def __call__(self, key: int) -> int:
        return int(key) & ((1 << self.width) - 1)

    @property
    def monotone(self) -> bool:
        return self.width == 64

    def value_range(self, lo: int, hi: int) -> range:
        # not order preserving: a range query can prune nothing
        if self.monotone:
            return range(lo, hi + 1)
        return range(self.domain_size)

    def describe(self) -> dict:
        return {"kind": "bit_suffix", "width": self.width}


@dataclass(frozen=True)
class BitPrefix:
    """``width`` bits starting ``start`` bits below the most significant bit of a 64-bit key."""

    start: int
    width: int

    def __post_init__(self) -> None:
        if not 1 <= self.width <= 64:
            raise ValueError("bit width must lie in [1, 64]")
        if self.start < 0 or self.start + self.width > 64:
            raise ValueError("prefix window exceeds 64 bits")

    @property
    def domain_size(self) -> int:
        return 1 << self.width

    @property
    def shift(self) -> int:
        return 64 - self.start - self.width

    def __call__(self, key: int) -> int:
        return (int(key) >> self.shift) & ((1 << self.width) - 1)

    @property
    def monotone(self) -> bool:
        return self.start == 0

    def value_range(self, lo: int, hi: int) -> range:
        if self.monotone:
            return range(self(lo), self(hi) + 1)
        return range(self.domain_size)

    def describe(self) -> dict:
        return {"kind": "bit_prefix", "start": self.start, "width": self.width}


PartitioningFunction = Union[RangePivots, LinearModel, BitSuffix, BitPrefix]


def apply_partition(p: PartitioningFunction, key: int) -> int:
    """Map ``key`` to its partition-domain value. Total and deterministic."""
    return p(key)


def partition_from_dict(d: Mapping) -> PartitioningFunction:
    kind = d["kind"]
    if kind == "pivots":
        return RangePivots(np.array(d["pivots"], dtype=np.uint64))
    if kind == "linear":
        return LinearModel(float(d["slope"]), float(d["intercept"]), int(d["bins"]))
    if kind == "bit_suffix":
        return BitSuffix(int(d["width"]))
    if kind == "bit_prefix":
        return BitPrefix(int(d["start"]), int(d["width"]))
    raise ValueError(f"unknown partitioning function {kind!r}")


# ---------------------------------------------------------------------------
# nodes and indexes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoutingInformation:
    """Partition value -> set of node ids. Missing values map to the empty set."""

    entries: Mapping[int, FrozenSet[int]] = field(default_factory=dict)

    def __call__(self, value: int) -> FrozenSet[int]:
        return self.entries.get(value, frozenset())

    def nodes(self) -> Set[int]:
        out: Set[int] = set()
        for targets in self.entries.values():
            out |= targets
        return out

    @classmethod
    def of(cls, mapping: Mapping[int, Iterable[int]]) -> "RoutingInformation":
        return cls({int(k): frozenset(v) for k, v in mapping.items() if v})


@dataclass(frozen=True)
class LogicalNode:
    id: int
    p: Optional[PartitioningFunction] = None
    ri: Optional[RoutingInformation] = None
    dt: FrozenSet[Record] = frozenset()

    def __post_init__(self) -> None:
        if self.ri is not None and self.ri.entries and self.p is None:
            raise ValueError(f"node {self.id}: routing information requires a partitioning function")
        if self.ri is not None and self.ri.entries and self.dt:
            raise ValueError(f"node {self.id}: internal nodes carry no data")

    def children(self) -> Set[int]:
        return self.ri.nodes() if self.ri is not None else set()


@dataclass(frozen=True)
class LogicalIndex:
    nodes: Mapping[int, LogicalNode]
    start_nodes: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.start_nodes:
            raise ValueError("a logical index needs at least one start node")

    @classmethod
    def from_nodes(cls, nodes: Iterable[LogicalNode], start_nodes: Sequence[int]) -> "LogicalIndex":
        return cls({n.id: n for n in nodes}, tuple(start_nodes))

    def data(self) -> Set[Record]:
        out: Set[Record] = set()
        for n in self.nodes.values():
            out |= n.dt
        return out

    def without(self, node_id: int) -> "LogicalIndex":
        nodes = {k: v for k, v in self.nodes.items() if k != node_id}
        return LogicalIndex(nodes, tuple(s for s in self.start_nodes if s != node_id) or self.start_nodes)

    def is_dag(self) -> bool:
        state: Dict[int, int] = {}
        for s in self.start_nodes:
            stack: List[Tuple[int, bool]] = [(s, False)]
            while stack:
                nid, done = stack.pop()
                if done:
                    state[nid] = 2
                    continue
                if state.get(nid) == 2:
                    continue
                if state.get(nid) == 1:
                    return False
                state[nid] = 1
                stack.append((nid, True))
                node = self.nodes.get(nid)
                if node is None:
                    continue
                for c in node.children():
                    if state.get(c) == 1:
                        return False
                    if state.get(c) != 2:
                        stack.append((c, False))
        return True


def check_complete(index: LogicalIndex) -> bool:
    """True iff every routing target is a member of the node set."""
    ids = index.nodes.keys()
    return all(n.children() <= ids for n in index.nodes.values())


def _routed_children(node: LogicalNode, l: int, h: int) -> Set[int]:
    if node.ri is None or not node.ri.entries:
        return set()
    out: Set[int] = set()
    values = node.p.value_range(l, h)
    if len(values) > len(node.ri.entries):
        for v, targets in node.ri.entries.items():
            if v in values:
                out |= targets
    else:
        for v in values:
            out |= node.ri(v)
    return out


def range_query(index: LogicalIndex, start: Iterable[int], l: int, h: int) -> Set[Record]:
    """Recursive range query over the index graph, visiting each node at most once."""
    if l > h:
        raise ValueError("range query needs l <= h")
    result: Set[Record] = set()
    seen: Set[int] = set()
    stack = list(start)
    if not stack:
        raise ValueError("range query needs a non-empty start set")
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        node = index.nodes.get(nid)
        if node is None:
            raise StructuralError(f"unknown node id {nid}")
        seen.add(nid)
        for t in node.dt:
            if l <= t.key <= h:
                result.add(t)
        stack.extend(c for c in _routed_children(node, l, h) if c not in seen)
    return result


@dataclass(frozen=True)
class CorrectnessResult:
    ok: bool
    counterexample: Optional[Tuple[int, int]] = None
    pairs_checked: int = 0

    def __bool__(self) -> bool:
        return self.ok


def query_grid(keys: Sequence[int]) -> List[int]:
    """Distinct keys plus one sentinel below the minimum and one above the maximum."""
    ks = sorted(set(int(k) for k in keys))
    if not ks:
        return [0]
    grid = list(ks)
    if ks[0] > 0:
        grid.insert(0, ks[0] - 1)
    if ks[-1] < KEY_MAX:
        grid.append(ks[-1] + 1)
    return grid


def check_correct(index: LogicalIndex, dataset: Optional[Iterable[Record]] = None) -> CorrectnessResult:
    """Compare the recursive range query against a brute-force filter on the full (l, h) grid.

    Query results only change at stored keys, so the grid of distinct keys plus
    two sentinels stands in for all (l, h).
    """
    data = set(dataset) if dataset is not None else index.data()
    if not check_complete(index):
        return CorrectnessResult(False, None, 0)
    ordered = sorted(data)
    keys = [t.key for t in ordered]
    grid = query_grid(keys)
    pairs = 0
    for i, l in enumerate(grid):
        lo = bisect.bisect_left(keys, l)
        for h in grid[i:]:
            hi = bisect.bisect_right(keys, h)
            expected = set(ordered[lo:hi])
            pairs += 1
            if range_query(index, index.start_nodes, l, h) != expected:
                return CorrectnessResult(False, (l, h), pairs)
    return CorrectnessResult(True, None, pairs)


# the running example relation R = {(2,A),(7,B),(1,B),(6,C),(12,Z),(11,C)} with payload = rank
RUNNING_EXAMPLE_KEYS = (2, 7, 1, 6, 12, 11)


def running_example() -> List[Record]:
    return [Record(k, r) for r, k in enumerate(sorted(RUNNING_EXAMPLE_KEYS))]
