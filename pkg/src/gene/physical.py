"""Physical nodes and indexes: layout/search choices on top of the logical model.

A ``PhysicalNode`` is immutable. Inner nodes carry a partitioning function and
children; leaves carry sorted keys and payloads. The active part of a node (RI
for inner nodes, DT for leaves) has a (layout, search) pair, the inactive part
has ``None``. Mutations rebuild only the path they touch, every other subtree
is shared by reference.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels as K
from .core import (
    BitPrefix,
    BitSuffix,
    CorrectnessResult,
    LinearModel,
    LogicalIndex,
    LogicalNode,
    PartitioningFunction,
    RangePivots,
    Record,
    RoutingInformation,
    query_grid,
)
from .layouts import DataLayout, SearchMethod, require_compatible

DEFAULT_CAPACITY = 100_000

_EMPTY_KEYS = np.zeros(0, dtype=np.uint64)
_EMPTY_VALS = np.zeros(0, dtype=np.int64)
_EMPTY_KEYS.setflags(write=False)
_EMPTY_VALS.setflags(write=False)


class BuildError(ValueError):
    """An index that cannot be constructed (capacity, routing, shape)."""


@dataclass(frozen=True)
class LinRegModel:
    slope: float
    intercept: float
    lower: int
    upper: int

    def predict(self, key: int, n: int) -> int:
        return int(K.linreg_predict(self.slope, self.intercept, n, np.uint64(key)))

    def window(self, key: int, n: int) -> Tuple[int, int]:
        p = self.predict(key, n)
        return max(0, p - self.lower), min(n, p + self.upper + 1)


def fit_linreg(keys: np.ndarray) -> LinRegModel:
    """Least-squares fit of position over key with error bounds covering every stored key."""
    arr = np.ascontiguousarray(keys, dtype=np.uint64)
    slope, icpt, lo, hi = K.fit_linreg(arr)
    return LinRegModel(float(slope), float(icpt), int(lo), int(hi))


def lower_bound(
    keys: np.ndarray,
    key: int,
    method: SearchMethod,
    layout: DataLayout = DataLayout.SORTED_COL,
) -> Optional[int]:
    """First position with ``keys[pos] >= key`` in a sorted view.

    For ``HashS`` on a hash layout the result is the exact-match position in
    ``keys`` or ``None``.
    """
    method = SearchMethod(method)
    layout = DataLayout(layout)
    require_compatible(layout, method)
    arr = np.ascontiguousarray(keys, dtype=np.uint64)
    q = np.uint64(key)
    n = len(arr)
    if layout == DataLayout.HASH:
        table, overflow, bits = K.build_hash(arr, np.arange(n, dtype=np.int64))
        pos, _ = K.hash_find(table, overflow, 0, 0, bits, q)
        return None if pos < 0 else int(pos)
    if layout == DataLayout.TREE:
        tnodes, root = K.build_tree(arr)
        return int(K.tree_lb(tnodes, 0, root, n, q)[0])
    if method == SearchMethod.SCAN:
        return int(K.scan_lb(arr, 0, n, q)[0])
    if method == SearchMethod.BINS:
        return int(K.bins_lb(arr, 0, n, q)[0])
    if method == SearchMethod.INTS:
        return int(K.ints_lb(arr, 0, n, q)[0])
    if method == SearchMethod.EXPS:
        return int(K.exps_lb(arr, 0, n, q)[0])
    m = fit_linreg(arr)
    return int(K.linreg_lb(arr, 0, n, q, m.slope, m.intercept, m.lower, m.upper)[0])


# ---------------------------------------------------------------------------
# structural digest shared with IndexConfig
# ---------------------------------------------------------------------------


def _pair(layout: Optional[DataLayout], search: Optional[SearchMethod]) -> Optional[Dict[str, str]]:
    if layout is None:
        return None
    return {"layout": DataLayout(layout).label, "search": SearchMethod(search).label}


def local_descriptor(
    routing: Optional[dict],
    ri: Optional[Dict[str, str]],
    dt: Optional[Dict[str, str]],
    fill: int,
) -> bytes:
    doc = {"routing": routing, "ri": ri, "dt": dt, "fill": fill}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def merkle_digest(local: bytes, child_digests: Sequence[bytes]) -> bytes:
    h = hashlib.blake2b(digest_size=8)
    h.update(local)
    h.update(len(child_digests).to_bytes(4, "little"))
    for d in child_digests:
        h.update(d)
    return h.digest()


def routing_descriptor(p: PartitioningFunction, slots: Optional[Tuple[int, ...]]) -> dict:
    d = p.describe()
    if slots is not None:
        d["slots"] = list(slots)
    return d


# ---------------------------------------------------------------------------
# nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PhysicalNode:
    """One node of a physical index.

    ``slots`` is only used by function-routed nodes (linear, bit routing): it
    maps every partition value to a child position or -1.
    """

    partition: Optional[PartitioningFunction] = None
    children: Tuple["PhysicalNode", ...] = ()
    keys: np.ndarray = field(default_factory=lambda: _EMPTY_KEYS)
    payloads: np.ndarray = field(default_factory=lambda: _EMPTY_VALS)
    ri_layout: Optional[DataLayout] = None
    ri_search: Optional[SearchMethod] = None
    dt_layout: Optional[DataLayout] = None
    dt_search: Optional[SearchMethod] = None
    slots: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        keys = np.ascontiguousarray(self.keys, dtype=np.uint64)
        vals = np.ascontiguousarray(self.payloads, dtype=np.int64)
        if keys.flags.writeable:
            keys = keys.copy() if keys is self.keys else keys
            keys.setflags(write=False)
        if vals.flags.writeable:
            vals = vals.copy() if vals is self.payloads else vals
            vals.setflags(write=False)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "payloads", vals)
        object.__setattr__(self, "children", tuple(self.children))
        if len(keys) != len(vals):
            raise BuildError("keys and payloads differ in length")
        if self.is_leaf:
            if self.partition is not None:
                raise BuildError("a leaf has no partitioning function")
            if self.dt_layout is None or self.ri_layout is not None:
                raise BuildError("a leaf needs a DT layout and no RI layout")
            object.__setattr__(self, "dt_layout", DataLayout(self.dt_layout))
            object.__setattr__(self, "dt_search", SearchMethod(self.dt_search))
            require_compatible(self.dt_layout, self.dt_search)
            if len(keys) > 1 and not np.all(keys[1:] > keys[:-1]):
                raise BuildError("leaf keys must be strictly increasing")
        else:
            if self.partition is None:
                raise BuildError("an inner node needs a partitioning function")
            if len(keys):
                raise BuildError("inner nodes carry no data")
            if self.ri_layout is None or self.dt_layout is not None:
                raise BuildError("an inner node needs an RI layout and no DT layout")
            object.__setattr__(self, "ri_layout", DataLayout(self.ri_layout))
            object.__setattr__(self, "ri_search", SearchMethod(self.ri_search))
            require_compatible(self.ri_layout, self.ri_search)
            if self.ri_layout == DataLayout.HASH:
                raise BuildError("nodes with children cannot use the hash layout")
            if isinstance(self.partition, RangePivots):
                if self.slots is not None:
                    raise BuildError("pivot routing uses positional slots")
                if len(self.children) != len(self.partition.pivots) + 1:
                    raise BuildError("pivot node needs exactly one child per key range")
            else:
                if self.slots is None or len(self.slots) != self.partition.domain_size:
                    raise BuildError("function routing needs one slot per partition value")
                if any(s < -1 or s >= len(self.children) for s in self.slots):
                    raise BuildError("slot refers to a missing child")
                object.__setattr__(self, "slots", tuple(int(s) for s in self.slots))

    # -- shape ---------------------------------------------------------------

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_pivot_node(self) -> bool:
        return isinstance(self.partition, RangePivots)

    @property
    def entry_count(self) -> int:
        """Stored tuples for a leaf, child partitions for an inner node."""
        return len(self.keys) if self.is_leaf else len(self.children)

    @property
    def layout(self) -> DataLayout:
        return self.dt_layout if self.is_leaf else self.ri_layout

    @property
    def search(self) -> SearchMethod:
        return self.dt_search if self.is_leaf else self.ri_search

    @property
    def pivots(self) -> np.ndarray:
        if isinstance(self.partition, RangePivots):
            return self.partition.pivots
        return _EMPTY_KEYS

    @cached_property
    def size(self) -> int:
        if self.is_leaf:
            return len(self.keys)
        return sum(c.size for c in self.children)

    @cached_property
    def node_count(self) -> int:
        return 1 + sum(c.node_count for c in self.children)

    @cached_property
    def min_key(self) -> Optional[int]:
        if self.is_leaf:
            return int(self.keys[0]) if len(self.keys) else None
        vals = [c.min_key for c in self.children if c.min_key is not None]
        return min(vals) if vals else None

    @cached_property
    def max_key(self) -> Optional[int]:
        if self.is_leaf:
            return int(self.keys[-1]) if len(self.keys) else None
        vals = [c.max_key for c in self.children if c.max_key is not None]
        return max(vals) if vals else None

    # -- derived physical structures ----------------------------------------

    @property
    def region(self) -> np.ndarray:
        """The ordered keys a search inside this node operates on."""
        return self.keys if self.is_leaf else self.pivots

    @cached_property
    def linreg(self) -> LinRegModel:
        return fit_linreg(self.region)

    @cached_property
    def tree(self) -> Tuple[np.ndarray, int]:
        tnodes, root = K.build_tree(np.ascontiguousarray(self.region))
        return tnodes, int(root)

    @cached_property
    def hash_table(self) -> Tuple[np.ndarray, np.ndarray, int]:
        return K.build_hash(self.keys, self.payloads)

    @cached_property
    def routing_descriptor(self) -> Optional[dict]:
        if self.partition is None:
            return None
        return routing_descriptor(self.partition, self.slots)

    @cached_property
    def digest(self) -> bytes:
        local = local_descriptor(
            self.routing_descriptor,
            _pair(self.ri_layout, self.ri_search),
            _pair(self.dt_layout, self.dt_search),
            len(self.keys) if self.is_leaf else 0,
        )
        return merkle_digest(local, [c.digest for c in self.children])

    # -- construction helpers -----------------------------------------------

    @classmethod
    def leaf(cls, keys, payloads, layout: DataLayout, search: SearchMethod) -> "PhysicalNode":
        return cls(keys=keys, payloads=payloads, dt_layout=layout, dt_search=search)

    @classmethod
    def inner(
        cls,
        children: Sequence["PhysicalNode"],
        layout: DataLayout,
        search: SearchMethod,
        pivots: Optional[np.ndarray] = None,
    ) -> "PhysicalNode":
        """Pivot-routed inner node; pivots default to the smallest key right of each boundary."""
        children = tuple(children)
        if pivots is None:
            pivots = pivots_for(children)
        return cls(partition=RangePivots(pivots), children=children, ri_layout=layout, ri_search=search)

    def replace(self, **changes) -> "PhysicalNode":
        d = dict(
            partition=self.partition,
            children=self.children,
            keys=self.keys,
            payloads=self.payloads,
            ri_layout=self.ri_layout,
            ri_search=self.ri_search,
            dt_layout=self.dt_layout,
            dt_search=self.dt_search,
            slots=self.slots,
        )
        d.update(changes)
        return PhysicalNode(**d)


def pivots_for(children: Sequence[PhysicalNode]) -> np.ndarray:
    """Boundary keys between consecutive children: the first key of each right sibling."""
    out = []
    for c in children[1:]:
        if c.min_key is None:
            raise BuildError("cannot derive a pivot for an empty child")
        out.append(c.min_key)
    return np.array(out, dtype=np.uint64)


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QueryStats:
    visits: int
    comparisons: int
    probes: int

    def cost(self, w_visit: float = 10.0, w_cmp: float = 1.0, w_probe: float = 4.0) -> float:
        return w_visit * self.visits + w_cmp * self.comparisons + w_probe * self.probes


class PhysicalIndex:
    """An immutable physical index rooted at a single start node (id 0)."""

    def __init__(self, root: PhysicalNode, capacity: int = DEFAULT_CAPACITY, *, validate: bool = True) -> None:
        self.root = root
        self.capacity = int(capacity)
        if validate:
            self._validate()

    # -- structure -----------------------------------------------------------

    def nodes(self) -> List[PhysicalNode]:
        """All nodes in pre-order; a node's position is its id."""
        out: List[PhysicalNode] = []
        stack = [self.root]
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(reversed(n.children))
        return out

    def iter_with_parents(self) -> Iterator[Tuple[int, PhysicalNode, int, int]]:
        """Yield (id, node, parent id, position in parent); root has parent -1."""
        stack: List[Tuple[PhysicalNode, int, int]] = [(self.root, -1, -1)]
        nid = 0
        while stack:
            n, parent, pos = stack.pop()
            yield nid, n, parent, pos
            me = nid
            nid += 1
            for i in range(len(n.children) - 1, -1, -1):
                stack.append((n.children[i], me, i))

    @property
    def node_count(self) -> int:
        return self.root.node_count

    @property
    def size(self) -> int:
        return self.root.size

    @property
    def start_nodes(self) -> Tuple[int, ...]:
        return (0,)

    @cached_property
    def structural_hash(self) -> int:
        return int.from_bytes(self.root.digest, "little")

    @property
    def monotone(self) -> bool:
        return all(n.partition is None or n.partition.monotone for n in self.nodes())

    def _validate(self) -> None:
        for n in self.nodes():
            if n.entry_count > self.capacity:
                raise BuildError(f"node holds {n.entry_count} entries, capacity is {self.capacity}")
            if n.is_leaf:
                continue
            if n.is_pivot_node:
                piv = n.pivots
                for i, c in enumerate(n.children):
                    if c.min_key is None:
                        continue
                    if i > 0 and c.min_key < int(piv[i - 1]):
                        raise BuildError("child holds keys below its left pivot")
                    if i < len(piv) and c.max_key >= int(piv[i]):
                        raise BuildError("child holds keys at or above its right pivot")
            else:
                for i, c in enumerate(n.children):
                    ks = _subtree_keys(c)
                    if not len(ks):
                        continue
                    parts = _partition_values(n.partition, ks)
                    slots = np.asarray(n.slots, dtype=np.int64)[parts]
                    if np.any(slots != i):
                        raise BuildError("function routing sends a child's key elsewhere")
                if n.partition.monotone:
                    used = [s for s in n.slots if s >= 0]
                    if any(b < a for a, b in zip(used, used[1:])):
                        raise BuildError("order-preserving routing must map slots to children in key order")

    # -- data ----------------------------------------------------------------

    @cached_property
    def sorted_data(self) -> Tuple[np.ndarray, np.ndarray]:
        """All stored (keys, payloads) in key order."""
        ks, vs = [], []
        for n in self.nodes():
            if n.is_leaf and len(n.keys):
                ks.append(n.keys)
                vs.append(n.payloads)
        if not ks:
            return _EMPTY_KEYS, _EMPTY_VALS
        keys = np.concatenate(ks)
        vals = np.concatenate(vs)
        if self.monotone:
            if len(keys) > 1 and not np.all(keys[1:] > keys[:-1]):
                order = np.argsort(keys, kind="stable")
                keys, vals = keys[order], vals[order]
        else:
            order = np.argsort(keys, kind="stable")
            keys, vals = keys[order], vals[order]
        return keys, vals

    # -- execution -----------------------------------------------------------

    @cached_property
    def flat(self) -> K.FlatIndex:
        return flatten(self)

    def _stacks(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.node_count
        return np.empty(n + 1, np.int64), np.empty(2 * n + 2, np.int64), np.empty(2 * n + 2, np.int64)

    def execute_point(self, key: int) -> Optional[int]:
        st = np.zeros(3, dtype=np.int64)
        v = K.point_query(*self.flat, np.uint64(key), st)
        return None if v < 0 else int(v)

    def execute_range(self, l: int, h: int) -> List[Record]:
        if l > h:
            raise ValueError("range query needs l <= h")
        n = self.size
        out_k = np.empty(n, dtype=np.uint64)
        out_v = np.empty(n, dtype=np.int64)
        stack = self._stacks()[0]
        m = K.range_collect(*self.flat, np.uint64(l), np.uint64(h), out_k, out_v, stack, np.zeros(3, np.int64))
        order = np.argsort(out_k[:m], kind="stable")
        return [Record(int(k), int(v)) for k, v in zip(out_k[:m][order], out_v[:m][order])]

    def range_count(self, l: int, h: int) -> Tuple[int, int]:
        """(count, payload sum) of the tuples in [l, h]."""
        st = np.zeros(3, dtype=np.int64)
        c, t = K.range_full(*self.flat, np.uint64(l), np.uint64(h), self._stacks()[0], st)
        return int(c), int(t)

    def lower_bound(self, key: int) -> Optional[int]:
        """Payload of the first stored key >= ``key``."""
        st = np.zeros(3, dtype=np.int64)
        _, snode, sslot = self._stacks()
        v = K.range_lower_bound(*self.flat, np.uint64(key), snode, sslot, st)
        return None if v < 0 else int(v)

    def run(self, workload, range_mode: str = "full") -> Tuple[np.ndarray, np.ndarray, QueryStats]:
        """Execute a ``Workload``; returns per-query outputs and operation counters."""
        n = len(workload)
        out_a = np.empty(n, dtype=np.int64)
        out_b = np.empty(n, dtype=np.int64)
        st = np.zeros(3, dtype=np.int64)
        K.run_workload(
            *self.flat, workload.kind, workload.lo, workload.hi, range_mode_code(range_mode), out_a, out_b, st,
            *self._stacks(),
        )
        return out_a, out_b, QueryStats(int(st[0]), int(st[1]), int(st[2]))

    # -- verification --------------------------------------------------------

    def verify(
        self,
        keys: Optional[np.ndarray] = None,
        payloads: Optional[np.ndarray] = None,
        *,
        max_exhaustive: int = 2000,
        samples: int = 2_000,
        seed: int = 0,
    ) -> CorrectnessResult:
        """Check range and point queries against a brute-force oracle over ``keys``.

        With at most ``max_exhaustive`` keys every (l, h) pair of the grid of
        distinct keys plus sentinels is checked: counting range queries for all
        pairs, payload-checked point queries for every grid value, and
        materialising range queries (count and payload sum) on ``samples``
        random pairs. Larger datasets get ``samples`` materialising pairs plus a
        point probe for every stored key.
        """
        if keys is None:
            keys, payloads = self.sorted_data
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        if payloads is None:
            payloads = np.arange(len(keys), dtype=np.int64)
        payloads = np.ascontiguousarray(payloads, dtype=np.int64)
        order = np.argsort(keys, kind="stable")
        keys, payloads = keys[order], payloads[order]
        prefix = np.zeros(len(keys) + 1, dtype=np.int64)
        np.cumsum(payloads, out=prefix[1:])
        stack = self._stacks()[0]
        st = np.zeros(3, dtype=np.int64)
        if len(keys) <= max_exhaustive:
            grid = np.array(query_grid(keys.tolist()), dtype=np.uint64)
            lo_rank = np.searchsorted(keys, grid, side="left").astype(np.int64)
            hi_rank = np.searchsorted(keys, grid, side="right").astype(np.int64)
            i, j = K.verify_grid(*self.flat, grid, lo_rank, hi_rank, prefix, stack, st)
            g = len(grid)
            if i >= 0:
                return CorrectnessResult(False, (int(grid[i]), int(grid[j])), 0)
            # materialising queries on a sample of pairs cover the leaf scan paths
            rng = np.random.default_rng(seed)
            pick = rng.integers(0, g, size=(2, min(samples, g * g)))
            lo_i, hi_i = np.minimum(pick[0], pick[1]), np.maximum(pick[0], pick[1])
            bad = K.verify_pairs(*self.flat, grid[lo_i], grid[hi_i], lo_rank[lo_i], hi_rank[hi_i], prefix, stack, st)
            if bad >= 0:
                return CorrectnessResult(False, (int(grid[lo_i[bad]]), int(grid[hi_i[bad]])), 0)
            return CorrectnessResult(True, None, g * (g + 1) // 2)
        rng = np.random.default_rng(seed)
        grid = np.concatenate([keys, np.array(query_grid([int(keys[0]), int(keys[-1])]), dtype=np.uint64)])
        a = grid[rng.integers(0, len(grid), samples)]
        b = grid[rng.integers(0, len(grid), samples)]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        a_rank = np.searchsorted(keys, lo, side="left").astype(np.int64)
        b_rank = np.searchsorted(keys, hi, side="right").astype(np.int64)
        bad = K.verify_pairs(*self.flat, lo, hi, a_rank, b_rank, prefix, stack, st)
        if bad >= 0:
            return CorrectnessResult(False, (int(lo[bad]), int(hi[bad])), 0)
        point = np.zeros(len(keys), dtype=np.uint8)
        out_a = np.empty(len(keys), dtype=np.int64)
        out_b = np.empty(len(keys), dtype=np.int64)
        K.run_workload(*self.flat, point, keys, keys, 0, out_a, out_b, st, *self._stacks())
        miss = np.flatnonzero(out_a != payloads)
        if len(miss):
            k = int(keys[miss[0]])
            return CorrectnessResult(False, (k, k), 0)
        return CorrectnessResult(True, None, samples + len(keys))

    # -- views ---------------------------------------------------------------

    def to_logical(self) -> LogicalIndex:
        nodes = []
        for nid, n, _, _ in self.iter_with_parents():
            nodes.append(n)
        ids = {id(n): i for i, n in enumerate(nodes)}
        out = []
        for i, n in enumerate(nodes):
            if n.is_leaf:
                dt = frozenset(Record(int(k), int(v)) for k, v in zip(n.keys, n.payloads))
                out.append(LogicalNode(i, None, None, dt))
                continue
            if n.is_pivot_node:
                entries = {s: [ids[id(c)]] for s, c in enumerate(n.children)}
            else:
                entries = {v: [ids[id(n.children[s])]] for v, s in enumerate(n.slots) if s >= 0}
            out.append(LogicalNode(i, n.partition, RoutingInformation.of(entries)))
        return LogicalIndex.from_nodes(out, (0,))

    def describe(self) -> str:
        """Compact one-line summary, e.g. ``3 nodes: tree/bins[sorted_col/ints, hash/hashs]``."""

        def rec(n: PhysicalNode) -> str:
            s = f"{n.layout.label}/{n.search.label}"
            if n.is_leaf:
                return s
            return s + "[" + ", ".join(rec(c) for c in n.children) + "]"

        text = rec(self.root)
        if len(text) > 200:
            text = text[:197] + "..."
        return f"{self.node_count} nodes: {text}"

    def to_config(self, **metadata):
        from .config import IndexConfig

        return IndexConfig.from_index(self, **metadata)

    def __repr__(self) -> str:
        return f"PhysicalIndex({self.describe()}, hash={self.structural_hash:016x})"


def range_mode_code(mode: str) -> int:
    if mode in ("full", K.RANGE_FULL):
        return K.RANGE_FULL
    if mode in ("lower_bound", K.RANGE_LOWER_BOUND):
        return K.RANGE_LOWER_BOUND
    raise ValueError(f"unknown range mode {mode!r}")


def _subtree_keys(n: PhysicalNode) -> np.ndarray:
    if n.is_leaf:
        return n.keys
    parts = [_subtree_keys(c) for c in n.children]
    return np.concatenate(parts) if parts else _EMPTY_KEYS


def _partition_values(p: PartitioningFunction, keys: np.ndarray) -> np.ndarray:
    """Vectorised partition values for uint64 keys; mirrors the scalar functions exactly."""
    if isinstance(p, RangePivots):
        return np.searchsorted(p.pivots, keys, side="right").astype(np.int64)
    if isinstance(p, LinearModel):
        v = p.slope * keys.astype(np.float64) + p.intercept
        out = np.zeros(len(keys), dtype=np.int64)
        pos = v > 0
        out[pos] = np.minimum(np.floor(np.minimum(v[pos], p.bins)), p.bins - 1).astype(np.int64)
        return out
    if isinstance(p, BitSuffix):
        mask = np.uint64((1 << p.width) - 1)
        return (keys & mask).astype(np.int64)
    if isinstance(p, BitPrefix):
        mask = np.uint64((1 << p.width) - 1)
        return ((keys >> np.uint64(p.shift)) & mask).astype(np.int64)
    raise TypeError(f"unsupported partitioning function {p!r}")


partition_values = _partition_values


# ---------------------------------------------------------------------------
# flattening
# ---------------------------------------------------------------------------


def flatten(index: PhysicalIndex) -> K.FlatIndex:
    """Lay the index out as the flat arrays consumed by the query kernels."""
    nodes = index.nodes()
    ids = {id(n): i for i, n in enumerate(nodes)}
    m = len(nodes)
    meta = np.zeros((m, K.META_COLS), dtype=np.int64)
    metaf = np.zeros((m, K.METAF_COLS), dtype=np.float64)
    fmask = np.zeros(m, dtype=np.uint64)
    key_parts, val_parts, tree_parts, aux_parts, htab_parts, hovf_parts = [], [], [], [], [], []
    ko = to = ao = ho = vo = 0
    meta[:, K.M_TROOT] = -1
    meta[0, K.M_MONO] = int(index.monotone)
    for i, n in enumerate(nodes):
        row = meta[i]
        row[K.M_LAYOUT] = int(n.layout)
        row[K.M_SEARCH] = int(n.search)
        region = n.region
        if n.is_leaf and n.layout == DataLayout.HASH:
            table, overflow, bits = n.hash_table
            row[K.M_KIND] = K.LEAF
            row[K.M_CNT] = len(n.keys)
            row[K.M_OFF] = ko
            row[K.M_HOFF] = ho
            row[K.M_HBITS] = bits
            row[K.M_OVF] = vo
            htab_parts.append(table)
            hovf_parts.append(overflow)
            ho += len(table) // 4
            vo += len(overflow) // 2
            continue
        row[K.M_OFF] = ko
        row[K.M_CNT] = len(region)
        key_parts.append(region)
        ko += len(region)
        if n.is_leaf:
            row[K.M_KIND] = K.LEAF
            val_parts.append(n.payloads)
        else:
            val_parts.append(np.zeros(len(region), dtype=np.int64))
            p = n.partition
            if isinstance(p, RangePivots):
                row[K.M_KIND] = K.PIVOTS
                slot_children = [ids[id(c)] for c in n.children]
            else:
                slot_children = [ids[id(n.children[s])] if s >= 0 else -1 for s in n.slots]
                if isinstance(p, LinearModel):
                    row[K.M_KIND] = K.LINEAR
                    metaf[i, K.F_SLOPE] = p.slope
                    metaf[i, K.F_ICPT] = p.intercept
                else:
                    row[K.M_KIND] = K.BIT_SUFFIX if isinstance(p, BitSuffix) else K.BIT_PREFIX
                    row[K.M_SHIFT] = 0 if isinstance(p, BitSuffix) else p.shift
                    fmask[i] = np.uint64((1 << p.width) - 1)
            row[K.M_COFF] = ao
            row[K.M_CCNT] = len(slot_children)
            aux_parts.append(np.array(slot_children, dtype=np.int64))
            ao += len(slot_children)
            row[K.M_DOFF] = ao
            row[K.M_DCNT] = len(n.children)
            aux_parts.append(np.array([ids[id(c)] for c in n.children], dtype=np.int64))
            ao += len(n.children)
        if n.layout == DataLayout.TREE:
            tnodes, root = n.tree
            row[K.M_TOFF] = to
            row[K.M_TROOT] = root
            tree_parts.append(tnodes)
            to += len(tnodes) // 4
        if n.search == SearchMethod.LINREGS:
            lr = n.linreg
            metaf[i, K.F_LR_SLOPE] = lr.slope
            metaf[i, K.F_LR_ICPT] = lr.intercept
            row[K.M_LRLO] = lr.lower
            row[K.M_LRHI] = lr.upper

    def cat(parts, dtype):
        return np.ascontiguousarray(np.concatenate(parts), dtype=dtype) if parts else np.zeros(1, dtype=dtype)

    return K.FlatIndex(
        meta,
        metaf,
        fmask,
        cat(key_parts, np.uint64),
        cat(val_parts, np.int64),
        cat(tree_parts, np.uint64),
        cat(aux_parts, np.int64),
        cat(htab_parts, np.uint64),
        cat(hovf_parts, np.uint64),
    )
