"""The six correctness-preserving mutations and the distributions they are drawn from.

Mutations are pure: they take an index and return a new one, sharing every
untouched subtree. A mutation whose preconditions do not hold raises
``MutationAborted``; the caller simply draws again.

Node ids are pre-order positions (root = 0), as produced by ``PhysicalIndex.nodes``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import RangePivots
from .layouts import DataLayout, SearchMethod, compatible, valid_pairs
from .physical import BuildError, PhysicalIndex, PhysicalNode

log = logging.getLogger(__name__)

Pair = Tuple[DataLayout, SearchMethod]


class MutationAborted(Exception):
    """The drawn mutation does not apply to the drawn node."""


class MutationKind(IntEnum):
    CHANGE_LAYOUT = 1
    CHANGE_SEARCH = 2
    MERGE_HORIZONTAL = 3
    SPLIT_HORIZONTAL = 4
    MERGE_VERTICAL = 5
    SPLIT_VERTICAL = 6

    @property
    def label(self) -> str:
        return self.name.lower()


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------


def _pair_key(p: Pair) -> str:
    return f"{p[0].label}/{p[1].label}"


@dataclass(frozen=True)
class MutationDistributions:
    """MD over mutation kinds, ND over candidate nodes, PD over (layout, search) pairs.

    ``nd`` is ``"uniform"`` or ``"entries"`` (weight proportional to a node's
    entry count). ``pd`` maps ``"layout/search"`` labels to weights; pairs the
    compatibility matrix rejects always get weight zero.
    """

    md: Mapping[int, float] = field(default_factory=lambda: {k: 1.0 for k in MutationKind})
    nd: str = "uniform"
    pd: Mapping[str, float] = field(default_factory=lambda: {_pair_key(p): 1.0 for p in valid_pairs()})

    def __post_init__(self) -> None:
        md = {MutationKind(int(k)): float(v) for k, v in self.md.items()}
        if any(v < 0 for v in md.values()) or sum(md.values()) <= 0:
            raise ValueError("mutation weights must be non-negative with a positive total")
        object.__setattr__(self, "md", md)
        if self.nd not in ("uniform", "entries"):
            raise ValueError(f"unknown node distribution {self.nd!r}")
        if any(float(v) < 0 for v in self.pd.values()):
            raise ValueError("physical weights must be non-negative")

    @classmethod
    def from_dict(cls, d: Optional[Mapping]) -> "MutationDistributions":
        if not d:
            return cls()
        kw = {}
        if "md" in d:
            md = d["md"]
            if isinstance(md, Mapping):
                kw["md"] = {_kind_from(k): float(v) for k, v in md.items()}
            else:
                kw["md"] = {MutationKind(i + 1): float(v) for i, v in enumerate(md)}
        if "nd" in d:
            kw["nd"] = d["nd"]
        if "pd" in d:
            base = {_pair_key(p): 0.0 for p in valid_pairs()}
            base.update({k: float(v) for k, v in d["pd"].items()})
            kw["pd"] = base
        return cls(**kw)

    def to_dict(self) -> Dict:
        return {"md": {k.label: v for k, v in self.md.items()}, "nd": self.nd, "pd": dict(self.pd)}

    # -- drawing -------------------------------------------------------------

    def pair_weight(self, pair: Pair) -> float:
        if not compatible(*pair):
            return 0.0
        return float(self.pd.get(_pair_key(pair), 0.0))

    def draw_kind(self, rng: np.random.Generator) -> MutationKind:
        kinds = list(self.md)
        return kinds[_weighted(rng, [self.md[k] for k in kinds])]

    def draw_pair(
        self,
        rng: np.random.Generator,
        *,
        routing: bool,
        layout: Optional[DataLayout] = None,
        exclude_layout: Optional[DataLayout] = None,
        exclude_search: Optional[SearchMethod] = None,
    ) -> Pair:
        cands = [
            p
            for p in valid_pairs(routing=routing)
            if (layout is None or p[0] == layout)
            and (exclude_layout is None or p[0] != exclude_layout)
            and (exclude_search is None or p[1] != exclude_search)
        ]
        weights = [self.pair_weight(p) for p in cands]
        if not cands or sum(weights) <= 0:
            raise MutationAborted("no physical choice with positive weight")
        return cands[_weighted(rng, weights)]

    def draw_node(self, index: PhysicalIndex, kind: MutationKind, rng: np.random.Generator) -> int:
        nodes = index.nodes()
        cands = [i for i, n in enumerate(nodes) if applicable(index, nodes, i, kind)]
        if not cands:
            raise MutationAborted(f"no node admits {kind.label}")
        if self.nd == "entries":
            weights = [max(1, nodes[i].entry_count) for i in cands]
            return cands[_weighted(rng, weights)]
        return cands[int(rng.integers(len(cands)))]


def _kind_from(k) -> MutationKind:
    if isinstance(k, str) and not k.isdigit():
        k = k.lower()
        for m in MutationKind:
            if k in (m.label, f"m{int(m)}"):
                return m
        raise ValueError(f"unknown mutation kind {k!r}")
    return MutationKind(int(k))


def _weighted(rng: np.random.Generator, weights: Sequence[float]) -> int:
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise MutationAborted("all weights are zero")
    return int(np.searchsorted(np.cumsum(w), rng.random() * total, side="right").clip(0, len(w) - 1))


# ---------------------------------------------------------------------------
# node addressing
# ---------------------------------------------------------------------------


def _parents(index: PhysicalIndex) -> Tuple[List[PhysicalNode], List[int], List[int]]:
    nodes, parent, pos = [], [], []
    for _, n, p, i in index.iter_with_parents():
        nodes.append(n)
        parent.append(p)
        pos.append(i)
    return nodes, parent, pos


def _replace(index: PhysicalIndex, node_id: int, new: PhysicalNode) -> PhysicalIndex:
    """New index with node ``node_id`` replaced; ancestors are copied, everything else shared."""
    nodes, parent, pos = _parents(index)
    cur, nid = new, node_id
    while parent[nid] >= 0:
        p = nodes[parent[nid]]
        children = list(p.children)
        children[pos[nid]] = cur
        cur = p.replace(children=tuple(children))
        nid = parent[nid]
    try:
        return PhysicalIndex(cur, index.capacity)
    except BuildError as e:
        raise MutationAborted(str(e)) from e


def _node(index: PhysicalIndex, node_id: int) -> PhysicalNode:
    nodes = index.nodes()
    if not 0 <= node_id < len(nodes):
        raise MutationAborted(f"no node {node_id}")
    return nodes[node_id]


def _mutable(n: PhysicalNode) -> bool:
    """Function-routed nodes keep their shape; only pivot nodes and leaves are restructured."""
    return n.is_leaf or n.is_pivot_node


def _mergeable_pairs(n: PhysicalNode) -> List[int]:
    """Left positions of adjacent children that share a partitioning function."""
    ch = n.children
    return [
        a
        for a in range(len(ch) - 1)
        if (ch[a].is_leaf and ch[a + 1].is_leaf) or (ch[a].is_pivot_node and ch[a + 1].is_pivot_node)
    ]


def _absorbable_children(n: PhysicalNode) -> List[int]:
    """Children a pivot node can fold into itself: pivot-routed children, or a sole leaf."""
    if len(n.children) == 1 and n.children[0].is_leaf:
        return [0]
    return [i for i, c in enumerate(n.children) if c.is_pivot_node]


def applicable(index: PhysicalIndex, nodes: Sequence[PhysicalNode], i: int, kind: MutationKind) -> bool:
    """Cheap applicability filter used by the node distribution."""
    n = nodes[i]
    if kind == MutationKind.CHANGE_LAYOUT:
        return _mutable(n)
    if kind == MutationKind.CHANGE_SEARCH:
        return _mutable(n) and n.layout == DataLayout.SORTED_COL
    if kind == MutationKind.MERGE_HORIZONTAL:
        return n.is_pivot_node and bool(_mergeable_pairs(n))
    if kind == MutationKind.SPLIT_HORIZONTAL:
        return i > 0 and _mutable(n) and n.entry_count >= 2
    if kind == MutationKind.MERGE_VERTICAL:
        return n.is_pivot_node and bool(_absorbable_children(n))
    return _mutable(n) and n.entry_count >= 2


# ---------------------------------------------------------------------------
# M1 / M2: physical changes
# ---------------------------------------------------------------------------


def _part_check(n: PhysicalNode, part: Optional[str]) -> None:
    if part is None:
        return
    want = "dt" if n.is_leaf else "ri"
    if part.lower() != want:
        raise MutationAborted(f"node has no active {part.upper()} part")


def change_layout(
    index: PhysicalIndex,
    node_id: int,
    new_layout: Optional[DataLayout] = None,
    rng: Optional[np.random.Generator] = None,
    dist: Optional[MutationDistributions] = None,
    part: Optional[str] = None,
) -> PhysicalIndex:
    """Give the node's active part a different data layout; data and routing stay put."""
    rng = rng or np.random.default_rng()
    dist = dist or MutationDistributions()
    n = _node(index, node_id)
    _part_check(n, part)
    if not _mutable(n):
        raise MutationAborted("function-routed nodes are not mutated")
    routing = not n.is_leaf
    if new_layout is None:
        new_layout = dist.draw_pair(rng, routing=routing, exclude_layout=n.layout)[0]
    new_layout = DataLayout(new_layout)
    if new_layout == n.layout:
        raise MutationAborted("layout unchanged")
    if routing and new_layout == DataLayout.HASH:
        raise MutationAborted("nodes with children cannot use the hash layout")
    search = n.search
    if not compatible(new_layout, search) or dist.pair_weight((new_layout, search)) <= 0:
        search = dist.draw_pair(rng, routing=routing, layout=new_layout)[1]
    if routing:
        new = n.replace(ri_layout=new_layout, ri_search=search)
    else:
        new = n.replace(dt_layout=new_layout, dt_search=search)
    return _replace(index, node_id, new)


def change_search(
    index: PhysicalIndex,
    node_id: int,
    new_search: Optional[SearchMethod] = None,
    rng: Optional[np.random.Generator] = None,
    dist: Optional[MutationDistributions] = None,
    part: Optional[str] = None,
) -> PhysicalIndex:
    """Swap the search method of the node's active part for another compatible one."""
    rng = rng or np.random.default_rng()
    dist = dist or MutationDistributions()
    n = _node(index, node_id)
    _part_check(n, part)
    if not _mutable(n):
        raise MutationAborted("function-routed nodes are not mutated")
    routing = not n.is_leaf
    if new_search is None:
        new_search = dist.draw_pair(rng, routing=routing, layout=n.layout, exclude_search=n.search)[1]
    new_search = SearchMethod(new_search)
    if new_search == n.search:
        raise MutationAborted("search unchanged")
    if not compatible(n.layout, new_search):
        raise MutationAborted(f"{n.layout.label} does not admit {new_search.label}")
    if routing:
        new = n.replace(ri_search=new_search)
    else:
        new = n.replace(dt_search=new_search)
    return _replace(index, node_id, new)


# ---------------------------------------------------------------------------
# M3 / M4: horizontal merge and split
# ---------------------------------------------------------------------------


def _merge_pair(left: PhysicalNode, right: PhysicalNode, boundary: int, target: PhysicalNode, capacity: int) -> PhysicalNode:
    if left.is_leaf and right.is_leaf:
        if len(left.keys) + len(right.keys) > capacity:
            raise MutationAborted("merged leaf would exceed the capacity")
        keys = np.concatenate([left.keys, right.keys])
        vals = np.concatenate([left.payloads, right.payloads])
        keys.setflags(write=False)
        vals.setflags(write=False)
        return PhysicalNode.leaf(keys, vals, target.dt_layout, target.dt_search)
    if left.is_pivot_node and right.is_pivot_node:
        if len(left.children) + len(right.children) > capacity:
            raise MutationAborted("merged node would exceed the capacity")
        piv = np.concatenate([left.pivots, np.array([boundary], dtype=np.uint64), right.pivots])
        return PhysicalNode.inner(left.children + right.children, target.ri_layout, target.ri_search, piv)
    raise MutationAborted("siblings do not share a partitioning function")


def merge_horizontal(
    index: PhysicalIndex,
    parent_id: int,
    target_pos: int,
    source_pos: int,
) -> PhysicalIndex:
    """Merge child ``source_pos`` into its adjacent sibling ``target_pos``.

    The merged node keeps the target's physical choices; the pivot separating
    the two key ranges disappears from the parent.
    """
    parent = _node(index, parent_id)
    if not parent.is_pivot_node:
        raise MutationAborted("parent is not pivot-routed")
    m = len(parent.children)
    if m < 2:
        raise MutationAborted("parent has fewer than two children")
    if target_pos == source_pos or not (0 <= target_pos < m and 0 <= source_pos < m):
        raise MutationAborted("invalid sibling positions")
    if abs(target_pos - source_pos) != 1:
        raise MutationAborted("only adjacent key ranges can be merged")
    a = min(target_pos, source_pos)
    left, right = parent.children[a], parent.children[a + 1]
    boundary = int(parent.pivots[a])
    merged = _merge_pair(left, right, boundary, parent.children[target_pos], index.capacity)
    children = parent.children[:a] + (merged,) + parent.children[a + 2 :]
    pivots = np.delete(parent.pivots, a)
    new_parent = parent.replace(partition=RangePivots(pivots), children=children)
    return _replace(index, parent_id, new_parent)


def _split_points(n: int, k: int) -> List[int]:
    return [(i * n) // k for i in range(1, k)]


def split_horizontal(index: PhysicalIndex, parent_id: int, node_pos: int, k: int = 2) -> PhysicalIndex:
    """Replace a child by ``k`` siblings covering contiguous sub-ranges of its keys or children."""
    parent = _node(index, parent_id)
    if not parent.is_pivot_node:
        raise MutationAborted("parent is not pivot-routed")
    if not 0 <= node_pos < len(parent.children):
        raise MutationAborted("invalid child position")
    if k < 2:
        raise MutationAborted("split needs k >= 2")
    node = parent.children[node_pos]
    if node.entry_count < k:
        raise MutationAborted("fewer entries than parts")
    if len(parent.children) + k - 1 > index.capacity:
        raise MutationAborted("parent would exceed the capacity")
    cuts = [0] + _split_points(node.entry_count, k) + [node.entry_count]
    parts: List[PhysicalNode] = []
    new_pivots: List[int] = []
    if node.is_leaf:
        for a, b in zip(cuts[:-1], cuts[1:]):
            parts.append(PhysicalNode.leaf(node.keys[a:b], node.payloads[a:b], node.dt_layout, node.dt_search))
        new_pivots = [int(node.keys[c]) for c in cuts[1:-1]]
    elif node.is_pivot_node:
        piv = node.pivots
        for a, b in zip(cuts[:-1], cuts[1:]):
            parts.append(PhysicalNode.inner(node.children[a:b], node.ri_layout, node.ri_search, piv[a : b - 1]))
        new_pivots = [int(piv[c - 1]) for c in cuts[1:-1]]
    else:
        raise MutationAborted("function-routed nodes are not mutated")
    pivots = np.concatenate(
        [parent.pivots[:node_pos], np.array(new_pivots, dtype=np.uint64), parent.pivots[node_pos:]]
    )
    children = parent.children[:node_pos] + tuple(parts) + parent.children[node_pos + 1 :]
    new_parent = parent.replace(partition=RangePivots(pivots), children=children)
    return _replace(index, parent_id, new_parent)


# ---------------------------------------------------------------------------
# M5 / M6: vertical merge and split
# ---------------------------------------------------------------------------


def merge_vertical(index: PhysicalIndex, parent_id: int, child_pos: int) -> PhysicalIndex:
    """Fold a child into its parent.

    An inner child's key ranges and children are spliced into the parent. A
    leaf that is the parent's only child turns the parent into that leaf.
    """
    parent = _node(index, parent_id)
    if not parent.is_pivot_node:
        raise MutationAborted("parent is not pivot-routed")
    if not 0 <= child_pos < len(parent.children):
        raise MutationAborted("invalid child position")
    child = parent.children[child_pos]
    if child.is_leaf:
        if len(parent.children) != 1:
            raise MutationAborted("a leaf can only absorb into a parent with no other children")
        return _replace(index, parent_id, child)
    if not child.is_pivot_node:
        raise MutationAborted("partitioning functions differ")
    if len(parent.children) - 1 + len(child.children) > index.capacity:
        raise MutationAborted("parent would exceed the capacity")
    pivots = np.concatenate([parent.pivots[:child_pos], child.pivots, parent.pivots[child_pos:]])
    if len(pivots) > 1 and not np.all(pivots[1:] > pivots[:-1]):
        raise MutationAborted("spliced pivots are not strictly increasing")
    children = parent.children[:child_pos] + child.children + parent.children[child_pos + 1 :]
    new_parent = parent.replace(partition=RangePivots(pivots), children=children)
    return _replace(index, parent_id, new_parent)


def split_vertical(
    index: PhysicalIndex,
    node_id: int,
    rng: Optional[np.random.Generator] = None,
    dist: Optional[MutationDistributions] = None,
    side: Optional[str] = None,
) -> PhysicalIndex:
    """Push a contiguous part of a node's contents one level down into a new child.

    A leaf keeps its data in a new child leaf and becomes a routing node. An
    inner node with at least four children delegates its left or right half
    to a new intermediate node; smaller inner nodes delegate all children.
    New routing parts get a physical choice drawn from PD.
    """
    rng = rng or np.random.default_rng()
    dist = dist or MutationDistributions()
    n = _node(index, node_id)
    if not _mutable(n):
        raise MutationAborted("function-routed nodes are not mutated")
    if n.entry_count < 2:
        raise MutationAborted("nothing to delegate")
    lay, se = dist.draw_pair(rng, routing=True)
    if n.is_leaf:
        new = PhysicalNode.inner([n], lay, se, np.zeros(0, dtype=np.uint64))
        return _replace(index, node_id, new)
    m = len(n.children)
    piv = n.pivots
    if m >= 4:
        half = m // 2
        if side is None:
            side = "left" if rng.random() < 0.5 else "right"
        if side == "left":
            sub = PhysicalNode.inner(n.children[:half], lay, se, piv[: half - 1])
            children = (sub,) + n.children[half:]
            pivots = piv[half - 1 :]
        else:
            sub = PhysicalNode.inner(n.children[half:], lay, se, piv[half:])
            children = n.children[:half] + (sub,)
            pivots = piv[:half]
    else:
        sub = PhysicalNode.inner(n.children, lay, se, piv)
        children = (sub,)
        pivots = np.zeros(0, dtype=np.uint64)
    new = n.replace(partition=RangePivots(pivots), children=children)
    return _replace(index, node_id, new)


# ---------------------------------------------------------------------------
# drawing and applying a complete mutation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AppliedMutation:
    kind: MutationKind
    node_id: int
    detail: str = ""


def mutate(
    index: PhysicalIndex,
    rng: np.random.Generator,
    dist: Optional[MutationDistributions] = None,
    kind: Optional[MutationKind] = None,
) -> Tuple[PhysicalIndex, AppliedMutation]:
    """Draw kind, node and physical choices and apply one mutation; raises ``MutationAborted``."""
    dist = dist or MutationDistributions()
    kind = MutationKind(kind) if kind is not None else dist.draw_kind(rng)
    node_id = dist.draw_node(index, kind, rng)
    nodes, parent, pos = _parents(index)
    n = nodes[node_id]
    if kind == MutationKind.CHANGE_LAYOUT:
        out = change_layout(index, node_id, None, rng, dist)
        return out, AppliedMutation(kind, node_id)
    if kind == MutationKind.CHANGE_SEARCH:
        out = change_search(index, node_id, None, rng, dist)
        return out, AppliedMutation(kind, node_id)
    if kind == MutationKind.MERGE_HORIZONTAL:
        pairs = _mergeable_pairs(n)
        if not pairs:
            raise MutationAborted("no adjacent siblings share a partitioning function")
        a = pairs[int(rng.integers(len(pairs)))]
        target, source = (a, a + 1) if rng.random() < 0.5 else (a + 1, a)
        out = merge_horizontal(index, node_id, target, source)
        return out, AppliedMutation(kind, node_id, f"merge children {a},{a + 1}")
    if kind == MutationKind.SPLIT_HORIZONTAL:
        out = split_horizontal(index, parent[node_id], pos[node_id], 2)
        return out, AppliedMutation(kind, node_id)
    if kind == MutationKind.MERGE_VERTICAL:
        cands = _absorbable_children(n)
        c = cands[int(rng.integers(len(cands)))]
        out = merge_vertical(index, node_id, c)
        return out, AppliedMutation(kind, node_id, f"absorb child {c}")
    out = split_vertical(index, node_id, rng, dist)
    return out, AppliedMutation(kind, node_id)


# spec-facing aliases
m1_change_layout = change_layout
m2_change_search = change_search
m3_merge_horizontal = merge_horizontal
m4_split_horizontal = split_horizontal
m5_merge_vertical = merge_vertical
m6_split_vertical = split_vertical
