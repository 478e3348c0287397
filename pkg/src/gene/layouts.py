"""Data layouts, intra-node search methods and which combinations are legal."""

from __future__ import annotations

from enum import IntEnum
from typing import List, Tuple


class DataLayout(IntEnum):
    SORTED_COL = 0
    HASH = 1
    TREE = 2

    @property
    def label(self) -> str:
        return _LAYOUT_LABELS[self]

    @classmethod
    def parse(cls, s: "str | DataLayout") -> "DataLayout":
        if isinstance(s, DataLayout):
            return s
        return _LAYOUT_BY_LABEL[s.lower()]


class SearchMethod(IntEnum):
    SCAN = 0
    BINS = 1
    INTS = 2
    EXPS = 3
    HASHS = 4
    LINREGS = 5

    @property
    def label(self) -> str:
        return _SEARCH_LABELS[self]

    @classmethod
    def parse(cls, s: "str | SearchMethod") -> "SearchMethod":
        if isinstance(s, SearchMethod):
            return s
        return _SEARCH_BY_LABEL[s.lower()]


_LAYOUT_LABELS = {DataLayout.SORTED_COL: "sorted_col", DataLayout.HASH: "hash", DataLayout.TREE: "tree"}
_LAYOUT_BY_LABEL = {v: k for k, v in _LAYOUT_LABELS.items()}
_SEARCH_LABELS = {
    SearchMethod.SCAN: "scan",
    SearchMethod.BINS: "bins",
    SearchMethod.INTS: "ints",
    SearchMethod.EXPS: "exps",
    SearchMethod.HASHS: "hashs",
    SearchMethod.LINREGS: "linregs",
}
_SEARCH_BY_LABEL = {v: k for k, v in _SEARCH_LABELS.items()}

ORDERED_METHODS = (SearchMethod.SCAN, SearchMethod.BINS, SearchMethod.INTS, SearchMethod.EXPS, SearchMethod.LINREGS)

_ALLOWED = {
    DataLayout.SORTED_COL: frozenset(ORDERED_METHODS),
    DataLayout.HASH: frozenset({SearchMethod.HASHS}),
    # ordered descent; no alternative search competes inside a tree node
    DataLayout.TREE: frozenset({SearchMethod.BINS}),
}


class IncompatiblePhysicalChoice(ValueError):
    """A (layout, search) pair that the compatibility matrix rejects."""


def compatible(layout: DataLayout, method: SearchMethod) -> bool:
    return SearchMethod(method) in _ALLOWED[DataLayout(layout)]


compatibility_matrix = compatible


def methods_for(layout: DataLayout) -> List[SearchMethod]:
    return sorted(_ALLOWED[DataLayout(layout)])


def valid_pairs(*, routing: bool = False) -> List[Tuple[DataLayout, SearchMethod]]:
    """All legal (layout, search) pairs. Routing parts never use the hash layout."""
    out = []
    for layout in DataLayout:
        if routing and layout == DataLayout.HASH:
            continue
        out.extend((layout, m) for m in methods_for(layout))
    return out


def require_compatible(layout: DataLayout, method: SearchMethod) -> None:
    if not compatible(layout, method):
        raise IncompatiblePhysicalChoice(f"{DataLayout(layout).label} does not admit {SearchMethod(method).label}")
