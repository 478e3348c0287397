"""Serializable index configurations.

A configuration records the topology, routing and physical choices of an index
together with the fill of every leaf, but no key values. JSON layout::

    {
      "format": "gene-index-config",
      "version": 1,
      "capacity": 100000,
      "metadata": {"dataset_fingerprint": "...", "dataset_size": 100000,
                   "generation": 17, "fitness_ns": 123456.0},
      "root": NODE
    }

    NODE = {
      "routing":  null | {"kind": "pivots", "pivots": [...]}
                       | {"kind": "linear", "slope": s, "intercept": i, "bins": b, "slots": [...]}
                       | {"kind": "bit_suffix", "width": w, "slots": [...]}
                       | {"kind": "bit_prefix", "start": s, "width": w, "slots": [...]},
      "ri": null | {"layout": "sorted_col|tree", "search": "..."},
      "dt": null | {"layout": "sorted_col|hash|tree", "search": "..."},
      "fill": number of tuples (leaves; 0 for inner nodes),
      "children": [NODE, ...]
    }

Metadata is informational and does not take part in the structural hash.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from .core import partition_from_dict
from .layouts import DataLayout, SearchMethod, require_compatible
from .physical import DEFAULT_CAPACITY, PhysicalIndex, PhysicalNode, local_descriptor, merkle_digest

FORMAT = "gene-index-config"
VERSION = 1


class ConfigError(ValueError):
    """A malformed or inconsistent configuration document."""


@dataclass(frozen=True)
class ConfigNode:
    routing: Optional[Dict[str, Any]]
    ri: Optional[Tuple[str, str]]
    dt: Optional[Tuple[str, str]]
    fill: int = 0
    children: Tuple["ConfigNode", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def total_fill(self) -> int:
        return self.fill + sum(c.total_fill for c in self.children)

    @property
    def node_count(self) -> int:
        return 1 + sum(c.node_count for c in self.children)

    def leaves(self) -> List["ConfigNode"]:
        if self.is_leaf:
            return [self]
        return [leaf for c in self.children for leaf in c.leaves()]

    def digest(self) -> bytes:
        ri = {"layout": self.ri[0], "search": self.ri[1]} if self.ri else None
        dt = {"layout": self.dt[0], "search": self.dt[1]} if self.dt else None
        local = local_descriptor(self.routing, ri, dt, self.fill)
        return merkle_digest(local, [c.digest() for c in self.children])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "routing": self.routing,
            "ri": {"layout": self.ri[0], "search": self.ri[1]} if self.ri else None,
            "dt": {"layout": self.dt[0], "search": self.dt[1]} if self.dt else None,
            "fill": self.fill,
            "children": [c.to_dict() for c in self.children],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ConfigNode":
        try:
            ri = (d["ri"]["layout"], d["ri"]["search"]) if d.get("ri") else None
            dt = (d["dt"]["layout"], d["dt"]["search"]) if d.get("dt") else None
            children = tuple(cls.from_dict(c) for c in d.get("children", []))
            node = cls(d.get("routing"), ri, dt, int(d.get("fill", 0)), children)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"malformed node: {e}") from e
        node.validate()
        return node

    @classmethod
    def from_physical(cls, n: PhysicalNode) -> "ConfigNode":
        ri = (n.ri_layout.label, n.ri_search.label) if n.ri_layout is not None else None
        dt = (n.dt_layout.label, n.dt_search.label) if n.dt_layout is not None else None
        fill = len(n.keys) if n.is_leaf else 0
        return cls(n.routing_descriptor, ri, dt, fill, tuple(cls.from_physical(c) for c in n.children))

    def validate(self) -> None:
        try:
            if self.is_leaf:
                if self.dt is None or self.ri is not None or self.routing is not None:
                    raise ConfigError("a leaf needs dt and neither ri nor routing")
                require_compatible(DataLayout.parse(self.dt[0]), SearchMethod.parse(self.dt[1]))
                if self.fill < 0:
                    raise ConfigError("negative fill")
                return
            if self.ri is None or self.dt is not None or self.routing is None:
                raise ConfigError("an inner node needs ri and routing and no dt")
            layout = DataLayout.parse(self.ri[0])
            require_compatible(layout, SearchMethod.parse(self.ri[1]))
            if layout == DataLayout.HASH:
                raise ConfigError("nodes with children cannot use the hash layout")
            p = partition_from_dict(self.routing)
            if self.routing["kind"] == "pivots":
                if len(self.children) != p.domain_size:
                    raise ConfigError("pivot node needs one child per key range")
            else:
                slots = self.routing.get("slots")
                if slots is None or len(slots) != p.domain_size:
                    raise ConfigError("function routing needs one slot per partition value")
                if any(s < -1 or s >= len(self.children) for s in slots):
                    raise ConfigError("slot refers to a missing child")
        except KeyError as e:
            raise ConfigError(f"unknown name {e}") from e
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e
        for c in self.children:
            c.validate()


@dataclass(frozen=True)
class IndexConfig:
    root: ConfigNode
    capacity: int = DEFAULT_CAPACITY
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_index(cls, index: PhysicalIndex, **metadata: Any) -> "IndexConfig":
        return cls(ConfigNode.from_physical(index.root), index.capacity, dict(metadata))

    @property
    def structural_hash(self) -> int:
        return int.from_bytes(self.root.digest(), "little")

    @property
    def origin_size(self) -> int:
        return self.root.total_fill

    @property
    def node_count(self) -> int:
        return self.root.node_count

    def with_metadata(self, **metadata: Any) -> "IndexConfig":
        md = dict(self.metadata)
        md.update(metadata)
        return IndexConfig(self.root, self.capacity, md)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": FORMAT,
            "version": VERSION,
            "capacity": self.capacity,
            "metadata": self.metadata,
            "root": self.root.to_dict(),
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "IndexConfig":
        if d.get("format") != FORMAT:
            raise ConfigError(f"not an index configuration (format={d.get('format')!r})")
        if d.get("version") != VERSION:
            raise ConfigError(f"unsupported configuration version {d.get('version')!r}")
        if "root" not in d:
            raise ConfigError("configuration has no root node")
        return cls(ConfigNode.from_dict(d["root"]), int(d.get("capacity", DEFAULT_CAPACITY)), dict(d.get("metadata", {})))

    @classmethod
    def from_json(cls, text: str) -> "IndexConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from e
        return cls.from_dict(d)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "IndexConfig":
        return cls.from_json(Path(path).read_text())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IndexConfig) and self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return self.structural_hash
