"""Bonsai Merkle Tree over counter blocks.

Nodes are labeled breadth-first with the root at 0, so parent and
ancestor arithmetic is pure integer math: parent(n) = (n - 1) // arity.
Leaves hash counter blocks; interior nodes hash their children's tags.
Only the root lives in the persist domain (the ``root_register``);
interior nodes are volatile and rebuilt from counters at recovery.

The tree is stored sparsely: an absent node has the well-defined value of
an all-zero-counter subtree, so incremental updates over a huge address
space stay cheap and still agree with full recomputation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from .crypto import TAG_BYTES, KeySet, hash_node
from .model_core import SplitCounter


@dataclass(frozen=True)
class BmtGeometry:
    """Tree shape: arity and level count (root = level 1, leaves = level `levels`)."""

    arity: int = 8
    levels: int = 9

    def __post_init__(self) -> None:
        if self.arity < 2:
            raise ValueError("arity must be >= 2")
        if self.levels < 2:
            raise ValueError("levels must be >= 2")

    @property
    def leaf_count(self) -> int:
        return self.arity ** (self.levels - 1)

    @property
    def first_leaf(self) -> int:
        return (self.arity ** (self.levels - 1) - 1) // (self.arity - 1)

    @property
    def node_count(self) -> int:
        return (self.arity ** self.levels - 1) // (self.arity - 1)

    def parent(self, label: int) -> int:
        if label <= 0:
            raise ValueError("root has no parent")
        return (label - 1) // self.arity

    def children(self, label: int) -> range:
        return range(self.arity * label + 1, self.arity * label + self.arity + 1)

    def level_of(self, label: int) -> int:
        if label < 0 or label >= self.node_count:
            raise ValueError(f"label out of range: {label}")
        level = 1
        while label > 0:
            label = (label - 1) // self.arity
            level += 1
        return level

    def is_leaf(self, label: int) -> bool:
        return self.first_leaf <= label < self.first_leaf + self.leaf_count

    def leaf_for_page(self, page: int) -> int:
        if not 0 <= page < self.leaf_count:
            raise ValueError(f"page {page} outside protected capacity ({self.leaf_count} pages)")
        return self.first_leaf + page

    def page_for_leaf(self, leaf: int) -> int:
        return leaf - self.first_leaf

    def update_path(self, leaf_label: int) -> list:
        """Labels from the leaf to the root, inclusive; length == levels."""
        if not self.is_leaf(leaf_label):
            raise ValueError(f"label {leaf_label} is not a leaf")
        path = [leaf_label]
        node = leaf_label
        while node > 0:
            node = (node - 1) // self.arity
            path.append(node)
        return path

    def lca(self, leaf_a: int, leaf_b: int) -> int:
        """Deepest common node of the two leaves' update paths."""
        path_a = self.update_path(leaf_a)
        path_b = self.update_path(leaf_b)
        lca = 0
        for a, b in zip(reversed(path_a), reversed(path_b)):
            if a != b:
                break
            lca = a
        return lca


@dataclass
class IntegrityFailure:
    """First point where a hash path disagrees with stored state."""

    level: int
    label: int
    detail: str = ""


_ZERO_COUNTER_BLOCK = SplitCounter().to_block_bytes()


class BmtState:
    """Sparse node values plus the always-persistent root register.

    ``counter_lookup`` maps a page number to its current SplitCounter (or
    None for never-written pages); it backs leaf recomputation when no
    explicit counter block is supplied.
    """

    def __init__(
        self,
        geometry: BmtGeometry,
        keys: KeySet,
        counter_lookup: Optional[Callable[[int], Optional[SplitCounter]]] = None,
    ) -> None:
        self.geometry = geometry
        self.keys = keys
        self.counter_lookup = counter_lookup
        self.values: dict = {}
        self._defaults: dict = {}
        self.root_register = self.default_value(1)

    def default_value(self, level: int) -> int:
        """Value of any untouched node at `level` (all-zero-counter subtree)."""
        cached = self._defaults.get(level)
        if cached is not None:
            return cached
        if level == self.geometry.levels:
            value = hash_node(_ZERO_COUNTER_BLOCK, self.keys)
        else:
            child = self.default_value(level + 1)
            value = hash_node(child.to_bytes(TAG_BYTES, "little") * self.geometry.arity, self.keys)
        self._defaults[level] = value
        return value

    def node_value(self, label: int) -> int:
        stored = self.values.get(label)
        if stored is not None:
            return stored
        return self.default_value(self.geometry.level_of(label))

    def compute_node(self, label: int, counter_block: Optional[SplitCounter] = None) -> int:
        """Recompute a node's value from its current children (or counter block).

        Reads happen here, at issue time; committing the value is separate
        so overlapped updates observe pre-update children.
        """
        if self.geometry.is_leaf(label):
            if counter_block is None and self.counter_lookup is not None:
                counter_block = self.counter_lookup(self.geometry.page_for_leaf(label))
            block = counter_block.to_block_bytes() if counter_block else _ZERO_COUNTER_BLOCK
            return hash_node(block, self.keys)
        payload = b"".join(
            self.node_value(child).to_bytes(TAG_BYTES, "little")
            for child in self.geometry.children(label)
        )
        return hash_node(payload, self.keys)

    def commit_node(self, label: int, value: int) -> None:
        self.values[label] = value

    def apply_node_update(self, label: int, counter_block: Optional[SplitCounter] = None) -> int:
        value = self.compute_node(label, counter_block)
        self.commit_node(label, value)
        return value

    def root(self) -> int:
        return self.node_value(0)

    def update_root_register(self) -> int:
        self.root_register = self.node_value(0)
        return self.root_register

    def verify_path(self, leaf_label: int) -> Optional[IntegrityFailure]:
        """Re-hash from one leaf to the root and compare against stored state.

        Returns None when everything matches (including the root register),
        otherwise the first mismatching level walking leaf to root.
        """
        geometry = self.geometry
        recomputed = self.compute_node(leaf_label)
        if recomputed != self.node_value(leaf_label):
            return IntegrityFailure(geometry.levels, leaf_label, "leaf hash mismatch")
        node = leaf_label
        level = geometry.levels
        while node > 0:
            node = geometry.parent(node)
            level -= 1
            recomputed = self.compute_node(node)
            if recomputed != self.node_value(node):
                return IntegrityFailure(level, node, "interior hash mismatch")
        if self.node_value(0) != self.root_register:
            return IntegrityFailure(1, 0, "root register mismatch")
        return None


def rebuild_from_counters(
    counters: Mapping[int, SplitCounter], geometry: BmtGeometry, keys: KeySet
) -> BmtState:
    """Reconstruct the volatile tree bottom-up from durable counter blocks.

    This is the recovery path: interior nodes are never persisted, so the
    post-crash verifier recomputes them from whatever counters survived and
    compares the resulting root against the root register.
    """
    state = BmtState(geometry, keys, counter_lookup=lambda page: counters.get(page))
    frontier = set()
    for page in sorted(counters):
        leaf = geometry.leaf_for_page(page)
        state.apply_node_update(leaf, counters[page])
        frontier.add(geometry.parent(leaf))
    level = geometry.levels - 1
    while level >= 1:
        next_frontier = set()
        for label in sorted(frontier):
            state.apply_node_update(label)
            if label > 0:
                next_frontier.add(geometry.parent(label))
        frontier = next_frontier
        level -= 1
    return state
