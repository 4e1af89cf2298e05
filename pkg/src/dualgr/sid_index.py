"""Prefix trie over corpus SIDs: the map from decoded SIDs back to items
and the source of valid continuations for constrained decoding.

Immutable after build; safe for unlimited concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .datatypes import Sid


class SidIndexError(ValueError):
    pass


@dataclass
class _Node:
    children: dict = field(default_factory=dict)  # token -> _Node
    items: list = field(default_factory=list)  # leaves only: [(item_id, popularity)]


class SidTrie:
    """Token trie of depth L; each leaf lists the items carrying that SID,
    ranked by descending popularity then ascending item id."""

    def __init__(self, depth: int, level_sizes):
        self.depth = depth
        self.level_sizes = tuple(level_sizes)
        self.root = _Node()
        self.n_items = 0
        self.n_sids = 0

    @classmethod
    def build(cls, items, level_sizes) -> "SidTrie":
        """items: iterable of (item_id, sid, popularity)."""
        level_sizes = tuple(level_sizes)
        depth = len(level_sizes)
        trie = cls(depth, level_sizes)
        seen: set[int] = set()
        for item_id, sid, popularity in items:
            if len(sid) != depth:
                raise SidIndexError(f"item {item_id}: sid depth {len(sid)} != {depth}")
            for level, token in enumerate(sid):
                if not 0 <= token < level_sizes[level]:
                    raise SidIndexError(
                        f"item {item_id}: token {token} out of range at level {level + 1}"
                    )
            if item_id in seen:
                raise SidIndexError(f"duplicate item id {item_id}")
            seen.add(item_id)
            node = trie.root
            for token in sid:
                node = node.children.setdefault(int(token), _Node())
            node.items.append((int(item_id), float(popularity)))
            trie.n_items += 1
        trie.n_sids = sum(1 for _ in trie.iter_sids())
        for _, leaf in trie._iter_leaves():
            leaf.items.sort(key=lambda pair: (-pair[1], pair[0]))
        return trie

    def _find(self, prefix) -> _Node | None:
        node = self.root
        for token in prefix:
            node = node.children.get(int(token))
            if node is None:
                return None
        return node

    def lookup(self, sid: Sid, k: int) -> list:
        """Up to k item ids sharing the complete SID; unknown SID -> []."""
        if len(sid) != self.depth:
            raise SidIndexError(f"lookup needs a complete sid of depth {self.depth}")
        if k <= 0:
            return []
        node = self._find(sid)
        if node is None:
            return []
        return [item_id for item_id, _ in node.items[:k]]

    def valid_continuations(self, prefix) -> set:
        """Tokens t such that some corpus item extends prefix with t."""
        if len(prefix) >= self.depth:
            raise SidIndexError(f"prefix depth {len(prefix)} must be < {self.depth}")
        node = self._find(prefix)
        if node is None:
            return set()
        return set(node.children)

    def _iter_leaves(self):
        stack = [((), self.root)]
        while stack:
            prefix, node = stack.pop()
            if len(prefix) == self.depth:
                yield prefix, node
                continue
            for token in sorted(node.children, reverse=True):
                stack.append((prefix + (token,), node.children[token]))

    def iter_sids(self):
        """All corpus-realizable SIDs with their ranked item lists, in
        lexicographic order."""
        for prefix, node in self._iter_leaves():
            yield prefix, list(node.items)


def build_from_sid_rows(rows, level_sizes, popularity: dict | None = None) -> SidTrie:
    """rows: [(item_id, sid), ...]; popularity defaults to 0 per item."""
    pop = popularity or {}
    return SidTrie.build(
        ((item_id, sid, pop.get(item_id, 0.0)) for item_id, sid in rows), level_sizes
    )
