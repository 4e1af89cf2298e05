"""Trie checks against brute-force scans of the item table."""

import numpy as np
import pytest

from dualgr import sid_index as S


def test_single_item_path():
    trie = S.SidTrie.build([(42, (1, 2, 3), 1.0)], (4, 4, 4))
    assert trie.lookup((1, 2, 3), 5) == [42]
    assert trie.valid_continuations(()) == {1}
    assert trie.valid_continuations((1,)) == {2}
    assert trie.valid_continuations((1, 2)) == {3}
    assert trie.n_items == 1 and trie.n_sids == 1


def test_shared_prefix_continuations():
    items = [(1, (1, 2, 0), 1.0), (2, (1, 2, 3), 1.0)]
    trie = S.SidTrie.build(items, (4, 4, 4))
    assert trie.valid_continuations((1, 2)) == {0, 3}


def test_lookup_popularity_order_and_k():
    items = [
        (10, (0, 0), 1.0),
        (11, (0, 0), 5.0),
        (12, (0, 0), 5.0),
        (13, (0, 0), 2.0),
        (14, (0, 0), 0.5),
    ]
    trie = S.SidTrie.build(items, (2, 2))
    # descending popularity, ascending id on ties
    assert trie.lookup((0, 0), 3) == [11, 12, 13]
    assert trie.lookup((0, 0), 99) == [11, 12, 13, 10, 14]
    assert trie.lookup((0, 0), 0) == []
    assert trie.lookup((1, 1), 4) == []


def test_unknown_prefix_empty_set():
    trie = S.SidTrie.build([(1, (0, 0), 1.0)], (2, 2))
    assert trie.valid_continuations((1,)) == set()


def test_rejects_bad_tokens_and_duplicates():
    with pytest.raises(S.SidIndexError, match="item 7"):
        S.SidTrie.build([(7, (5, 0), 1.0)], (4, 4))
    with pytest.raises(S.SidIndexError, match="duplicate"):
        S.SidTrie.build([(1, (0, 0), 1.0), (1, (1, 1), 1.0)], (2, 2))
    trie = S.SidTrie.build([(1, (0, 0), 1.0)], (2, 2))
    with pytest.raises(S.SidIndexError):
        trie.lookup((0,), 1)
    with pytest.raises(S.SidIndexError):
        trie.valid_continuations((0, 0))


def _random_corpus(seed, n_items, level_sizes):
    rng = np.random.default_rng(seed)
    rows = []
    for item_id in range(n_items):
        sid = tuple(int(rng.integers(k)) for k in level_sizes)
        rows.append((item_id, sid, float(rng.random())))
    return rows


def test_matches_brute_force_scan_on_random_corpus():
    level_sizes = (5, 4, 3)
    rows = _random_corpus(0, 2000, level_sizes)
    trie = S.SidTrie.build(rows, level_sizes)
    assert trie.n_items == 2000

    # brute-force prefix scan oracle over the raw item table
    rng = np.random.default_rng(1)
    prefixes = [()]
    for _ in range(50):
        depth = int(rng.integers(0, 3))
        prefixes.append(tuple(int(rng.integers(level_sizes[l])) for l in range(depth)))
    for prefix in prefixes:
        expected = {
            sid[len(prefix)]
            for _, sid, _ in rows
            if sid[: len(prefix)] == prefix
        }
        assert trie.valid_continuations(prefix) == expected

    # full SID lookups ordered by (-popularity, item)
    for _ in range(50):
        sid = tuple(int(rng.integers(k)) for k in level_sizes)
        expected = sorted(
            ((item, pop) for item, s, pop in rows if s == sid),
            key=lambda pair: (-pair[1], pair[0]),
        )
        assert trie.lookup(sid, 4) == [item for item, _ in expected[:4]]


def test_leaves_partition_the_corpus():
    level_sizes = (4, 4)
    rows = _random_corpus(3, 300, level_sizes)
    trie = S.SidTrie.build(rows, level_sizes)
    seen = []
    for sid, items in trie.iter_sids():
        assert len(items) >= 1
        for item_id, _ in items:
            seen.append(item_id)
        # continuation-reachability: every leaf is reachable via valid sets
        assert sid[0] in trie.valid_continuations(())
        assert sid[1] in trie.valid_continuations((sid[0],))
    assert sorted(seen) == list(range(300))


def test_continuation_iff_nonempty_subtree():
    level_sizes = (3, 3)
    rows = _random_corpus(5, 40, level_sizes)
    trie = S.SidTrie.build(rows, level_sizes)
    for t0 in range(3):
        in_set = t0 in trie.valid_continuations(())
        has_items = any(trie.lookup((t0, t1), 1) for t1 in range(3))
        assert in_set == has_items


def test_iter_sids_lexicographic():
    rows = [(i, sid, 0.0) for i, sid in enumerate([(1, 0), (0, 1), (0, 0), (1, 1)])]
    trie = S.SidTrie.build(rows, (2, 2))
    assert [sid for sid, _ in trie.iter_sids()] == [(0, 0), (0, 1), (1, 0), (1, 1)]
