import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpbandit.errors import InvalidInputError, StaleHandleError
from dpbandit.partition import (PartitionTree, SplitDecision, SubspaceId, max_level_bound,
                                split_threshold)


def brute_locate(active, x, m):
    """Scan every active leaf and return the ones whose closed-at-1 box holds x."""
    hits = []
    for c in active:
        side = float(m) ** -c.level
        inside = True
        for v, i in zip(x, c.cell):
            lo, hi = i * side, (i + 1) * side
            last = i == m ** c.level - 1
            if not (lo <= v < hi or (last and v == 1.0)):
                inside = False
                break
        if inside:
            hits.append(c)
    return hits


def test_root_only_tree_locates_root():
    tree = PartitionTree(2, 3)
    assert tree.locate([0.1, 0.99, 0.5]) == SubspaceId(0, (0, 0, 0))


def test_locate_after_one_split():
    tree = PartitionTree(2, 2)
    tree.split(tree.root)
    assert tree.locate([0.3, 0.7]) == SubspaceId(1, (0, 1))


def test_upper_boundary_maps_to_last_cell():
    tree = PartitionTree(2, 1)
    tree.split(tree.root)
    tree.split(SubspaceId(1, (1,)))
    assert tree.locate([1.0]) == SubspaceId(2, (3,))
    assert tree.locate([0.0]) == SubspaceId(1, (0,))


def test_locate_dimension_mismatch():
    tree = PartitionTree(2, 2)
    with pytest.raises(InvalidInputError):
        tree.locate([0.5])


@pytest.mark.parametrize("A,p,m,level,before,expected", [
    (1, 2, 2, 0, 0, SplitDecision.SPLIT),
    (5, 1, 2, 1, 3, SplitDecision.NO_SPLIT),
    (5, 1, 2, 1, 9, SplitDecision.SPLIT),
])
def test_record_arrival_threshold(A, p, m, level, before, expected):
    tree = PartitionTree(m, 1, A=A, p=p)
    c = tree.root
    for _ in range(level):
        tree.split(c)
        c = c.children(m)[0]
    tree.arrivals[c] = before
    assert tree.record_arrival(c) is expected
    assert tree.arrival_count(c) == before + 1


def test_split_threshold_values():
    assert split_threshold(5, 2, 1, 1) == 10
    assert split_threshold(1, 2, 2, 0) == 1
    # fractional thresholds round up
    assert split_threshold(1.5, 2, 1, 0) == 2
    assert split_threshold(0.1, 2, 1, 0) == 1


def test_record_arrival_on_inactive_node():
    tree = PartitionTree(2, 2)
    tree.split(tree.root)
    with pytest.raises(StaleHandleError):
        tree.record_arrival(tree.root)
    with pytest.raises(StaleHandleError):
        tree.record_arrival(SubspaceId(2, (0, 0)))


def test_split_replaces_node_with_children():
    tree = PartitionTree(3, 2)
    kids = tree.split(tree.root)
    assert len(kids) == 9
    assert set(tree.active()) == set(kids)
    assert all(tree.arrival_count(k) == 0 for k in kids)
    with pytest.raises(StaleHandleError):
        tree.split(tree.root)


def test_children_tile_parent():
    c = SubspaceId(2, (1, 3))
    kids = c.children(2)
    assert {k.parent(2) for k in kids} == {c}
    (lo0, hi0), (lo1, hi1) = c.bounds(2)
    vol = sum(np.prod([hi - lo for lo, hi in k.bounds(2)]) for k in kids)
    assert math.isclose(vol, (hi0 - lo0) * (hi1 - lo1))


def test_frozen_tree_never_splits():
    tree = PartitionTree(2, 2, A=1, p=1, base_level=2, frozen=True)
    assert len(list(tree.active())) == 16
    c = tree.locate([0.1, 0.1])
    for _ in range(100):
        assert tree.record_arrival(c) is SplitDecision.NO_SPLIT
    with pytest.raises(InvalidInputError):
        tree.split(c)


def test_bad_construction():
    with pytest.raises(InvalidInputError):
        PartitionTree(1, 2)
    with pytest.raises(InvalidInputError):
        PartitionTree(2, 9)
    with pytest.raises(InvalidInputError):
        PartitionTree(4, 7)  # 4**7 children per split
    with pytest.raises(InvalidInputError):
        PartitionTree(2, 2, A=0)


def _check_tiling(tree, rng, n_probe=300):
    leaves = list(tree.active())
    vol = sum(float(tree.m) ** (-tree.d * c.level) for c in leaves)
    assert math.isclose(vol, 1.0, rel_tol=1e-12)
    probes = np.vstack([rng.random((n_probe, tree.d)),
                        np.ones((1, tree.d)), np.zeros((1, tree.d))])
    for x in probes:
        hits = brute_locate(leaves, x, tree.m)
        assert hits == [tree.locate(x)]


@settings(max_examples=30, deadline=None)
@given(m=st.integers(2, 3), d=st.integers(1, 3), A=st.sampled_from([0.5, 1.0, 3.0]),
       p=st.sampled_from([1.0, 1.5, 2.0]), seed=st.integers(0, 10_000))
def test_random_streams_keep_tiling(m, d, A, p, seed):
    rng = np.random.default_rng(seed)
    tree = PartitionTree(m, d, A=A, p=p)
    n = 400
    for x in rng.random((n, d)) ** 2:
        c, kids = tree.observe(x)
        if kids is None:
            assert tree.arrival_count(c) < tree.threshold(c.level)
    _check_tiling(tree, rng, 50)
    assert tree.max_level <= max_level_bound(n, A, m, p)


def test_observe_counts_match_arrivals():
    # every arrival since the last split of a node is accounted for
    rng = np.random.default_rng(4)
    tree = PartitionTree(2, 2, A=2, p=1)
    seen = {}
    for x in rng.random((2000, 2)):
        c, kids = tree.observe(x)
        seen[c] = seen.get(c, 0) + 1
        if kids is not None:
            assert seen[c] == tree.threshold(c.level)
    for c in tree.active():
        assert tree.arrival_count(c) == seen.get(c, 0)


def test_max_level_bound_examples():
    assert max_level_bound(1, 1, 2, 1) == 1
    assert max_level_bound(1024, 1, 2, 2) == 6
    # brute force: the deepest reachable level is when every arrival lands in one node
    for T in (10, 100, 1000):
        tree = PartitionTree(2, 1, A=1, p=1)
        for _ in range(T):
            tree.observe([0.0])
        assert tree.max_level <= max_level_bound(T, 1, 2, 1)


def test_subspace_id_str_and_contains():
    c = SubspaceId(1, (0, 1))
    assert str(c) == "L1:0.1"
    assert c.contains([0.2, 0.9], 2)
    assert not c.contains([0.6, 0.9], 2)
    assert c.contains([0.0, 1.0], 2)


def test_active_enumeration_matches_grid():
    tree = PartitionTree(2, 2, base_level=1)
    expected = {SubspaceId(1, cell) for cell in itertools.product(range(2), repeat=2)}
    assert set(tree.active()) == expected
