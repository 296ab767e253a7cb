from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from ustatbound import partitions as P
from ustatbound.checks import brute_force_partitions


def blocks_as_sets(part):
    return {frozenset((lab.group, lab.index) for lab in b) for b in part.blocks}


def test_counts_hand_enumerated():
    assert len(P.enumerate_pi([1, 1, 1, 1])) == 4
    assert len(P.enumerate_pi([1, 1])) == 1
    assert len(P.enumerate_pi([2, 2])) == 2


def test_two_two_partitions_are_crossings():
    got = {frozenset(blocks_as_sets(p)) for p in P.enumerate_pi([2, 2])}
    a = frozenset({frozenset({(1, 1), (2, 1)}), frozenset({(1, 2), (2, 2)})})
    b = frozenset({frozenset({(1, 1), (2, 2)}), frozenset({(1, 2), (2, 1)})})
    assert got == {a, b}


def test_empty_labels_single_empty_partition():
    parts = P.enumerate_pi([0, 0, 0, 0])
    assert len(parts) == 1 and parts[0].size == 0
    assert P.filter_connected(parts, [(1, 2), (1, 3), (1, 4)]) == parts
    assert P.filter_connected(parts, [(1, 3), (2, 4)]) == []


def test_filter_no_fixed_edges_keeps_four_block():
    kept = P.filter_connected(P.enumerate_pi([1, 1, 1, 1]), [])
    assert len(kept) == 1 and kept[0].size == 1


def test_filter_expansion_edges():
    kept = P.filter_connected(P.enumerate_pi([1, 1, 1, 1]), [(1, 3), (2, 4)])
    shapes = {frozenset(frozenset(lab.group for lab in b) for b in p.blocks) for p in kept}
    assert shapes == {
        frozenset({frozenset({1, 2, 3, 4})}),
        frozenset({frozenset({1, 2}), frozenset({3, 4})}),
        frozenset({frozenset({1, 4}), frozenset({2, 3})}),
    }


def test_filter_empty_input():
    assert P.filter_connected([], [(1, 2)]) == []


@pytest.mark.parametrize("sizes", list(product(range(3), repeat=4)))
def test_enumeration_matches_brute_force(sizes):
    parts = P.enumerate_pi(sizes)
    assert len(parts) == len(brute_force_partitions(sizes))
    assert {frozenset(frozenset(b) for b in p.blocks) for p in parts} == set(brute_force_partitions(sizes))
    total = sum(sizes)
    for p in parts:
        assert p.size <= total // 2
        for b in p.blocks:
            assert len(b) >= 2 and len({lab.group for lab in b}) == len(b)


@pytest.mark.parametrize("edges", [(), ((1, 3), (2, 4)), ((1, 2), (3, 4)), ((1, 2), (1, 3), (1, 4))])
def test_connectivity_matches_bipartition_predicate(edges):
    for sizes in product(range(3), repeat=4):
        for p in P.enumerate_pi(sizes):
            assert P.group_graph_connected(p, edges, 4) == P.crosses_every_bipartition(p, edges, 4)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=4))
@settings(max_examples=40, deadline=None)
def test_enumeration_is_deterministic_and_unique(sizes):
    a = P.enumerate_pi(sizes)
    b = P.enumerate_pi(sizes)
    assert a == b
    assert len({frozenset(frozenset(x) for x in p.blocks) for p in a}) == len(a)


def test_negative_group_size_rejected():
    with pytest.raises(ValueError):
        P.enumerate_pi([1, -1])


def test_wiring_four_block():
    spec = P.WiringSpec((1, 1, 1, 1), fixed=(), free_counts=(0, 0, 0, 0))
    four = [p for p in P.enumerate_pi([1, 1, 1, 1]) if p.size == 1][0]
    w = P.build_wiring(spec, four)
    assert w.n_vars == 1 and all(w.args(c) == [0] for c in range(1, 5))


def test_wiring_two_blocks():
    spec = P.WiringSpec((1, 1, 1, 1), fixed=(), free_counts=(0, 0, 0, 0))
    part = P.Partition.from_blocks([[P.VarLabel(1, 1), P.VarLabel(3, 1)], [P.VarLabel(2, 1), P.VarLabel(4, 1)]])
    w = P.build_wiring(spec, part)
    assert w.args(1) == w.args(3) != w.args(2) == w.args(4)
    assert w.n_vars == 2


def test_wiring_counts_fixed_and_free():
    spec = P.WiringSpec((0, 0, 0, 0), fixed=((1, 3), (2, 4)), free_counts=(1, 1, 1, 1))
    w = P.build_wiring(spec, P.enumerate_pi([0, 0, 0, 0])[0])
    assert w.n_vars == 6
