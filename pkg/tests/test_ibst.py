from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from combi import InvalidArgument, InvalidState
from combi.bitcode import BitCode, BitDataset, BitOrdering
from combi.ibst import (
    HammingSearchBudget, IbstTree, build_ibst, compress, ibst_insert, ibst_knn, ibst_search,
    radius_schedule,
)
from oracles import brute_knn, combi_structure, ibst_node_count, naive_hd


def small_tree():
    t = IbstTree(2)
    for i, s in enumerate(["00", "01", "10"]):
        ibst_insert(t, BitCode.from_string(s), i)
    return t


def code_sets(max_bits=12):
    return st.integers(1, max_bits).flatmap(
        lambda b: st.lists(st.text("01", min_size=b, max_size=b), min_size=1, max_size=40)
    )


def test_insert_hand_trace():
    t = small_tree()
    assert t.node_count == 6 and t.leaf_count == 3
    nodes = dict(t.nodes())
    leaves = [n for n in nodes.values() if n.is_leaf]
    assert sorted(n.payload for n in leaves) == [(0,), (1,), (2,)]
    assert all(n.depth == 2 for n in leaves)
    internal = [n for n in nodes.values() if not n.is_leaf]
    assert sorted(n.depth for n in internal) == [0, 1, 1]


def test_duplicate_insert():
    t = small_tree()
    ibst_insert(t, BitCode.from_string("01"), 9)
    assert t.node_count == 6 and t.leaf_count == 3
    assert sorted(n.payload for _, n in t.nodes() if n.is_leaf) == [(0,), (1, 9), (2,)]


def test_length_mismatch():
    with pytest.raises(InvalidArgument):
        ibst_insert(IbstTree(3), BitCode(2, 0), 0)
    with pytest.raises(InvalidArgument):
        ibst_search(small_tree(), BitCode(3, 0), HammingSearchBudget(0, 1))
    with pytest.raises(InvalidArgument):
        HammingSearchBudget(2, 1)


def test_leaf_count_is_distinct_codes():
    ds = BitDataset.random(10_000, 16, seed=4)
    t = build_ibst(ds)
    assert t.leaf_count == len(set(ds.words[:, 0].tolist()))
    assert len(t) == 10_000


def test_search_hand_trace():
    t = small_tree()
    q = BitCode.from_string("11")
    assert ibst_search(t, q, HammingSearchBudget(0, 0)) == []
    assert sorted(ibst_search(t, q, HammingSearchBudget(0, 1))) == [(1, 1), (2, 1)]
    assert ibst_knn(t, q, 1)[0].id == 1


@given(code_sets(), st.data())
def test_search_exact_against_scan(codes, data):
    b = len(codes[0])
    t = IbstTree(b)
    for i, c in enumerate(codes):
        ibst_insert(t, BitCode.from_string(c), i)
    assert t.node_count == ibst_node_count(codes)
    q = data.draw(st.text("01", min_size=b, max_size=b))
    lo = data.draw(st.integers(0, b))
    hi = data.draw(st.integers(lo, b))
    got = sorted(ibst_search(t, BitCode.from_string(q), HammingSearchBudget(lo, hi)))
    want = sorted((i, naive_hd(c, q)) for i, c in enumerate(codes) if lo <= naive_hd(c, q) <= hi)
    assert got == want


@given(code_sets(), st.data())
def test_knn_exact(codes, data):
    b = len(codes[0])
    t = IbstTree(b)
    for i, c in enumerate(codes):
        ibst_insert(t, BitCode.from_string(c), i)
    q = data.draw(st.text("01", min_size=b, max_size=b))
    k = data.draw(st.integers(1, len(codes) + 2))
    got = [(n.hd, n.id) for n in ibst_knn(t, BitCode.from_string(q), k)]
    assert got == brute_knn(codes, list(range(len(codes))), q, k)


def test_knn_random_32_bit():
    ds = BitDataset.random(1000, 32, seed=2)
    t = build_ibst(ds)
    strings = [c.to_string() for c in ds.codes]
    for q in BitDataset.random(20, 32, seed=3).codes:
        for k in (1, 10):
            got = [(n.hd, n.id) for n in ibst_knn(t, q, k)]
            assert got == brute_knn(strings, list(range(1000)), q.to_string(), k)


def test_knn_empty_tree_and_bad_k():
    assert ibst_knn(IbstTree(4), BitCode(4, 0), 3) == []
    with pytest.raises(InvalidArgument):
        ibst_knn(small_tree(), BitCode(2, 0), 0)


def test_radius_schedule_bands_are_disjoint_and_cover():
    for b in (1, 2, 7, 64):
        bands = list(radius_schedule(b))
        covered = [d for lo, hi in bands for d in range(lo, hi + 1)]
        assert covered == list(range(b + 1))
    assert list(radius_schedule(10))[:5] == [(0, 0), (1, 1), (2, 2), (3, 4), (5, 8)]


def test_compress_hand_trace():
    ct = compress(small_tree())
    assert ct.node_count == 5 and ct.leaf_count == 3
    assert ct.structure() == combi_structure(["00", "01", "10"], [0, 1, 2])


def test_compress_single_code_and_empty():
    t = IbstTree(40)
    ibst_insert(t, BitCode(40, 12345), 7)
    ct = compress(t)
    assert ct.node_count == 1 and ct.structure() == ((0, 40, (7,)),)
    with pytest.raises(InvalidState):
        compress(IbstTree(4))


def test_compress_full_binary_on_random_64_bit():
    ds = BitDataset.random(10_000, 64, seed=9)
    ct = compress(build_ibst(ds))
    assert ct.leaf_count == 10_000
    assert ct.node_count == 2 * ct.leaf_count - 1


@given(code_sets(70))
def test_compress_matches_structural_oracle(codes):
    ds = BitDataset.from_strings(codes)
    ct = compress(build_ibst(ds))
    assert ct.structure() == combi_structure(codes, list(range(len(codes))))
    payload_ids = Counter(i for *_, p in ct.structure() if p for i in p)
    assert payload_ids == Counter(range(len(codes)))


def test_compress_keeps_ordering_label():
    o = BitOrdering.reverse(8)
    ds = BitDataset.random(30, 8, seed=1).permuted(o)
    assert compress(build_ibst(ds), o).ordering == o
