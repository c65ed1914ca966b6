from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from combi import InvalidArgument
from combi.bitcode import BitCode, BitDataset
from combi.forest import forest_build
from combi.ibst import build_ibst
from combi.metrics import (
    GroundTruth, bench, exact_baseline, fdr, ground_truth, lambda_distribution,
    linear_scan_knn, precision_at_k, query_metrics, speedup, sweep,
)
from combi.tree import MutateBudget, Neighbor
from oracles import brute_knn

N = Neighbor


def test_linear_scan_examples():
    ds = BitDataset.from_strings(["00", "01", "10"])
    assert linear_scan_knn(ds, BitCode.from_string("00"), 2) == [N(0, 0), N(1, 1)]
    assert linear_scan_knn(ds, BitCode.from_string("10"), 1) == [N(2, 0)]
    assert linear_scan_knn(ds, BitCode.from_string("11"), 3) == [N(1, 1), N(2, 1), N(0, 2)]
    assert len(linear_scan_knn(ds, BitCode.from_string("11"), 10)) == 3


def test_linear_scan_errors():
    ds = BitDataset.from_strings(["00"])
    with pytest.raises(InvalidArgument):
        linear_scan_knn(BitDataset(np.zeros((0, 1), np.uint64), 2), BitCode(2, 0), 1)
    with pytest.raises(InvalidArgument):
        linear_scan_knn(ds, BitCode(2, 0), 0)
    with pytest.raises(InvalidArgument):
        linear_scan_knn(ds, BitCode(3, 0), 1)


@given(st.integers(1, 130).flatmap(lambda b: st.lists(st.text("01", min_size=b, max_size=b), min_size=1, max_size=30)),
       st.data())
def test_linear_scan_matches_brute(codes, data):
    b = len(codes[0])
    ids = data.draw(st.lists(st.integers(0, 2**64 - 1), min_size=len(codes), max_size=len(codes), unique=True))
    ds = BitDataset.from_strings(codes, ids)
    q = data.draw(st.text("01", min_size=b, max_size=b))
    k = data.draw(st.integers(1, len(codes) + 1))
    got = [(n.hd, n.id) for n in linear_scan_knn(ds, BitCode.from_string(q), k)]
    assert got == brute_knn(codes, ids, q, k)


def test_precision_examples():
    gt = GroundTruth([N(2, 1)])
    assert precision_at_k([N(2, 1)], gt, 1) == 1.0
    assert precision_at_k([N(1, 1)], gt, 1) == 1.0      # tie at d_q counts
    assert precision_at_k([], GroundTruth([N(0, 0)] * 1), 10) == 0.0
    with pytest.raises(InvalidArgument):
        precision_at_k([], gt, 0)
    with pytest.raises(InvalidArgument):
        precision_at_k([N(1, 1), N(2, 1)], gt, 1)


def test_exact_output_has_precision_one():
    ds = BitDataset.random(500, 32, seed=1)
    qs = BitDataset.random(30, 32, seed=2)
    for q, gt in zip(qs.codes, ground_truth(ds, qs, 10)):
        assert precision_at_k(linear_scan_knn(ds, q, 10), gt, 10) == 1.0


def test_fdr_examples():
    assert fdr([1.0, 0.8]) == pytest.approx(0.1, abs=1e-15)
    assert fdr([1.0] * 5) == 0.0
    with pytest.raises(InvalidArgument):
        fdr([])


def test_lambda_examples():
    gt = GroundTruth([N(2, 1)])
    assert query_metrics([N(0, 2)], gt, 1).lambda_q == Counter({1: 1})
    assert lambda_distribution([([N(2, 1)], gt)], 1) == Counter()
    assert lambda_distribution([([N(0, 2)], gt), ([N(5, 4)], gt)], 1) == Counter({1: 1, 3: 1})


def test_speedup_ratio():
    assert speedup(2.0, 0.5) == 4.0
    assert speedup(1.0, 0.0) == float("inf")
    with pytest.raises(InvalidArgument):
        speedup(-1.0, 1.0)


def test_fdr_equals_direct_count_random():
    ds = BitDataset.random(2000, 32, seed=3)
    qs = BitDataset.random(200, 32, seed=4)
    f = forest_build(ds, 2)
    r = bench(ds, qs, f, 10, MutateBudget(0, 1))
    truths = ground_truth(ds, qs, 10)
    precisions, false = [], 0
    for q, gt in zip(qs.codes, truths):
        res = f.knn(q, 10, MutateBudget(0, 1), extend=True)[0]
        d = gt.radius(10)
        precisions.append(sum(n.hd <= d for n in res) / 10)
        false += sum(n.hd > d for n in res)
    assert abs(fdr(precisions) - false / (200 * 10)) < 1e-12
    assert abs(r.fdr - (1 - r.mean_precision)) < 1e-12
    assert r.lambda_identity_exact()
    assert r.lambda_count == Fraction(200 * 10) * (1 - Fraction(r.hits, 2000))
    assert all(k >= 1 for k in r.lambda_)


def test_bench_ibst_is_exact():
    ds = BitDataset.random(1000, 24, seed=5)
    qs = BitDataset.random(40, 24, seed=6)
    r = bench(ds, qs, build_ibst(ds), 5)
    assert r.mean_precision == 1.0 and r.fdr == 0.0 and r.lambda_count == 0
    assert r.engine == "ibst"


def test_bench_report_fields():
    ds = BitDataset.random(1000, 32, seed=7)
    qs = BitDataset.random(20, 32, seed=8)
    r = bench(ds, qs, forest_build(ds, 4), 10, MutateBudget(0, 2))
    d = r.to_dict()
    for key in ("mean_precision", "fdr", "lambda", "speedup", "access_pct", "engine_time", "baseline_time"):
        assert key in d
    assert 0 < r.access_pct <= 100 and r.speedup > 0
    assert (r.trees, r.mutates) == (4, 2)
    with pytest.raises(InvalidArgument):
        bench(ds, BitDataset.random(3, 16), forest_build(ds, 1), 10)
    with pytest.raises(InvalidArgument):
        bench(ds, qs, "scan", 10)


def test_bench_rejects_lying_engine():
    # distances are re-measured, so an engine reporting false HDs gains nothing
    from combi.metrics import evaluate

    ds = BitDataset.random(300, 32, seed=9)
    qs = BitDataset.random(10, 32, seed=10)
    base = exact_baseline(ds, qs, 5)
    liar = lambda q: ([N(i, 0) for i in range(290, 295)], 5)
    r = evaluate(ds, qs, liar, 5, base, "liar")
    honest = sum(precision_at_k(
        [N(i, int(np.bitwise_count(ds.words[i] ^ q.words).sum())) for i in range(290, 295)], gt, 5)
        for q, gt in zip(qs.codes, base.truths)) / 10
    assert r.mean_precision == pytest.approx(honest)


def test_sweep_sorted_with_baseline_and_monotone():
    ds = BitDataset.random(3000, 32, seed=11)
    qs = BitDataset.random(50, 32, seed=12)
    reps = sweep(ds, qs, [(2, 1), (1, 0), (1, 2), (2, 0), (1, 1), (2, 2)], 10, extend=False)
    cells = [(r.trees, r.mutates) for r in reps[:-1]]
    assert cells == sorted(cells)
    assert reps[-1].engine == "exact-scan" and reps[-1].mean_precision == 1.0
    by = {(r.trees, r.mutates): r.mean_precision for r in reps[:-1]}
    for t in (1, 2):
        assert by[(t, 0)] <= by[(t, 1)] <= by[(t, 2)]
    with pytest.raises(InvalidArgument):
        sweep(ds, qs, [], 10)


def test_short_results_break_the_fdr_identity_without_fill():
    # with fewer than k results per query, sum |Q\G| / (N k) < 1 - mean precision;
    # bench fills result lists to k so the two agree
    from combi.metrics import evaluate, forest_engine

    ds = BitDataset.random(2000, 32, seed=13)
    qs = BitDataset.random(100, 32, seed=14)
    base = exact_baseline(ds, qs, 10)
    f = forest_build(ds, 1)
    plain = evaluate(ds, qs, forest_engine(f, 10, MutateBudget(0, 0), extend=False), 10, base, "combi")
    assert plain.short_queries > 0
    assert plain.fdr < 1 - plain.mean_precision
    filled = bench(ds, qs, f, 10, MutateBudget(0, 0), baseline=base)
    assert filled.short_queries == 0
    assert abs(filled.fdr - (1 - filled.mean_precision)) < 1e-12
