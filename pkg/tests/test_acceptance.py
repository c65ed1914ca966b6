"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary (see ``conftest.py``) and by running this file
directly with ``python tests/test_acceptance.py``.
"""

import json
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from combi.bitcode import BitDataset, generate_hyperplanes, hash_vectors
from combi.cluster import ShardPlan, cluster_build, cluster_search
from combi.forest import default_orderings, forest_build
from combi.ibst import build_ibst, compress, ibst_knn
from combi.metrics import bench, exact_baseline, linear_scan_knn
from combi.synth import gaussian_mixture
from combi.tree import CombiTree, MutateBudget

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


# -- 1 --------------------------------------------------------------------


def test_criterion_1_ibst_oracle_exactness():
    t0 = time.perf_counter()
    ds = BitDataset.random(2000, 32, seed=101)
    queries = BitDataset.random(200, 32, seed=102).codes
    tree = build_ibst(ds)
    bad = 0
    for q in queries:
        for k in (1, 10, 100):
            got = Counter(n.hd for n in ibst_knn(tree, q, k))
            want = Counter(n.hd for n in linear_scan_knn(ds, q, k))
            bad += got != want
    dt = time.perf_counter() - t0
    record(1, bad == 0 and dt < 10, f"{bad} mismatches over 600 (query, k) pairs in {dt:.2f}s (limit 10s)")


# -- 2 & 3 ----------------------------------------------------------------

_FULL_BINARY_CHECKED: list[tuple[int, int]] = []


def test_criterion_2_structural_equivalence():
    rng = np.random.default_rng(202)
    mismatches = 0
    cases = 0
    for i in range(50):
        b = (16, 64, 256)[i % 3]
        n = int(rng.integers(1, 5001))
        ds = BitDataset.random(n, b, seed=1000 + i)
        if i % 5 == 0 and n > 1:
            # duplicate some codes so multi-id leaves are exercised
            rows = rng.integers(0, n, size=n)
            ds = BitDataset(ds.words[rows], b)
        for ordering in default_orderings(b, 4):
            words = ordering.apply_words(ds.words)
            online = CombiTree(b, ordering)
            online.insert_words(words, ds.ids)
            offline = compress(build_ibst(BitDataset(words, b, ds.ids)), ordering)
            same = online.structure() == offline.structure()
            mismatches += not same
            cases += 1
            for t in (online, offline):
                _FULL_BINARY_CHECKED.append((t.node_count, t.leaf_count))
    record(2, mismatches == 0, f"{mismatches} structural mismatches over {cases} (dataset, ordering) cases")


def test_criterion_3_compression_identity():
    ratios = {}
    for b in (16, 32, 64, 256):
        ds = BitDataset.random(100_000, b, seed=303)
        ibst = build_ibst(ds)
        combi = compress(ibst)
        online = forest_build(ds, 4)
        _FULL_BINARY_CHECKED.append((combi.node_count, combi.leaf_count))
        _FULL_BINARY_CHECKED.extend((t.node_count, t.leaf_count) for t in online.trees)
        ratios[b] = ibst.node_count / combi.node_count
        del ibst
    identity_ok = all(nc == 2 * lc - 1 for nc, lc in _FULL_BINARY_CHECKED)
    grows = ratios[16] < ratios[32] < ratios[64] < ratios[256]
    shown = ", ".join(f"b={b}: {r:.2f}:1" for b, r in ratios.items())
    record(3, identity_ok and grows and ratios[256] > ratios[64],
           f"node_count = 2*leaves-1 on {len(_FULL_BINARY_CHECKED)} trees: {identity_ok}; "
           f"IBST/ComBI node ratio at N=100k {shown}")


# -- 4 ----------------------------------------------------------------------


def test_criterion_4_zero_miss_rate():
    forests = [
        forest_build(BitDataset.random(1, 64, seed=401), 1),
        forest_build(BitDataset.random(5000, 64, seed=402), 1),
        forest_build(BitDataset.random(5000, 64, seed=403), 4),
        forest_build(BitDataset.random(20_000, 256, seed=404), 2),
    ]
    misses = 0
    total = 0
    for j, f in enumerate(forests):
        qs = BitDataset.random(10_000, f.length, seed=410 + j)
        for q in qs.codes:
            for budget in (MutateBudget(0, 0), MutateBudget(0, 2)):
                res, _ = f.knn(q, 10, budget)
                misses += len(res) == 0
                total += 1
    record(4, misses == 0, f"{misses} empty results in {total} searches (10,000 queries per forest, MiC=0)")


# -- 7, 8, 5 ----------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_run():
    t0 = time.perf_counter()
    dim, clusters, spread = 64, 100, 0.8
    x, _ = gaussian_mixture(100_000, dim, clusters, seed=701, spread=spread)
    qx, _ = gaussian_mixture(1000, dim, clusters, seed=702, spread=spread, centers_seed=701)
    planes = generate_hyperplanes(dim, 64, 703)
    data, queries = hash_vectors(x, planes), hash_vectors(qx, planes)
    forest = forest_build(data, 4)
    report = bench(data, queries, forest, 10, MutateBudget(0, 2))
    return report, time.perf_counter() - t0


def test_criterion_7_desk_scale_precision(desk_run):
    r, dt = desk_run
    ok = r.mean_precision >= 0.85 and r.access_pct < 10 and r.speedup > 1 and dt < 300
    record(7, ok, f"precision {r.mean_precision:.4f} (>= 0.85), access {r.access_pct:.3f}% (< 10%), "
                  f"speedup vs exhaustive scan {r.speedup:.2f}x (> 1), wall {dt:.1f}s (< 300s)")


def test_criterion_8_lambda_concentration(desk_run):
    r, _ = desk_run
    share = r.lambda_mass_at_1
    record(8, share >= 0.60, f"{share:.3f} of {r.lambda_count} false discoveries at k_i = 1 (>= 0.60); "
                             f"distribution {dict(sorted(r.lambda_.items()))}")


def test_criterion_5_metric_identities(desk_run):
    reports = [desk_run[0]]
    for seed, (n, b, t, m, k) in enumerate([(2000, 32, 1, 0, 10), (5000, 64, 2, 1, 5),
                                            (3000, 16, 4, 2, 20), (1000, 128, 3, 0, 1)]):
        ds = BitDataset.random(n, b, seed=500 + seed)
        qs = BitDataset.random(100, b, seed=550 + seed)
        base = exact_baseline(ds, qs, k)
        reports.append(bench(ds, qs, forest_build(ds, t), k, MutateBudget(0, m), baseline=base))
        reports.append(bench(ds, qs, build_ibst(ds), k, baseline=base))
    fdr_bad = sum(abs(r.fdr - (1 - r.mean_precision)) > 1e-12 for r in reports)
    lam_bad = 0
    for r in reports:
        nk = r.n_queries * r.k
        exact_fdr = Fraction(nk - r.hits, nk)
        lam_bad += Fraction(r.lambda_count) != nk * exact_fdr
    short = sum(r.short_queries for r in reports)
    record(5, fdr_bad == 0 and lam_bad == 0 and short == 0,
           f"{len(reports)} bench runs ({short} short result lists): "
           f"fdr vs 1-mean_precision violations {fdr_bad}, "
           f"#Lambda != N*k*FDR violations {lam_bad}")


# -- 6 ----------------------------------------------------------------------


def test_criterion_6_monotonicity():
    ds = BitDataset.random(20_000, 64, seed=601)
    queries = BitDataset.random(500, 64, seed=602).codes
    forest = forest_build(ds, 4)
    heads = [forest.head(t) for t in range(1, 5)]
    ms = range(4)
    k = 10
    set_bad = prec_bad = 0
    for q in queries:
        d = linear_scan_knn(ds, q, k)[-1].hd
        cand = {}
        prec = {}
        for ti, f in enumerate(heads, start=1):
            for m in ms:
                found = f.candidates(q.words, MutateBudget(0, m))
                cand[ti, m] = set(found.rows.tolist())
                ranked = f._rank(found, k)
                prec[ti, m] = sum(n.hd <= d for n in ranked) / k
        for ti in range(1, 5):
            for m in ms:
                if m > 0:
                    set_bad += not cand[ti, m - 1] <= cand[ti, m]
                    prec_bad += prec[ti, m - 1] > prec[ti, m]
                if ti > 1:
                    set_bad += not cand[ti - 1, m] <= cand[ti, m]
                    prec_bad += prec[ti - 1, m] > prec[ti, m]
    record(6, set_bad == 0 and prec_bad == 0,
           f"500 queries x 20k codes, T in 1..4, m in 0..3: {set_bad} nesting and {prec_bad} precision violations")


# -- 9 ----------------------------------------------------------------------


def test_criterion_9_distributed_exactness():
    ds = BitDataset.random(10_000, 64, seed=901)
    queries = BitDataset.random(100, 64, seed=902).codes
    bad = 0
    msgs_ok = True
    for v in (2, 4, 8):
        state = cluster_build(ds, v, seed=903)
        for q in queries:
            res = cluster_search(state, q, 10, mode="exact")
            central = linear_scan_knn(ds, q, 10)
            bad += Counter(n.hd for n in res.neighbors) != Counter(n.hd for n in central)
            msgs_ok &= res.messages == 4 * (v - 1)

    def transcript():
        st = cluster_build(ds, 4, seed=903, plan=ShardPlan.seeded(ds.n, 4, seed=904))
        out = "".join(json.dumps(d.record(), sort_keys=True) + "\n" for d in st.build_transcript)
        for i, q in enumerate(queries[:20]):
            for mode in ("exact", "approximate"):
                out += cluster_search(st, q, 10, MutateBudget(0, 2), mode, qid=i).transcript_lines()
        return out.encode()

    same = transcript() == transcript()
    record(9, bad == 0 and same and msgs_ok,
           f"{bad} HD-multiset mismatches over 300 (v, query) searches; "
           f"4(v-1) messages per query: {msgs_ok}; transcript replay identical: {same}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
