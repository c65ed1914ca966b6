"""Exhaustive-scan ground truth and retrieval-quality metrics.

For a query with exact k-th neighbour distance ``d``, the reference set G
holds *every* sample within distance ``d`` (ties included), so a returned
neighbour counts as correct whenever its distance is at most ``d``.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .bitcode import BitCode, BitDataset
from .errors import InvalidArgument
from .forest import CombiForest
from .ibst import IbstTree, _knn_counted
from .tree import MutateBudget, Neighbor


def scan_distances(dataset: BitDataset, query_words: np.ndarray) -> np.ndarray:
    """Distance from ``query_words`` to every row, via numpy popcount."""
    x = np.bitwise_count(dataset.words ^ query_words[None, :])
    if x.shape[1] == 1:
        return x[:, 0].astype(np.int64)
    return x.sum(axis=1, dtype=np.int64)


def linear_scan_knn(dataset: BitDataset, query: BitCode, k: int) -> list[Neighbor]:
    """Exact top-``k`` by full scan, ranked by (distance, id).

    The distance of the last entry is the query's k-th neighbour radius.
    """
    if k < 1:
        raise InvalidArgument("k must be positive")
    if dataset.n == 0:
        raise InvalidArgument("cannot search an empty dataset")
    if query.length != dataset.length:
        raise InvalidArgument(f"query length {query.length} != {dataset.length}")
    hd = scan_distances(dataset, query.words)
    k = min(k, dataset.n)
    cum = np.cumsum(np.bincount(hd, minlength=dataset.length + 1))
    radius = int(np.searchsorted(cum, k))
    rows = np.flatnonzero(hd <= radius)
    ids = dataset.ids[rows]
    order = np.lexsort((ids, hd[rows]))[:k]
    return [Neighbor(int(i), int(h)) for i, h in zip(ids[order], hd[rows][order])]


@dataclass(frozen=True)
class GroundTruth:
    """Exact ranked neighbours of one query, up to the largest k of interest."""

    neighbors: tuple[Neighbor, ...]

    def __post_init__(self):
        object.__setattr__(self, "neighbors", tuple(self.neighbors))
        if not self.neighbors:
            raise InvalidArgument("ground truth needs at least one neighbour")

    @property
    def max_k(self) -> int:
        return len(self.neighbors)

    def radius(self, k: int) -> int:
        """Distance of the k-th exact neighbour."""
        if k < 1:
            raise InvalidArgument("k must be positive")
        return self.neighbors[min(k, self.max_k) - 1].hd

    def in_set(self, hd: int, k: int) -> bool:
        return hd <= self.radius(k)


def ground_truth(dataset: BitDataset, queries: BitDataset, k: int) -> list[GroundTruth]:
    return [GroundTruth(linear_scan_knn(dataset, q, k)) for q in queries.codes]


@dataclass(frozen=True)
class QueryMetrics:
    precision: float
    returned: int
    hits: int
    lambda_q: Counter = field(default_factory=Counter)


def precision_at_k(returned: Sequence[Neighbor], gt: GroundTruth, k: int) -> float:
    if k < 1:
        raise InvalidArgument("k must be positive")
    if len(returned) > k:
        raise InvalidArgument(f"{len(returned)} neighbours returned for k={k}")
    d = gt.radius(k)
    return sum(1 for nb in returned if nb.hd <= d) / k


def query_metrics(returned: Sequence[Neighbor], gt: GroundTruth, k: int) -> QueryMetrics:
    d = gt.radius(k)
    hits = sum(1 for nb in returned if nb.hd <= d)
    lam = Counter(nb.hd - d for nb in returned if nb.hd > d)
    return QueryMetrics(hits / k, len(returned), hits, lam)


def fdr(precisions: Iterable[float]) -> float:
    p = list(precisions)
    if not p:
        raise InvalidArgument("no precisions given")
    return 1.0 - sum(p) / len(p)


def lambda_distribution(
    results: Iterable[tuple[Sequence[Neighbor], GroundTruth]], k: int
) -> Counter:
    """Multiset union of per-query overshoots ``hd - d_q(k)`` of false discoveries."""
    total: Counter = Counter()
    for returned, gt in results:
        total.update(query_metrics(returned, gt, k).lambda_q)
    return total


def speedup(baseline_time: float, engine_time: float) -> float:
    """How many times faster the engine is than the baseline."""
    if baseline_time < 0 or engine_time < 0:
        raise InvalidArgument("times must be non-negative")
    return baseline_time / engine_time if engine_time > 0 else float("inf")


# -- benchmarking ------------------------------------------------------------


@dataclass
class BenchReport:
    engine: str
    k: int
    n_queries: int
    n_samples: int
    bits: int
    mean_precision: float
    fdr: float
    lambda_: dict[int, int]
    lambda_count: int
    hits: int
    returned: int
    speedup: float
    access_pct: float
    engine_time: float
    baseline_time: float
    trees: int | None = None
    mutates: int | None = None
    short_queries: int = 0

    @property
    def lambda_mass_at_1(self) -> float:
        return self.lambda_.get(1, 0) / self.lambda_count if self.lambda_count else 1.0

    def lambda_identity_exact(self) -> bool:
        """#Lambda == N * k * FDR, checked in exact rational arithmetic."""
        nk = self.n_queries * self.k
        fdr_exact = 1 - Fraction(self.hits, nk)
        return Fraction(self.lambda_count) == nk * fdr_exact

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = {str(key): v for key, v in sorted(d.pop("lambda_").items())}
        return d


@dataclass
class Baseline:
    truths: list[GroundTruth]
    time: float


def exact_baseline(dataset: BitDataset, queries: BitDataset, k: int) -> Baseline:
    """Ground truth and mean per-query time of the exhaustive scan."""
    codes = queries.codes
    if not codes:
        raise InvalidArgument("no queries")
    linear_scan_knn(dataset, codes[0], k)  # warm-up
    truths = []
    elapsed = 0.0
    for q in codes:
        t0 = time.perf_counter()
        res = linear_scan_knn(dataset, q, k)
        elapsed += time.perf_counter() - t0
        truths.append(GroundTruth(res))
    return Baseline(truths, elapsed / len(codes))


Engine = Callable[[BitCode], tuple[list[Neighbor], int]]


def forest_engine(forest: CombiForest, k: int, budget: MutateBudget, extend: bool = True) -> Engine:
    return lambda q: forest.knn(q, k, budget, extend)


def ibst_engine(tree: IbstTree, k: int) -> Engine:
    return lambda q: _knn_counted(tree, q, k)


def _true_distances(dataset: BitDataset, row_of: dict, q: BitCode, returned) -> list[int]:
    rows = np.array([row_of[nb.id] for nb in returned], dtype=np.int64)
    if rows.size == 0:
        return []
    return scan_distances(dataset.subset(rows), q.words).tolist()


def evaluate(
    dataset: BitDataset,
    queries: BitDataset,
    engine: Engine,
    k: int,
    baseline: Baseline,
    label: str,
    trees: int | None = None,
    mutates: int | None = None,
) -> BenchReport:
    """Run ``engine`` on every query, time it and score it against ``baseline``.

    Reported distances are re-measured on the dataset before scoring, so a
    wrong distance from the engine cannot inflate precision.
    """
    if queries.length != dataset.length:
        raise InvalidArgument(
            f"queries have {queries.length} bits, dataset has {dataset.length}"
        )
    codes = queries.codes
    if len(codes) != len(baseline.truths):
        raise InvalidArgument("baseline does not match the query set")
    row_of = {int(i): r for r, i in enumerate(dataset.ids.tolist())}
    engine(codes[0])  # warm-up
    elapsed = 0.0
    touched = 0
    hits = 0
    returned_total = 0
    false_total = 0
    short = 0
    lam: Counter = Counter()
    precisions = []
    for q, gt in zip(codes, baseline.truths):
        t0 = time.perf_counter()
        neighbors, evaluated = engine(q)
        elapsed += time.perf_counter() - t0
        touched += evaluated
        true_hd = _true_distances(dataset, row_of, q, neighbors)
        checked = [Neighbor(nb.id, h) for nb, h in zip(neighbors, true_hd)]
        m = query_metrics(checked, gt, k)
        precisions.append(m.precision)
        hits += m.hits
        returned_total += m.returned
        false_total += m.returned - m.hits
        short += m.returned < min(k, dataset.n)
        lam.update(m.lambda_q)
    nq = len(codes)
    mean_p = sum(precisions) / nq
    return BenchReport(
        engine=label,
        k=k,
        n_queries=nq,
        n_samples=dataset.n,
        bits=dataset.length,
        mean_precision=mean_p,
        fdr=false_total / (nq * k),
        lambda_=dict(lam),
        lambda_count=sum(lam.values()),
        hits=hits,
        returned=returned_total,
        speedup=speedup(baseline.time, elapsed / nq),
        access_pct=100.0 * touched / (nq * dataset.n),
        engine_time=elapsed / nq,
        baseline_time=baseline.time,
        trees=trees,
        mutates=mutates,
        short_queries=short,
    )


def baseline_report(dataset: BitDataset, baseline: Baseline, k: int) -> BenchReport:
    nq = len(baseline.truths)
    hits = sum(min(k, len(gt.neighbors)) for gt in baseline.truths)
    return BenchReport(
        engine="exact-scan", k=k, n_queries=nq, n_samples=dataset.n,
        bits=dataset.length, mean_precision=hits / (nq * k), fdr=1 - hits / (nq * k),
        lambda_={}, lambda_count=0, hits=hits, returned=hits, speedup=1.0,
        access_pct=100.0, engine_time=baseline.time, baseline_time=baseline.time,
    )


def bench(
    dataset: BitDataset,
    queries: BitDataset,
    engine: CombiForest | IbstTree,
    k: int,
    budget: MutateBudget | None = None,
    extend: bool = True,
    baseline: Baseline | None = None,
) -> BenchReport:
    """Benchmark one engine against the exhaustive scan.

    Index build time is excluded; ranking is included.
    """
    if k < 1:
        raise InvalidArgument("k must be positive")
    if queries.length != dataset.length:
        raise InvalidArgument(
            f"queries have {queries.length} bits, dataset has {dataset.length}"
        )
    if baseline is None:
        baseline = exact_baseline(dataset, queries, k)
    if isinstance(engine, CombiForest):
        budget = budget or MutateBudget(0, 2)
        return evaluate(
            dataset, queries, forest_engine(engine, k, budget, extend), k, baseline,
            "combi", engine.n_trees, budget.max_mutate,
        )
    if isinstance(engine, IbstTree):
        return evaluate(dataset, queries, ibst_engine(engine, k), k, baseline, "ibst")
    raise InvalidArgument(f"unsupported engine {type(engine).__name__}")


def sweep(
    dataset: BitDataset,
    queries: BitDataset,
    grid: Iterable[tuple[int, int]],
    k: int,
    seed: int = 0,
    extend: bool = True,
) -> list[BenchReport]:
    """One report per (T, m) cell, sorted by (T, m), then the exact-scan line.

    A single forest with the largest T is built; smaller T use its first trees.
    """
    from .forest import forest_build

    cells = sorted(set((int(t), int(m)) for t, m in grid))
    if not cells:
        raise InvalidArgument("empty (T, m) grid")
    if any(t < 1 or m < 0 for t, m in cells):
        raise InvalidArgument("grid needs T >= 1 and m >= 0")
    forest = forest_build(dataset, max(t for t, _ in cells), seed=seed)
    baseline = exact_baseline(dataset, queries, k)
    reports = []
    for t, m in cells:
        sub = forest.head(t)
        reports.append(
            evaluate(dataset, queries, forest_engine(sub, k, MutateBudget(0, m), extend),
                     k, baseline, "combi", t, m)
        )
    reports.append(baseline_report(dataset, baseline, k))
    return reports
