"""Several ComBI trees over one dataset, each under its own bit ordering.

Candidates from all trees are merged by sample, ranked by their true
Hamming distance and cut to ``k``.  Because every ordering is a bijection
on bit positions, a candidate's distance does not depend on the tree that
produced it.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bitcode import BitCode, BitDataset, BitOrdering
from .errors import InvalidArgument, InvalidState
from .tree import CombiTree, MutateBudget, Neighbor, _collect

MANIFEST_VERSION = 1

_DEFAULT_KINDS = ("identity", "reverse", "rotate_half", "reverse_rotate_half")


def default_orderings(length: int, t: int, seed: int = 0) -> list[BitOrdering]:
    """Identity, reverse, rotate-half, reverse-then-rotate-half, then seeded
    shuffles ``BitOrdering.seeded(length, seed + i)`` for tree ``i >= 4``.

    Short codes can make the fixed orderings coincide; a coinciding one is
    replaced by the next seeded shuffle that is still new.
    """
    if t < 1:
        raise InvalidArgument("need at least one tree")
    if t > math.factorial(min(length, 20)):
        raise InvalidArgument(f"only {math.factorial(length)} distinct orderings of {length} bits")
    out: list[BitOrdering] = []
    seen: set[BitOrdering] = set()
    shuffle = 4
    for i in range(t):
        cand = BitOrdering.from_kind(_DEFAULT_KINDS[i], length) if i < 4 else None
        if cand is None or cand in seen:
            while True:
                cand = BitOrdering.seeded(length, seed + shuffle)
                shuffle += 1
                if cand not in seen:
                    break
        out.append(cand)
        seen.add(cand)
    return out


@dataclass
class ForestSearch:
    """Raw outcome of one forest query before truncation to ``k``."""

    rows: np.ndarray
    hds: np.ndarray

    @property
    def evaluated(self) -> int:
        return int(self.rows.shape[0])


@dataclass
class CombiForest:
    dataset: BitDataset
    trees: list[CombiTree]
    seed: int = 0
    _local: threading.local = field(default_factory=threading.local, repr=False)

    @property
    def length(self) -> int:
        return self.dataset.length

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def orderings(self) -> list[BitOrdering]:
        return [t.ordering for t in self.trees]

    def head(self, t: int) -> "CombiForest":
        """The forest made of the first ``t`` trees (shares storage)."""
        if not 1 <= t <= self.n_trees:
            raise InvalidArgument(f"forest has {self.n_trees} trees, asked for {t}")
        return CombiForest(self.dataset, self.trees[:t], self.seed)

    def _scratch(self):
        # per-thread dedup stamps so concurrent queries don't interfere
        loc = self._local
        n = self.dataset.n
        if getattr(loc, "stamp", None) is None or loc.stamp.shape[0] != n:
            loc.stamp = np.zeros(n, dtype=np.int64)
            loc.mark = 0
            loc.rows = np.empty(n, dtype=np.int64)
            loc.hds = np.empty(n, dtype=np.int64)
        loc.mark += 1
        return loc

    def candidates(self, query_words: np.ndarray, budget: MutateBudget,
                   k_fill: int = 0) -> ForestSearch:
        """Deduplicated candidates from all trees.

        With ``k_fill > 0``, passes at the next mutate counts are added
        (``min = max = budget.max_mutate + 1``, then ``+2``, ...) while fewer
        than ``k_fill`` candidates have been found and deeper leaves exist.
        """
        budget.check(self.length)
        s = self._scratch()
        n_out = 0
        data = self.dataset.words
        b = self.length
        passes = [(budget.min_mutate, budget.max_mutate)]
        level = budget.max_mutate
        while True:
            lo, hi = passes[-1]
            for tree in self.trees:
                n_out = _collect(
                    tree.search_layout(), tree._head, tree._item, tree._next, data, query_words,
                    lo, hi, b, s.stamp, s.mark, s.rows, s.hds, n_out,
                )
            if k_fill <= 0 or n_out >= min(k_fill, self.dataset.n):
                break
            level += 1
            if level > self._max_height():
                break
            passes.append((level, level))
        return ForestSearch(s.rows[:n_out].copy(), s.hds[:n_out].copy())

    def _max_height(self) -> int:
        h = getattr(self, "_height", None)
        if h is None:
            h = max(t.height() for t in self.trees)
            self._height = h
        return h

    def knn(self, query: BitCode, k: int, budget: MutateBudget,
            extend: bool = False) -> tuple[list[Neighbor], int]:
        """Ranked neighbours plus the number of samples whose codes were compared."""
        if k < 1:
            raise InvalidArgument("k must be positive")
        if query.length != self.length:
            raise InvalidArgument(f"query length {query.length} != {self.length}")
        found = self.candidates(query.words, budget, k if extend else 0)
        return self._rank(found, k), found.evaluated

    def _rank(self, found: ForestSearch, k: int) -> list[Neighbor]:
        hds = found.hds
        if hds.size > k:
            # only candidates within the k-th smallest distance can make the cut
            cum = np.cumsum(np.bincount(hds, minlength=self.length + 1))
            keep = hds <= int(np.searchsorted(cum, k))
            rows, hds = found.rows[keep], hds[keep]
        else:
            rows = found.rows
        ids = self.dataset.ids[rows]
        order = np.lexsort((ids, hds))[:k]
        return [Neighbor(int(i), int(h)) for i, h in zip(ids[order].tolist(), hds[order].tolist())]


def forest_build(
    dataset: BitDataset,
    t: int = 4,
    orderings: Sequence[BitOrdering] | None = None,
    seed: int = 0,
) -> CombiForest:
    if t < 1:
        raise InvalidArgument("need at least one tree")
    if dataset.n == 0:
        raise InvalidArgument("cannot index an empty dataset")
    if orderings is None:
        orderings = default_orderings(dataset.length, t, seed)
    else:
        orderings = list(orderings)
        if len(orderings) != t:
            raise InvalidArgument(f"{len(orderings)} orderings for {t} trees")
        if any(o.length != dataset.length for o in orderings):
            raise InvalidArgument("ordering length does not match dataset")
        if len(set(orderings)) != t:
            raise InvalidArgument("orderings must be pairwise distinct")
    rows = np.arange(dataset.n, dtype=np.uint64)
    trees = []
    for ordering in orderings:
        tree = CombiTree(dataset.length, ordering)
        # payloads hold row numbers; ids are mapped back at ranking time
        tree.insert_words(ordering.apply_words(dataset.words), rows)
        tree.compact()
        trees.append(tree)
    return CombiForest(dataset, trees, seed)


def forest_knn(
    forest: CombiForest, query: BitCode, k: int, budget: MutateBudget, extend: bool = False
) -> list[Neighbor]:
    return forest.knn(query, k, budget, extend)[0]


def forest_candidates(forest: CombiForest, query: BitCode, budget: MutateBudget) -> set[int]:
    """Ids of every sample retrieved by any tree within ``budget``."""
    found = forest.candidates(query.words, budget)
    return set(forest.dataset.ids[found.rows].tolist())


# -- manifest ----------------------------------------------------------------


def manifest_dict(forest: CombiForest, bitcode_file: str) -> dict:
    return {
        "version": MANIFEST_VERSION,
        "b": forest.length,
        "T": forest.n_trees,
        "n": forest.dataset.n,
        "seed": forest.seed,
        "bitcodes": bitcode_file,
        "orderings": [
            {"kind": o.kind, "perm": o.perm.tolist()} for o in forest.orderings
        ],
        "trees": [
            {"node_count": t.node_count, "leaf_count": t.leaf_count}
            for t in forest.trees
        ],
    }


def save_manifest(forest: CombiForest, path: str | os.PathLike, bitcode_file: str) -> None:
    Path(path).write_text(json.dumps(manifest_dict(forest, bitcode_file), indent=2) + "\n")


def load_forest(path: str | os.PathLike) -> CombiForest:
    """Rebuild a forest from its manifest and the bitcode file it names."""
    from .formats import read_bitcodes

    path = Path(path)
    try:
        meta = json.loads(path.read_text())
        version = int(meta["version"])
        b, t, n = int(meta["b"]), int(meta["T"]), int(meta["n"])
        seed = int(meta["seed"])
        ords = [BitOrdering(o["kind"], b, o["perm"]) for o in meta["orderings"]]
        counts = [(int(x["node_count"]), int(x["leaf_count"])) for x in meta["trees"]]
        bitcodes = path.parent / meta["bitcodes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidState(f"{path}: malformed manifest ({exc})") from exc
    if version != MANIFEST_VERSION:
        raise InvalidState(f"{path}: unsupported manifest version {version}")
    if len(ords) != t or len(counts) != t:
        raise InvalidState(f"{path}: expected {t} orderings and tree records")
    dataset = read_bitcodes(bitcodes)
    if dataset.length != b or dataset.n != n:
        raise InvalidState(
            f"{bitcodes}: holds {dataset.n} codes of {dataset.length} bits, "
            f"manifest says {n} of {b}"
        )
    forest = forest_build(dataset, t, ords, seed)
    got = [(tr.node_count, tr.leaf_count) for tr in forest.trees]
    if got != counts:
        raise InvalidState(f"{path}: rebuilt tree sizes {got} differ from manifest {counts}")
    return forest
