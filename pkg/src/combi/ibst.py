"""Inverted binary search tree (IBST): a depth-``b`` trie over full codes.

Every root-to-leaf path spells one stored code, and the leaf holds the ids
of all samples sharing it.  Search is exact; :func:`compress` deletes every
single-child internal node to obtain the equivalent :class:`CombiTree`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ._bits import get_bit
from .bitcode import BitCode, BitDataset, BitOrdering, n_words
from .errors import InvalidArgument, InvalidState
from .tree import CombiTree, Neighbor, rank


@dataclass(frozen=True)
class HammingSearchBudget:
    min_hd: int = 0
    max_hd: int = 0

    def __post_init__(self):
        if not 0 <= self.min_hd <= self.max_hd:
            raise InvalidArgument(
                f"need 0 <= min_hd <= max_hd, got ({self.min_hd}, {self.max_hd})"
            )


@dataclass(frozen=True)
class IbstNode:
    left: int | None
    right: int | None
    depth: int
    is_leaf: bool
    payload: tuple[int, ...]


@numba.njit(cache=True, nogil=True)
def _insert_many(left, right, counts, codes, nbits, leaves):
    for i in range(codes.shape[0]):
        code = codes[i]
        if counts[0] == 0:
            left[0] = -1
            right[0] = -1
            counts[0] = 1
        node = 0
        for d in range(nbits):
            if get_bit(code, d) == 0:
                child = left[node]
                if child < 0:
                    child = counts[0]
                    counts[0] = child + 1
                    left[child] = -1
                    right[child] = -1
                    left[node] = child
            else:
                child = right[node]
                if child < 0:
                    child = counts[0]
                    counts[0] = child + 1
                    left[child] = -1
                    right[child] = -1
                    right[node] = child
            node = child
        leaves[i] = node


@numba.njit(cache=True, nogil=True)
def _search(left, right, query, nbits, min_hd, max_hd, out_leaf, out_hd):
    stack_node = np.empty(nbits + 2, dtype=np.int64)
    stack_d = np.empty(nbits + 2, dtype=np.int64)
    stack_h = np.empty(nbits + 2, dtype=np.int64)
    stack_node[0] = 0
    stack_d[0] = 0
    stack_h[0] = 0
    sp = 1
    n = 0
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        d = stack_d[sp]
        h = stack_h[sp]
        if d == nbits:
            if h >= min_hd:
                out_leaf[n] = node
                out_hd[n] = h
                n += 1
            continue
        qb = get_bit(query, d)
        child = right[node]
        if child >= 0:
            cost = h + (1 - qb)
            if cost <= max_hd:
                stack_node[sp] = child
                stack_d[sp] = d + 1
                stack_h[sp] = cost
                sp += 1
        child = left[node]
        if child >= 0:
            cost = h + qb
            if cost <= max_hd:
                stack_node[sp] = child
                stack_d[sp] = d + 1
                stack_h[sp] = cost
                sp += 1
    return n


@numba.njit(cache=True)
def _compress(left, right, nbits, nwords, n_leaves):
    """Collapse single-child chains.  Returns ComBI arrays plus, per
    codebook entry, the IBST leaf it came from."""
    cap = 2 * n_leaves - 1
    c_start = np.empty(cap, dtype=np.int64)
    c_end = np.empty(cap, dtype=np.int64)
    c_ref = np.full(cap, -1, dtype=np.int64)
    c_left = np.full(cap, -1, dtype=np.int64)
    c_right = np.full(cap, -1, dtype=np.int64)
    cb = np.zeros((n_leaves, nwords), dtype=np.uint64)
    leaf_src = np.empty(n_leaves, dtype=np.int64)
    path = np.zeros(nbits, dtype=np.uint8)

    # stack entries: ibst node, its depth, bit taken to reach it, parent combi node, side
    st_node = np.empty(nbits + 2, dtype=np.int64)
    st_depth = np.empty(nbits + 2, dtype=np.int64)
    st_bit = np.empty(nbits + 2, dtype=np.int64)
    st_parent = np.empty(nbits + 2, dtype=np.int64)
    st_side = np.empty(nbits + 2, dtype=np.int64)
    st_node[0] = 0
    st_depth[0] = 0
    st_bit[0] = 0
    st_parent[0] = -1
    st_side[0] = 0
    sp = 1
    n = 0
    e = 0
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        d = st_depth[sp]
        if d > 0:
            path[d - 1] = st_bit[sp]
        c = n
        n += 1
        c_start[c] = d
        parent = st_parent[sp]
        if parent >= 0:
            if st_side[sp] == 0:
                c_left[parent] = c
            else:
                c_right[parent] = c
        # follow the don't-care chain
        while d < nbits and (left[node] < 0 or right[node] < 0):
            if left[node] >= 0:
                path[d] = 0
                node = left[node]
            else:
                path[d] = 1
                node = right[node]
            d += 1
        c_end[c] = d
        if d == nbits:
            for i in range(nbits):
                if path[i]:
                    cb[e, i >> 6] |= np.uint64(1) << np.uint64(i & 63)
            c_ref[c] = e
            leaf_src[e] = node
            e += 1
            continue
        st_node[sp] = right[node]
        st_depth[sp] = d + 1
        st_bit[sp] = 1
        st_parent[sp] = c
        st_side[sp] = 1
        sp += 1
        st_node[sp] = left[node]
        st_depth[sp] = d + 1
        st_bit[sp] = 0
        st_parent[sp] = c
        st_side[sp] = 0
        sp += 1
    # children are created after parents: borrow a leaf reference bottom-up
    for c in range(n - 1, -1, -1):
        if c_ref[c] < 0:
            c_ref[c] = c_ref[c_left[c]]
    return c_start[:n], c_end[:n], c_ref[:n], c_left[:n], c_right[:n], cb[:e], leaf_src[:e]


class IbstTree:
    """Per-bit trie; node 0 is the root once anything has been inserted."""

    def __init__(self, length: int):
        if not 1 <= length <= 4096:
            raise InvalidArgument(f"bad bit length {length}")
        self.length = length
        self._left = np.empty(0, dtype=np.int32)
        self._right = np.empty(0, dtype=np.int32)
        self._counts = np.zeros(1, dtype=np.int64)
        self._payload: dict[int, list[int]] = {}

    @property
    def node_count(self) -> int:
        return int(self._counts[0])

    @property
    def leaf_count(self) -> int:
        return len(self._payload)

    def __len__(self) -> int:
        return sum(len(v) for v in self._payload.values())

    def insert_words(self, words: np.ndarray, idents) -> None:
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != n_words(self.length):
            raise InvalidArgument(f"codes do not have {self.length} bits")
        idents = np.asarray(idents, dtype=np.uint64)
        m = words.shape[0]
        if idents.shape != (m,):
            raise InvalidArgument("one identifier per code is required")
        need = self.node_count + 1 + m * self.length
        if need >= np.iinfo(np.int32).max:
            raise InvalidArgument("tree would exceed 2**31 nodes")
        if self._left.shape[0] < need:
            cap = max(need, 2 * self._left.shape[0])
            for name in ("_left", "_right"):
                old = getattr(self, name)
                new = np.empty(cap, dtype=np.int32)
                new[: old.shape[0]] = old
                setattr(self, name, new)
        leaves = np.empty(m, dtype=np.int64)
        _insert_many(self._left, self._right, self._counts, words, self.length, leaves)
        for leaf, ident in zip(leaves.tolist(), idents.tolist()):
            self._payload.setdefault(leaf, []).append(ident)

    def trim(self) -> None:
        """Release spare capacity left over from bulk insertion."""
        n = self.node_count
        self._left = self._left[:n].copy()
        self._right = self._right[:n].copy()

    def payload(self, node: int) -> list[int]:
        return list(self._payload.get(node, ()))

    def nodes(self):
        """Yield ``(index, IbstNode)`` in preorder."""
        if self.node_count == 0:
            return
        stack = [(0, 0)]
        while stack:
            i, d = stack.pop()
            l, r = int(self._left[i]), int(self._right[i])
            leaf = d == self.length
            yield i, IbstNode(
                left=None if l < 0 else l,
                right=None if r < 0 else r,
                depth=d,
                is_leaf=leaf,
                payload=tuple(self._payload.get(i, ())),
            )
            if r >= 0:
                stack.append((r, d + 1))
            if l >= 0:
                stack.append((l, d + 1))


def build_ibst(dataset: BitDataset) -> IbstTree:
    tree = IbstTree(dataset.length)
    tree.insert_words(dataset.words, dataset.ids)
    tree.trim()
    return tree


def ibst_insert(tree: IbstTree, code: BitCode, ident: int) -> IbstTree:
    if code.length != tree.length:
        raise InvalidArgument(f"code length {code.length} != tree length {tree.length}")
    tree.insert_words(code.words[None, :], [ident])
    return tree


def _check_query(tree: IbstTree, query: BitCode) -> None:
    if query.length != tree.length:
        raise InvalidArgument(f"query length {query.length} != tree length {tree.length}")


def ibst_search(
    tree: IbstTree, query: BitCode, budget: HammingSearchBudget
) -> list[tuple[int, int]]:
    """Exact: every stored sample whose distance lies in ``[min_hd, max_hd]``.

    An empty list is a *miss*.
    """
    _check_query(tree, query)
    if tree.node_count == 0:
        return []
    out_leaf = np.empty(tree.leaf_count, dtype=np.int64)
    out_hd = np.empty(tree.leaf_count, dtype=np.int64)
    n = _search(
        tree._left, tree._right, query.words, tree.length,
        budget.min_hd, budget.max_hd, out_leaf, out_hd,
    )
    result = []
    for leaf, hd in zip(out_leaf[:n].tolist(), out_hd[:n].tolist()):
        result.extend((ident, hd) for ident in tree._payload[leaf])
    return result


def radius_schedule(length: int):
    """Distance bands ``(lo, hi)`` of successive passes: 0, 1, 2, 3-4, 5-8, ..."""
    lo, hi = 0, 0
    while True:
        yield lo, hi
        if hi >= length:
            return
        lo, hi = hi + 1, min(length, max(1, 2 * hi))


def _knn_counted(tree: IbstTree, query: BitCode, k: int) -> tuple[list[Neighbor], int]:
    if k < 1:
        raise InvalidArgument("k must be positive")
    _check_query(tree, query)
    found: list[Neighbor] = []
    if tree.node_count == 0:
        return found, 0
    for lo, hi in radius_schedule(tree.length):
        found.extend(
            Neighbor(ident, hd)
            for ident, hd in ibst_search(tree, query, HammingSearchBudget(lo, hi))
        )
        if len(found) >= k:
            break
    return rank(found, k), len(found)


def ibst_knn(tree: IbstTree, query: BitCode, k: int) -> list[Neighbor]:
    """Exact k nearest neighbours by repeated band searches."""
    return _knn_counted(tree, query, k)[0]


def compress(tree: IbstTree, ordering: BitOrdering | None = None) -> CombiTree:
    """Remove every single-child internal node, yielding a full binary tree.

    ``ordering`` only labels the result; the IBST must already have been
    built from codes relabeled by it.
    """
    if tree.leaf_count == 0:
        raise InvalidState("cannot compress an empty IBST")
    start, end, ref, left, right, cb, leaf_src = _compress(
        tree._left, tree._right, tree.length, n_words(tree.length), tree.leaf_count
    )
    payloads = [tree._payload[leaf] for leaf in leaf_src.tolist()]
    return CombiTree._from_arrays(
        tree.length, ordering, start, end, ref, left, right, cb, payloads
    )
