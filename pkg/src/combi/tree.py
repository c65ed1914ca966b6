"""Compressed bit-string tree (ComBI).

A tree node covers a half-open bit range ``[start, end)`` of its reference
code and, when internal, splits on bit ``end``: 0 goes left, 1 goes right.
Bits inside the covered ranges are "don't care" during search; only split
bits steer the traversal.  Nodes live in flat arrays so that insertion and
search run as compiled loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ._bits import first_difference, get_bit, hamming_row
from .bitcode import BitCode, BitOrdering, n_words
from .errors import InvalidArgument

NO_CHILD = -1


@dataclass(frozen=True)
class Neighbor:
    id: int
    hd: int

    def rank_key(self) -> tuple[int, int]:
        return (self.hd, self.id)


def rank(neighbors, k: int | None = None) -> list[Neighbor]:
    """Sort by (distance, id) and keep the first ``k``."""
    out = sorted(neighbors, key=Neighbor.rank_key)
    return out if k is None else out[:k]


@dataclass(frozen=True)
class MutateBudget:
    """Bounds on the number of branches taken against the query's bits."""

    min_mutate: int = 0
    max_mutate: int = 0

    def __post_init__(self):
        if not 0 <= self.min_mutate <= self.max_mutate:
            raise InvalidArgument(
                f"need 0 <= min_mutate <= max_mutate, got "
                f"({self.min_mutate}, {self.max_mutate})"
            )

    def check(self, length: int) -> None:
        if self.max_mutate > length:
            raise InvalidArgument(f"max_mutate {self.max_mutate} exceeds {length} bits")


@dataclass(frozen=True)
class CombiNode:
    start_bit: int
    end_bit: int
    ref_index: int
    left: int | None
    right: int | None
    payload: tuple[int, ...]

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True)
class Codebook:
    """Read-only view of a tree's reference codes, in insertion order."""

    words: np.ndarray
    length: int

    def __len__(self) -> int:
        return self.words.shape[0]

    def __getitem__(self, i: int) -> BitCode:
        return BitCode.from_words(self.words[i], self.length)


# -- kernels -----------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _insert(start, end, ref, left, right, cb, head, tail, item, nxt, counts, code, ident, nbits):
    it = counts[2]
    item[it] = ident
    nxt[it] = -1
    counts[2] = it + 1

    if counts[0] == 0:
        e = counts[1]
        cb[e, :] = code
        head[e] = it
        tail[e] = it
        counts[1] = e + 1
        start[0] = 0
        end[0] = nbits
        ref[0] = e
        left[0] = -1
        right[0] = -1
        counts[0] = 1
        return 1

    node = 0
    while True:
        r = ref[node]
        fb = first_difference(cb[r], code, start[node], nbits)
        if fb < end[node]:
            e = counts[1]
            cb[e, :] = code
            head[e] = it
            tail[e] = it
            counts[1] = e + 1
            nn1 = counts[0]
            nn2 = nn1 + 1
            counts[0] = nn1 + 2
            # nn1 inherits the old node's tail range and children
            start[nn1] = fb + 1
            end[nn1] = end[node]
            ref[nn1] = r
            left[nn1] = left[node]
            right[nn1] = right[node]
            start[nn2] = fb + 1
            end[nn2] = nbits
            ref[nn2] = e
            left[nn2] = -1
            right[nn2] = -1
            end[node] = fb
            if get_bit(code, fb) == 1:
                left[node] = nn1
                right[node] = nn2
            else:
                left[node] = nn2
                right[node] = nn1
            return 1
        if left[node] < 0:
            # same full code as this leaf
            nxt[tail[r]] = it
            tail[r] = it
            return 0
        if get_bit(code, end[node]) == 1:
            node = right[node]
        else:
            node = left[node]


@numba.njit(cache=True, nogil=True)
def _insert_many(start, end, ref, left, right, cb, head, tail, item, nxt, counts, codes, idents, nbits):
    added = 0
    for i in range(codes.shape[0]):
        added += _insert(
            start, end, ref, left, right, cb, head, tail, item, nxt, counts,
            codes[i], idents[i], nbits,
        )
    return added


@numba.njit(cache=True, nogil=True)
def _search(left, right, ref, split, query, min_c, max_c, nbits, out_ent, out_cost):
    stack_node = np.empty(nbits + 2, dtype=np.int64)
    stack_c = np.empty(nbits + 2, dtype=np.int64)
    stack_node[0] = 0
    stack_c[0] = 0
    sp = 1
    n = 0
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        c = stack_c[sp]
        if left[node] < 0:
            if c >= min_c:
                out_ent[n] = ref[node]
                out_cost[n] = c
                n += 1
            continue
        if get_bit(query, split[node]) == 1:
            near = right[node]
            far = left[node]
        else:
            near = left[node]
            far = right[node]
        if c < max_c:
            stack_node[sp] = far
            stack_c[sp] = c + 1
            sp += 1
        stack_node[sp] = near
        stack_c[sp] = c
        sp += 1
    return n


@numba.njit(cache=True, nogil=True)
def _collect(layout, head, item, nxt, data, query, min_c, max_c,
             nbits, stamp, mark, out_rows, out_hd, n_out):
    """Mutate-bounded traversal that appends unseen payload rows with their
    true distance to ``query`` (measured on ``data``, the unpermuted codes).

    ``layout`` is the preorder form from :meth:`CombiTree.search_layout`.
    """
    stack_node = np.empty(nbits + 2, dtype=np.int64)
    stack_c = np.empty(nbits + 2, dtype=np.int64)
    stack_node[0] = 0
    stack_c[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        c = stack_c[sp]
        link = np.int64(layout[node, 0])
        if link < 0:
            if c < min_c:
                continue
            it = head[-link - 1]
            row = np.int64(item[it])
            if stamp[row] == mark:
                # every row of a leaf shares one code, so the whole leaf was seen
                continue
            hd = hamming_row(data[row], query)
            while it >= 0:
                row = np.int64(item[it])
                stamp[row] = mark
                out_rows[n_out] = row
                out_hd[n_out] = hd
                n_out += 1
                it = nxt[it]
            continue
        if get_bit(query, np.int64(layout[node, 1])) == 1:
            near = link
            far = node + 1
        else:
            near = node + 1
            far = link
        if c < max_c:
            stack_node[sp] = far
            stack_c[sp] = c + 1
            sp += 1
        stack_node[sp] = near
        stack_c[sp] = c
        sp += 1
    return n_out


@numba.njit(cache=True)
def _height(left, right, nbits):
    """Largest number of edges on a root-to-leaf path."""
    stack_node = np.empty(nbits + 2, dtype=np.int64)
    stack_d = np.empty(nbits + 2, dtype=np.int64)
    stack_node[0] = 0
    stack_d[0] = 0
    sp = 1
    best = 0
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        d = stack_d[sp]
        if left[node] < 0:
            if d > best:
                best = d
            continue
        stack_node[sp] = left[node]
        stack_d[sp] = d + 1
        stack_node[sp + 1] = right[node]
        stack_d[sp + 1] = d + 1
        sp += 2
    return best


@numba.njit(cache=True)
def _preorder(left, right, n):
    order = np.empty(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    stack[0] = 0
    sp = 1
    k = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        order[k] = node
        k += 1
        if left[node] >= 0:
            stack[sp] = right[node]
            stack[sp + 1] = left[node]
            sp += 2
    return order


@numba.njit(cache=True)
def _relink(head, item, nxt, entry_order, m):
    """Copy payload lists into contiguous runs following ``entry_order``."""
    e = entry_order.shape[0]
    new_item = np.empty(m, dtype=np.uint64)
    new_next = np.empty(m, dtype=np.int64)
    new_head = np.empty(e, dtype=np.int64)
    new_tail = np.empty(e, dtype=np.int64)
    k = 0
    for j in range(e):
        new_head[j] = k
        it = head[entry_order[j]]
        while it >= 0:
            new_item[k] = item[it]
            new_next[k] = k + 1
            k += 1
            it = nxt[it]
        new_next[k - 1] = -1
        new_tail[j] = k - 1
    return new_head, new_tail, new_item, new_next


# -- tree --------------------------------------------------------------------


def _grow(arr: np.ndarray, needed: int) -> np.ndarray:
    if arr.shape[0] >= needed:
        return arr
    cap = max(needed, 2 * arr.shape[0], 16)
    out = np.empty((cap,) + arr.shape[1:], dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


class CombiTree:
    """One ComBI tree over codes already relabeled by ``ordering``."""

    def __init__(self, length: int, ordering: BitOrdering | None = None):
        if ordering is None:
            ordering = BitOrdering.identity(length)
        if ordering.length != length:
            raise InvalidArgument("ordering length does not match tree length")
        self.length = length
        self.ordering = ordering
        self._start = np.empty(0, dtype=np.int64)
        self._end = np.empty(0, dtype=np.int64)
        self._ref = np.empty(0, dtype=np.int64)
        self._left = np.empty(0, dtype=np.int64)
        self._right = np.empty(0, dtype=np.int64)
        self._cb = np.empty((0, n_words(length)), dtype=np.uint64)
        self._head = np.empty(0, dtype=np.int64)
        self._tail = np.empty(0, dtype=np.int64)
        self._item = np.empty(0, dtype=np.uint64)
        self._next = np.empty(0, dtype=np.int64)
        self._counts = np.zeros(3, dtype=np.int64)
        self._split_cache: np.ndarray | None = None
        self._layout: np.ndarray | None = None
        self._compact = True

    # sizes
    @property
    def node_count(self) -> int:
        return int(self._counts[0])

    @property
    def leaf_count(self) -> int:
        # one codebook entry per distinct stored code, i.e. per leaf
        return int(self._counts[1])

    @property
    def item_count(self) -> int:
        return int(self._counts[2])

    def __len__(self) -> int:
        return self.item_count

    @property
    def codebook(self) -> Codebook:
        return Codebook(self._cb[: self.leaf_count], self.length)

    def _reserve(self, nodes: int, entries: int, items: int) -> None:
        n, e, i = (int(c) for c in self._counts)
        for name in ("_start", "_end", "_ref", "_left", "_right"):
            setattr(self, name, _grow(getattr(self, name), n + nodes))
        self._cb = _grow(self._cb, e + entries)
        self._head = _grow(self._head, e + entries)
        self._tail = _grow(self._tail, e + entries)
        self._item = _grow(self._item, i + items)
        self._next = _grow(self._next, i + items)

    def _check_words(self, words: np.ndarray) -> np.ndarray:
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != n_words(self.length):
            raise InvalidArgument(f"codes do not have {self.length} bits")
        return words

    def insert_words(self, words: np.ndarray, idents: np.ndarray) -> int:
        """Insert packed, already-relabeled codes; return the count of new leaves."""
        words = self._check_words(words)
        idents = np.ascontiguousarray(idents, dtype=np.uint64)
        if idents.shape != (words.shape[0],):
            raise InvalidArgument("one identifier per code is required")
        m = words.shape[0]
        self._reserve(2 * m, m, m)
        self._split_cache = None
        self._layout = None
        self._compact = False
        return int(
            _insert_many(
                self._start, self._end, self._ref, self._left, self._right,
                self._cb, self._head, self._tail, self._item, self._next,
                self._counts, words, idents, self.length,
            )
        )

    def compact(self) -> None:
        """Renumber nodes in preorder and store leaf payloads contiguously.

        The structure is unchanged; searches touch memory mostly in order
        afterwards.  Spare capacity is released.
        """
        n, e, m = (int(c) for c in self._counts)
        if n == 0:
            return
        order = _preorder(self._left, self._right, n)
        new_of = np.empty(n, dtype=np.int64)
        new_of[order] = np.arange(n)
        left = self._left[order]
        right = self._right[order]
        ref = self._ref[order]
        is_leaf = left < 0
        entry_order = ref[is_leaf]
        new_ent = np.empty(e, dtype=np.int64)
        new_ent[entry_order] = np.arange(e)
        self._start = self._start[order]
        self._end = self._end[order]
        self._ref = new_ent[ref]
        self._left = np.where(is_leaf, -1, new_of[np.maximum(left, 0)])
        self._right = np.where(is_leaf, -1, new_of[np.maximum(right, 0)])
        self._cb = self._cb[entry_order]
        self._head, self._tail, self._item, self._next = _relink(
            self._head, self._item, self._next, entry_order, m
        )
        self._split_cache = None
        self._layout = None
        self._compact = True

    def search_layout(self) -> np.ndarray:
        """``(n, 2)`` int32 rows for the forest search path, in preorder.

        The left child of internal node ``i`` is ``i + 1``.  Column 0 holds
        the right child, or ``-(entry + 1)`` for a leaf; column 1 holds the
        bit of the unpermuted query tested at the node.
        """
        if self._layout is None:
            if not self._compact:
                self.compact()
            n = self.node_count
            lay = np.empty((n, 2), dtype=np.int32)
            leaf = self._left[:n] < 0
            lay[:, 0] = np.where(leaf, -self._ref[:n] - 1, self._right[:n])
            lay[:, 1] = self.split_source()
            self._layout = lay
        return self._layout

    # inspection
    def payload(self, entry: int) -> list[int]:
        out = []
        it = int(self._head[entry])
        while it >= 0:
            out.append(int(self._item[it]))
            it = int(self._next[it])
        return out

    def node(self, i: int) -> CombiNode:
        if not 0 <= i < self.node_count:
            raise IndexError(i)
        leaf = self._left[i] < 0
        return CombiNode(
            start_bit=int(self._start[i]),
            end_bit=int(self._end[i]),
            ref_index=int(self._ref[i]),
            left=None if leaf else int(self._left[i]),
            right=None if leaf else int(self._right[i]),
            payload=tuple(self.payload(int(self._ref[i]))) if leaf else (),
        )

    def preorder(self):
        """Yield ``(node_index, depth)`` root first, left subtree before right."""
        if self.node_count == 0:
            return
        stack = [(0, 0)]
        while stack:
            i, d = stack.pop()
            yield i, d
            if self._left[i] >= 0:
                stack.append((int(self._right[i]), d + 1))
                stack.append((int(self._left[i]), d + 1))

    def structure(self) -> tuple:
        """Canonical shape: preorder ``(start, end, payload-or-None)`` records.

        Two trees with equal structure have the same covered ranges, split
        bits, branching and leaf contents, regardless of storage order.
        """
        out = []
        for i, _ in self.preorder():
            if self._left[i] < 0:
                out.append((int(self._start[i]), int(self._end[i]),
                            tuple(self.payload(int(self._ref[i])))))
            else:
                out.append((int(self._start[i]), int(self._end[i]), None))
        return tuple(out)

    def height(self) -> int:
        if self.node_count == 0:
            return 0
        return int(_height(self._left, self._right, self.length))

    def arrays(self) -> dict[str, np.ndarray]:
        n = self.node_count
        return {
            "start": self._start[:n],
            "end": self._end[:n],
            "ref": self._ref[:n],
            "left": self._left[:n],
            "right": self._right[:n],
        }

    def split_source(self) -> np.ndarray:
        """For each node, the bit of the *unpermuted* query that its split tests."""
        if self._split_cache is None:
            n = self.node_count
            end = np.minimum(self._end[:n], self.length - 1)
            self._split_cache = np.ascontiguousarray(self.ordering.perm[end], dtype=np.int64)
        return self._split_cache

    @classmethod
    def _from_arrays(cls, length, ordering, start, end, ref, left, right, cb, payloads):
        tree = cls(length, ordering)
        n = start.shape[0]
        e = cb.shape[0]
        m = sum(len(p) for p in payloads)
        tree._reserve(n, e, m)
        tree._start[:n] = start
        tree._end[:n] = end
        tree._ref[:n] = ref
        tree._left[:n] = left
        tree._right[:n] = right
        tree._cb[:e] = cb
        it = 0
        for entry, ids in enumerate(payloads):
            tree._head[entry] = it
            for j, ident in enumerate(ids):
                tree._item[it] = ident
                tree._next[it] = it + 1 if j + 1 < len(ids) else -1
                it += 1
            tree._tail[entry] = it - 1
        tree._counts[:] = (n, e, m)
        tree._compact = False
        return tree


def combi_insert(tree: CombiTree, code: BitCode, ident: int) -> CombiTree:
    """Insert one code (already relabeled by ``tree.ordering``)."""
    if code.length != tree.length:
        raise InvalidArgument(f"code length {code.length} != tree length {tree.length}")
    tree.insert_words(code.words[None, :], np.array([ident], dtype=np.uint64))
    return tree


def combi_search(tree: CombiTree, query: BitCode, budget: MutateBudget) -> list[Neighbor]:
    """All payload ids of leaves reachable with a mutate count inside the budget.

    ``query`` must already be relabeled by ``tree.ordering``.  Distances are
    full-code Hamming distances to the leaves' stored codes.
    """
    if query.length != tree.length:
        raise InvalidArgument(f"query length {query.length} != tree length {tree.length}")
    budget.check(tree.length)
    if tree.node_count == 0:
        return []
    q = query.words
    n = tree.node_count
    out_ent = np.empty(tree.leaf_count, dtype=np.int64)
    out_cost = np.empty(tree.leaf_count, dtype=np.int64)
    found = _search(
        tree._left[:n], tree._right[:n], tree._ref[:n], tree._end[:n], q,
        budget.min_mutate, budget.max_mutate, tree.length, out_ent, out_cost,
    )
    result = []
    cb = tree._cb
    for entry in out_ent[:found].tolist():
        hd = int(sum(int(w).bit_count() for w in (cb[entry] ^ q)))
        result.extend(Neighbor(ident, hd) for ident in tree.payload(entry))
    return result
