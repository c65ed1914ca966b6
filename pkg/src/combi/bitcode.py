"""Fixed-length bit codes, random-hyperplane hashing and bit orderings.

Bit ``i`` of a code is the output of the ``i``-th hash function.  Packed
storage is little-endian 64-bit words: bit ``i`` lives in word ``i // 64``
at position ``i % 64``; bits past ``length`` are always zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument
from .rng import MASK64, Xoshiro256

MAX_BITS = 4096

ORDERING_KINDS = (
    "identity",
    "reverse",
    "rotate_half",
    "reverse_rotate_half",
    "seeded_permutation",
    "custom",
)


def n_words(length: int) -> int:
    return (length + 63) // 64


def _check_length(length: int) -> None:
    if not 1 <= length <= MAX_BITS:
        raise InvalidArgument(f"bit length must be in [1, {MAX_BITS}], got {length}")


@dataclass(frozen=True)
class BitCode:
    """An immutable bit string of ``length`` bits.

    ``value`` holds the bits as a Python integer (bit ``i`` of the code is
    bit ``i`` of the integer), which is exactly the little-endian
    concatenation of the packed words.
    """

    length: int
    value: int = 0

    def __post_init__(self):
        _check_length(self.length)
        if self.value < 0 or self.value >> self.length:
            raise InvalidArgument("code has bits set at or beyond its length")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitCode":
        value = 0
        length = 0
        for i, bit in enumerate(bits):
            if bit not in (0, 1, True, False):
                raise InvalidArgument(f"bit {i} is {bit!r}, expected 0 or 1")
            value |= int(bit) << i
            length = i + 1
        return cls(length, value)

    @classmethod
    def from_string(cls, text: str) -> "BitCode":
        """Parse ``"0011"`` as bit0=0, bit1=0, bit2=1, bit3=1."""
        if set(text) - {"0", "1"}:
            raise InvalidArgument(f"not a bit string: {text!r}")
        return cls.from_bits(int(ch) for ch in text)

    @classmethod
    def from_words(cls, words: Sequence[int] | np.ndarray, length: int) -> "BitCode":
        _check_length(length)
        words = [int(w) for w in words]
        if len(words) != n_words(length):
            raise InvalidArgument(
                f"{len(words)} words cannot hold a {length}-bit code"
            )
        value = 0
        for i, w in enumerate(words):
            value |= (w & MASK64) << (64 * i)
        return cls(length, value)

    @property
    def words(self) -> np.ndarray:
        return np.array(
            [(self.value >> (64 * i)) & MASK64 for i in range(n_words(self.length))],
            dtype=np.uint64,
        )

    def bit(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(i)
        return (self.value >> i) & 1

    def bits(self) -> list[int]:
        return [(self.value >> i) & 1 for i in range(self.length)]

    def popcount(self) -> int:
        return self.value.bit_count()

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits())

    def __len__(self) -> int:
        return self.length

    def __str__(self) -> str:
        return self.to_string()


def hamming_distance(a: BitCode, b: BitCode) -> int:
    if a.length != b.length:
        raise InvalidArgument(f"length mismatch: {a.length} vs {b.length}")
    return (a.value ^ b.value).bit_count()


# -- packing -----------------------------------------------------------------


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack an ``(n, b)`` array of 0/1 into ``(n, ceil(b/64))`` uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 2:
        raise InvalidArgument("bits must be a 2-D array")
    n, b = bits.shape
    width = n_words(b) * 64
    if width != b:
        bits = np.concatenate([bits, np.zeros((n, width - b), dtype=np.uint8)], axis=1)
    packed = np.packbits(bits, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, length: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`."""
    words = np.ascontiguousarray(words, dtype="<u8")
    if words.ndim != 2 or words.shape[1] != n_words(length):
        raise InvalidArgument("packed shape incompatible with bit length")
    bits = np.unpackbits(words.view(np.uint8), axis=1, bitorder="little")
    return bits[:, :length]


# -- hyperplanes -------------------------------------------------------------


@dataclass(frozen=True)
class HyperplaneSet:
    dim: int
    bits: int
    weights: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.bits, self.dim):
            raise InvalidArgument(
                f"weights shape {w.shape} != ({self.bits}, {self.dim})"
            )
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def generate_hyperplanes(dim: int, bits: int, seed: int) -> HyperplaneSet:
    """Sample ``bits`` unit-norm directions in ``dim`` dimensions.

    Entries are drawn row-major from the Box-Muller normals of
    :class:`~combi.rng.Xoshiro256`, then each row is scaled to unit length.
    """
    if dim < 1 or bits < 1:
        raise InvalidArgument(f"dim and bits must be positive (got {dim}, {bits})")
    _check_length(bits)
    rng = Xoshiro256(seed)
    w = np.array(rng.normals(dim * bits), dtype=np.float64).reshape(bits, dim)
    norms = np.sqrt((w * w).sum(axis=1))
    if np.any(norms == 0.0):
        raise InvalidArgument("degenerate hyperplane sample; pick another seed")
    return HyperplaneSet(dim, bits, w / norms[:, None], seed & MASK64)


def _hash_bits(x: np.ndarray, planes: HyperplaneSet) -> np.ndarray:
    # zero projection maps to 1
    return (x @ planes.weights.T >= 0.0).astype(np.uint8)


def hash_vector(x: Sequence[float] | np.ndarray, planes: HyperplaneSet) -> BitCode:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (planes.dim,):
        raise InvalidArgument(f"vector has shape {x.shape}, planes expect ({planes.dim},)")
    return BitCode.from_bits(_hash_bits(x[None, :], planes)[0])


def hash_vectors(
    x: np.ndarray, planes: HyperplaneSet, ids: Sequence[int] | None = None
) -> "BitDataset":
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != planes.dim:
        raise InvalidArgument(
            f"vectors have shape {x.shape}, planes expect (n, {planes.dim})"
        )
    return BitDataset(pack_bits(_hash_bits(x, planes)), planes.bits, ids)


# -- orderings ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BitOrdering:
    """Bit relabeling: output bit ``j`` is input bit ``perm[j]``."""

    kind: str
    length: int
    perm: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in ORDERING_KINDS:
            raise InvalidArgument(f"unknown ordering kind {self.kind!r}")
        _check_length(self.length)
        perm = np.asarray(self.perm, dtype=np.int64)
        if perm.shape != (self.length,) or not np.array_equal(
            np.sort(perm), np.arange(self.length)
        ):
            raise InvalidArgument("perm is not a permutation of range(length)")
        perm = perm.copy()
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)

    @classmethod
    def identity(cls, length: int) -> "BitOrdering":
        return cls("identity", length, np.arange(length))

    @classmethod
    def reverse(cls, length: int) -> "BitOrdering":
        return cls("reverse", length, np.arange(length)[::-1])

    @classmethod
    def rotate_half(cls, length: int) -> "BitOrdering":
        # right rotation by floor(b/2): out[j] = in[(j - b//2) mod b]
        return cls("rotate_half", length, (np.arange(length) - length // 2) % length)

    @classmethod
    def reverse_rotate_half(cls, length: int) -> "BitOrdering":
        """Reverse, then rotate right by ``floor(b/2)``."""
        rot = (np.arange(length) - length // 2) % length
        return cls("reverse_rotate_half", length, length - 1 - rot)

    @classmethod
    def seeded(cls, length: int, seed: int) -> "BitOrdering":
        """Fisher-Yates shuffle driven by ``Xoshiro256(seed)``.

        For ``i = b-1 .. 1``: ``j = below(i + 1)``, swap ``perm[i], perm[j]``.
        """
        rng = Xoshiro256(seed)
        perm = list(range(length))
        for i in range(length - 1, 0, -1):
            j = rng.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return cls("seeded_permutation", length, perm)

    @classmethod
    def from_kind(cls, kind: str, length: int, seed: int = 0) -> "BitOrdering":
        if kind == "seeded_permutation":
            return cls.seeded(length, seed)
        if kind == "custom":
            raise InvalidArgument("custom orderings need an explicit perm")
        return getattr(cls, kind)(length)

    def inverse(self) -> "BitOrdering":
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.length)
        kind = self.kind if self.kind in ("identity", "reverse") else "custom"
        return BitOrdering(kind, self.length, inv)

    def apply_words(self, words: np.ndarray) -> np.ndarray:
        """Apply to packed ``(n, w)`` codes."""
        if self.kind == "identity":
            return np.array(words, dtype=np.uint64, copy=True)
        return pack_bits(unpack_bits(words, self.length)[:, self.perm])

    def __eq__(self, other):
        if not isinstance(other, BitOrdering):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.perm, other.perm)

    def __hash__(self):
        return hash((self.length, self.perm.tobytes()))


def apply_ordering(code: BitCode, ordering: BitOrdering) -> BitCode:
    if code.length != ordering.length:
        raise InvalidArgument(
            f"code length {code.length} != ordering length {ordering.length}"
        )
    if ordering.kind == "identity":
        return code
    value = 0
    src = code.value
    for j, p in enumerate(ordering.perm.tolist()):
        value |= ((src >> p) & 1) << j
    return BitCode(code.length, value)


# -- datasets ----------------------------------------------------------------


class BitDataset:
    """N packed codes of one length, each tagged with a distinct 64-bit id."""

    def __init__(
        self,
        words: np.ndarray,
        length: int,
        ids: Sequence[int] | np.ndarray | None = None,
    ):
        _check_length(length)
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != n_words(length):
            raise InvalidArgument(
                f"words shape {words.shape} incompatible with {length}-bit codes"
            )
        tail = length % 64
        if tail and words.shape[0] and np.any(words[:, -1] >> np.uint64(tail)):
            raise InvalidArgument("codes have bits set beyond their length")
        n = words.shape[0]
        if ids is None:
            ids = np.arange(n, dtype=np.uint64)
        else:
            ids = np.asarray(ids, dtype=np.uint64)
            if ids.shape != (n,):
                raise InvalidArgument(f"{ids.shape[0]} ids for {n} codes")
            if np.unique(ids).size != n:
                raise InvalidArgument("sample ids must be unique")
        words.setflags(write=False)
        ids = np.array(ids, dtype=np.uint64)
        ids.setflags(write=False)
        self.words = words
        self.length = length
        self.ids = ids

    @classmethod
    def from_codes(
        cls, codes: Sequence[BitCode], ids: Sequence[int] | None = None
    ) -> "BitDataset":
        if not codes:
            raise InvalidArgument("cannot infer bit length from an empty code list")
        length = codes[0].length
        if any(c.length != length for c in codes):
            raise InvalidArgument("all codes must share one length")
        return cls(np.stack([c.words for c in codes]), length, ids)

    @classmethod
    def from_strings(cls, texts: Sequence[str], ids=None) -> "BitDataset":
        return cls.from_codes([BitCode.from_string(t) for t in texts], ids)

    @classmethod
    def random(cls, n: int, length: int, seed: int = 0) -> "BitDataset":
        """Uniform random codes from ``numpy.random.default_rng(seed)``."""
        rng = np.random.default_rng(seed)
        return cls(pack_bits(rng.integers(0, 2, size=(n, length), dtype=np.uint8)), length)

    @property
    def n(self) -> int:
        return self.words.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> BitCode:
        return BitCode.from_words(self.words[i], self.length)

    @property
    def codes(self) -> list[BitCode]:
        return [self[i] for i in range(self.n)]

    def permuted(self, ordering: BitOrdering) -> "BitDataset":
        if ordering.length != self.length:
            raise InvalidArgument("ordering length does not match dataset")
        return BitDataset(ordering.apply_words(self.words), self.length, self.ids)

    def subset(self, rows: np.ndarray) -> "BitDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return BitDataset(self.words[rows], self.length, self.ids[rows])

    def __eq__(self, other):
        if not isinstance(other, BitDataset):
            return NotImplemented
        return (
            self.length == other.length
            and np.array_equal(self.words, other.words)
            and np.array_equal(self.ids, other.ids)
        )

    def __repr__(self):
        return f"BitDataset(n={self.n}, length={self.length})"
