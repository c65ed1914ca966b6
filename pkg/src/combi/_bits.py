"""Word-level bit helpers compiled with numba.

All codes are rows of little-endian uint64 words.  Constants are typed
``np.uint64`` so numba never promotes the arithmetic to float.
"""

import numba
import numpy as np

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_ONE = np.uint64(1)
_S1 = np.uint64(1)
_S2 = np.uint64(2)
_S4 = np.uint64(4)
_S56 = np.uint64(56)
_LOW6 = np.uint64(63)


@numba.njit(inline="always", cache=True)
def popcount64(x):
    x = x - ((x >> _S1) & _M1)
    x = (x & _M2) + ((x >> _S2) & _M2)
    x = (x + (x >> _S4)) & _M4
    return numba.int64((x * _H01) >> _S56)


@numba.njit(inline="always", cache=True)
def ctz64(x):
    # x must be non-zero
    return popcount64((x & (~x + _ONE)) - _ONE)


@numba.njit(inline="always", cache=True)
def get_bit(row, i):
    return numba.int64((row[i >> 6] >> numba.uint64(i & 63)) & _ONE)


@numba.njit(inline="always", cache=True)
def hamming_row(a, b):
    d = 0
    for w in range(a.shape[0]):
        d += popcount64(a[w] ^ b[w])
    return d


@numba.njit(inline="always", cache=True)
def first_difference(a, b, from_bit, nbits):
    """Lowest bit index >= ``from_bit``'s word where ``a`` and ``b`` differ,
    or ``nbits`` when they agree on every remaining word."""
    for w in range(from_bit >> 6, a.shape[0]):
        x = a[w] ^ b[w]
        if x != 0:
            return w * 64 + ctz64(x)
    return nbits
