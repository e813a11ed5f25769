"""Compiled GF(2) elimination kernels over 64-bit packed rows.

Rows are ``uint64`` arrays of shape (n_rows, n_words); column ``c`` lives in
word ``c // 64`` at bit ``c % 64``.
"""

import numpy as np
from numba import njit

_ONE = np.uint64(1)


@njit(cache=True)
def _top_bit(x):
    b = 0
    if x >> np.uint64(32):
        x >>= np.uint64(32)
        b += 32
    if x >> np.uint64(16):
        x >>= np.uint64(16)
        b += 16
    if x >> np.uint64(8):
        x >>= np.uint64(8)
        b += 8
    if x >> np.uint64(4):
        x >>= np.uint64(4)
        b += 4
    if x >> np.uint64(2):
        x >>= np.uint64(2)
        b += 2
    if x >> _ONE:
        b += 1
    return b


@njit(cache=True)
def _insert(row, basis, has_pivot, cur):
    # Reduces `row` against the pivot-indexed basis; returns True if it was
    # independent (and stores it), False if it reduced to zero.
    nw = row.shape[0]
    for w in range(nw):
        cur[w] = row[w]
    w = nw - 1
    while w >= 0:
        if cur[w] == 0:
            w -= 1
            continue
        c = w * 64 + _top_bit(cur[w])
        if has_pivot[c]:
            for v in range(w + 1):
                cur[v] ^= basis[c, v]
        else:
            for v in range(nw):
                basis[c, v] = cur[v]
            has_pivot[c] = True
            return True
    return False


@njit(cache=True)
def prefix_ranks(rows, n_cols):
    """out[m] = rank of the first m rows, for m = 0..n_rows."""
    n, nw = rows.shape
    width = max(n_cols, 1)
    basis = np.zeros((width, nw), dtype=np.uint64)
    has_pivot = np.zeros(width, dtype=np.bool_)
    cur = np.empty(nw, dtype=np.uint64)
    out = np.zeros(n + 1, dtype=np.int64)
    r = 0
    for m in range(n):
        if r < n_cols and _insert(rows[m], basis, has_pivot, cur):
            r += 1
        out[m + 1] = r
    return out


@njit(cache=True)
def masked_ranks(rows, n_cols, keep):
    """Rank of the row subset selected by each row of the boolean ``keep``."""
    n, nw = rows.shape
    trials = keep.shape[0]
    width = max(n_cols, 1)
    basis = np.zeros((width, nw), dtype=np.uint64)
    has_pivot = np.zeros(width, dtype=np.bool_)
    cur = np.empty(nw, dtype=np.uint64)
    out = np.zeros(trials, dtype=np.int64)
    for t in range(trials):
        has_pivot[:] = False
        r = 0
        for m in range(n):
            if keep[t, m] and r < n_cols:
                if _insert(rows[m], basis, has_pivot, cur):
                    r += 1
        out[t] = r
    return out
