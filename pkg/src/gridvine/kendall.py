"""Kendall's tau-b in O(n log n) (Knight's algorithm).

Pairs are sorted by ``(x, y)``; discordant pairs are then the inversions of
the ``y`` sequence, counted by a bottom-up merge sort.  Each merge level is a
single stable argsort over keys ``(block, value)``; since every block consists
of two sorted runs, the run-detecting sort does linear work per level.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateDataError, DimensionMismatchError, InsufficientDataError


def _tied_pairs(sorted_keys: np.ndarray) -> int:
    """Number of tied pairs in an already sorted 1-D array."""
    if sorted_keys.size == 0:
        return 0
    change = np.flatnonzero(np.diff(sorted_keys)) + 1
    bounds = np.concatenate([[0], change, [sorted_keys.size]])
    t = np.diff(bounds).astype(np.int64)
    return int(np.sum(t * (t - 1) // 2))


def count_inversions(seq) -> int:
    """Pairs ``i < j`` with ``seq[i] > seq[j]`` (non-negative integer input)."""
    a = np.asarray(seq, dtype=np.int64).copy()
    n = a.size
    if n < 2:
        return 0
    bits = int(a.max()).bit_length()
    idx = np.arange(n, dtype=np.int64)
    total = 0
    level = 0
    while (1 << level) < n:
        width = 1 << level
        block = idx >> (level + 1)
        is_right = (idx & width) != 0
        # stable order keeps left-run elements ahead of equal right-run ones,
        # so only strictly greater left elements count as inversions
        order = np.argsort((block << bits) | a, kind="stable")
        right_in_order = is_right[order]
        left_seen = np.cumsum(~right_in_order)
        # a right element in block b has (b + 1) * width left elements at or
        # before its block's end; those already passed are not greater than it
        total += int(np.sum(block[is_right] + 1)) * width - int(np.sum(left_seen[right_in_order]))
        a = a[order]
        level += 1
    return total


def _dense_ranks(x: np.ndarray) -> np.ndarray:
    return np.unique(x, return_inverse=True)[1].astype(np.int64)


def kendall_tau(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatchError("x and y must be 1-D of equal length")
    n = x.size
    if n < 2:
        raise InsufficientDataError("Kendall's tau needs at least two observations")
    rx, ry = _dense_ranks(x), _dense_ranks(y)
    if rx.max() == 0 or ry.max() == 0:
        raise DegenerateDataError("Kendall's tau is undefined when a variable is constant")
    order = np.lexsort((ry, rx))
    rx, ry = rx[order], ry[order]
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(rx)
    n3 = _tied_pairs(rx * (int(ry.max()) + 1) + ry)
    n2 = _tied_pairs(np.sort(ry))
    discordant = count_inversions(ry)
    s = n0 - n1 - n2 + n3 - 2 * discordant
    return s / math.sqrt((n0 - n1) * (n0 - n2))


def kendall_tau_bruteforce(x, y) -> float:
    """O(n^2) reference used as a test oracle."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(x.size, k=1)
    s = int(np.sum(dx[iu] * dy[iu]))
    px = int(np.count_nonzero(dx[iu]))
    py = int(np.count_nonzero(dy[iu]))
    return s / math.sqrt(px * py)


def kendall_matrix(u: np.ndarray) -> np.ndarray:
    """Pairwise tau-b for the columns of an ``(n, d)`` matrix."""
    d = u.shape[1]
    out = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] = out[j, i] = kendall_tau(u[:, i], u[:, j])
    return out


def independence_pvalue(tau: float, n: int) -> float:
    """Two-sided asymptotic p-value of tau under independence."""
    from scipy.special import ndtr

    z = 3.0 * tau * math.sqrt(n * (n - 1)) / math.sqrt(2.0 * (2 * n + 5))
    return float(2.0 * ndtr(-abs(z)))
