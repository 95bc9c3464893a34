"""Conditional CDF (h-function) tables for grid copula densities.

For a piecewise-constant density the conditional CDF in the target coordinate
is piecewise linear, so forward evaluation interpolates a cumulative table
linearly and the inverse is exact up to rounding.  The conditioning coordinate
selects a cell (half-open binning) without interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError
from .ipfp import DensityGrid, marginal_errors
from .transform import cell_index

MAX_MARGINAL_DEV = 1e-2


class Side(str, Enum):
    U_GIVEN_V = "u|v"
    V_GIVEN_U = "v|u"


@dataclass(frozen=True)
class HTables:
    """``h_u_given_v[i, b] = P(U <= i/m | V in cell b)``; ``h_v_given_u[j, a]`` likewise.

    Both tables are ``(m + 1) x m`` with first row 0 and last row exactly 1.
    """

    h_u_given_v: np.ndarray
    h_v_given_u: np.ndarray

    @property
    def m(self) -> int:
        return int(self.h_u_given_v.shape[1])

    def table(self, side) -> np.ndarray:
        return self.h_u_given_v if Side(side) is Side.U_GIVEN_V else self.h_v_given_u


def _cumulative(values: np.ndarray) -> np.ndarray:
    """Cumulate along axis 0 and rescale each column so its last entry is 1."""
    m = values.shape[1]
    table = np.zeros((values.shape[0] + 1, m))
    np.cumsum(values, axis=0, out=table[1:])
    table /= table[-1]
    table[-1] = 1.0
    return table


def build_h_tables(grid: DensityGrid) -> HTables:
    values = np.asarray(grid.values, dtype=float)
    row, col = marginal_errors(values)
    if max(row, col) > MAX_MARGINAL_DEV:
        raise DataError(
            f"grid marginals deviate from uniform by {max(row, col):.3g} "
            f"(> {MAX_MARGINAL_DEV:g}); project it first"
        )
    return HTables(h_u_given_v=_cumulative(values), h_v_given_u=_cumulative(values.T))


def h_forward(tables: HTables, side, target, cond):
    """Conditional CDF of the target coordinate given the conditioning one."""
    table = tables.table(side)
    m = tables.m
    t = np.asarray(target, dtype=float)
    pos = np.clip(t, 0.0, 1.0) * m
    i = np.minimum(np.floor(pos).astype(np.int64), m - 1)
    frac = pos - i
    c = cell_index(cond, m)
    out = (1.0 - frac) * table[i, c] + frac * table[i + 1, c]
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def h_inverse(tables: HTables, side, w, cond):
    """Inverse of :func:`h_forward` in the target coordinate.

    Flat stretches of the cumulative table (zero-density cells) map to their
    smallest preimage.
    """
    table = tables.table(side)
    m = tables.m
    w_arr, c_arr = np.broadcast_arrays(np.asarray(w, dtype=float), cell_index(cond, m))
    scalar = w_arr.ndim == 0
    w_flat = np.clip(w_arr.ravel(), 0.0, 1.0)
    c_flat = c_arr.ravel()
    out = np.empty_like(w_flat)
    for cell in np.unique(c_flat):
        sel = np.flatnonzero(c_flat == cell)
        col = table[:, cell]
        wv = w_flat[sel]
        j = np.searchsorted(col, wv, side="left")  # first node with col[j] >= w
        exact = col[np.minimum(j, m)] == wv
        lo = np.clip(j - 1, 0, m - 1)
        width = col[lo + 1] - col[lo]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(width > 0, (wv - col[lo]) / width, 0.0)
        res = (lo + np.clip(frac, 0.0, 1.0)) / m
        res = np.where(exact, np.minimum(j, m) / m, res)
        out[sel] = res
    out[w_flat <= 0.0] = 0.0
    out[w_flat >= 1.0] = 1.0
    if scalar:
        return float(out[0])
    return out.reshape(w_arr.shape)
