"""Projection of positive grids onto discrete copula densities.

Alternating row and column scaling (Sinkhorn / IPFP) converges, for strictly
positive input, to the grid with uniform marginals closest to the input in KL
divergence.  One iteration is one row pass followed by one column pass, so the
column marginals are exact after every iteration and the residual sits in the
rows.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatchError

_LOG_FALLBACK = 1e-300


@dataclass(frozen=True)
class DensityGrid:
    """Copula density on an m x m grid; ``values[a, b]`` has u in cell a, v in cell b."""

    values: np.ndarray

    @property
    def m(self) -> int:
        return int(self.values.shape[0])

    @property
    def delta(self) -> float:
        return 1.0 / self.m

    @classmethod
    def uniform(cls, m: int) -> "DensityGrid":
        return cls(np.ones((m, m)))


@dataclass(frozen=True)
class IpfpReport:
    iterations: int
    max_row_err: np.ndarray
    max_col_err: np.ndarray
    mass_err: float
    wall_time: float


def _values(grid) -> np.ndarray:
    return np.asarray(getattr(grid, "values", grid), dtype=float)


def marginal_errors(values: np.ndarray) -> tuple[float, float]:
    m = values.shape[0]
    row = float(np.max(np.abs(values.sum(axis=1) / m - 1.0)))
    col = float(np.max(np.abs(values.sum(axis=0) / m - 1.0)))
    return row, col


def validity_report(grid) -> tuple[float, float, float]:
    """(max row deviation, max column deviation, |mass - 1|)."""
    values = _values(grid)
    row, col = marginal_errors(values)
    mass = float(values.sum()) / values.shape[0] ** 2
    return row, col, abs(mass - 1.0)


def _project_log(values: np.ndarray, k: int, tol: float | None):
    m = values.shape[0]
    logd = np.log(values)
    logm = np.log(m)
    rows, cols = [], []
    for _ in range(k):
        logd = logd - (logsumexp(logd, axis=1, keepdims=True) - logm)
        logd = logd - (logsumexp(logd, axis=0, keepdims=True) - logm)
        r, c = marginal_errors(np.exp(logd))
        rows.append(r)
        cols.append(c)
        if tol is not None and r < tol and c < tol:
            break
    return np.exp(logd), rows, cols


def project(raw, k: int = 15, tol: float | None = None) -> tuple[DensityGrid, IpfpReport]:
    """Run ``k`` IPFP iterations (fewer if both marginal errors drop below ``tol``)."""
    if k < 0:
        raise ValueError("iteration count must be non-negative")
    start = time.perf_counter()
    values = _values(raw).copy()
    m = values.shape[0]
    if np.min(values) < _LOG_FALLBACK:
        values, rows, cols = _project_log(values, k, tol)
    else:
        rows, cols = [], []
        for _ in range(k):
            values *= m / values.sum(axis=1, keepdims=True)
            values *= m / values.sum(axis=0, keepdims=True)
            r, c = marginal_errors(values)
            rows.append(r)
            cols.append(c)
            if tol is not None and r < tol and c < tol:
                break
    if not rows:
        values *= m * m / values.sum()
    mass_err = abs(float(values.sum()) / (m * m) - 1.0)
    report = IpfpReport(
        iterations=len(rows),
        max_row_err=np.array(rows),
        max_col_err=np.array(cols),
        mass_err=mass_err,
        wall_time=time.perf_counter() - start,
    )
    return DensityGrid(values), report


def kl_divergence(p, q) -> float:
    """``sum (p log(p / q) - p + q) delta^2`` with ``0 log 0 = 0``.

    The ``- p + q`` terms make this the generalized (I-)divergence, which is
    non-negative even when ``q`` is not normalized; for unit-mass ``p`` it
    differs from ``sum p log(p/q) delta^2`` by the constant ``mass(q) - 1``.
    """
    pv, qv = _values(p), _values(q)
    if pv.shape != qv.shape:
        raise DimensionMismatchError(f"grid shapes differ: {pv.shape} vs {qv.shape}")
    m = pv.shape[0]
    mask = pv > 0
    div = np.sum(pv[mask] * np.log(pv[mask] / qv[mask])) - pv.sum() + qv.sum()
    return max(float(div) / (m * m), 0.0)
