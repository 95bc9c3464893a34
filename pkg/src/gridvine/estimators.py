"""Deterministic bivariate edge density estimators.

Each estimator maps a :class:`~gridvine.transform.Histogram` to a strictly
positive :class:`RawGrid`; validity (unit mass, uniform marginals) is left to
the IPFP projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import gridio
from .errors import DataError, DimensionMismatchError
from .transform import Histogram

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-12
KDE_TRUNCATE = 4.0


@dataclass(frozen=True)
class RawGrid:
    values: np.ndarray
    source: str
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def m(self) -> int:
        return int(self.values.shape[0])


def _floored(values: np.ndarray) -> np.ndarray:
    return np.maximum(values, EPS_FLOOR)


def default_alpha(n: int, m: int) -> float:
    """Shrinkage weight of one uniform pseudo-count per cell."""
    return m * m / (m * m + n)


def default_bandwidth(m: int) -> float:
    """One cell at m = 64, constant in physical units as m changes."""
    return 64.0 / m


def _kernel_matrix(m: int, bandwidth_cells: float) -> np.ndarray:
    """Columns are the reflected 1-D smoothing weights applied to unit impulses."""
    return ndimage.gaussian_filter1d(np.eye(m), bandwidth_cells, axis=0, mode="reflect", truncate=KDE_TRUNCATE)


def auto_alpha(h: Histogram, smoothed: np.ndarray | None = None, bandwidth_cells: float | None = None) -> float:
    """Data-driven weight on the uniform grid (James-Stein style).

    The weight is the ratio of the expected squared sampling noise of the
    (optionally smoothed) histogram to its observed squared deviation from
    uniform, capped at 1.  Cell counts are multinomial with plug-in
    probabilities ``p``; for separable smoothing ``K`` the total noise is
    ``sum(p * outer(c, c)) - sum((K p K')**2)`` over ``n - 1`` (in density
    units), where ``c`` holds the squared kernel column norms.  Without
    smoothing this reduces to ``sum(p * (1 - p)) / (n - 1)``.
    """
    m, n = h.m, h.n
    if n < 2:
        return 1.0
    d2 = 1.0 / (m * m)
    p = h.values * d2
    if smoothed is None:
        smoothed = h.values
        spread, centre = float(np.sum(p)), float(np.sum(p * p))
    else:
        k = _kernel_matrix(m, bandwidth_cells)
        c = np.sum(k * k, axis=0)
        spread = float(np.sum(p * np.outer(c, c)))
        centre = float(np.sum((k @ p @ k.T) ** 2))
    noise = (spread - centre) / ((n - 1) * d2)
    signal = float(np.sum((smoothed - 1.0) ** 2)) * d2
    if signal <= 0.0:
        return 1.0
    return min(1.0, noise / signal)


def _resolve_alpha(alpha, h: Histogram, smoothed=None, bandwidth_cells=None) -> float:
    if isinstance(alpha, str):
        if alpha != "auto":
            raise DataError(f"alpha must be a number or 'auto', got {alpha!r}")
        return auto_alpha(h, smoothed, bandwidth_cells)
    if not 0.0 <= alpha < 1.0:
        raise DataError(f"shrinkage alpha must lie in [0, 1), got {alpha}")
    return float(alpha)


def estimate_raw_histogram(h: Histogram) -> RawGrid:
    return RawGrid(_floored(h.values), "hist")


def estimate_shrinkage(h: Histogram, alpha: float | str | None = None) -> RawGrid:
    """``(1 - alpha) H + alpha``; ``alpha`` defaults to :func:`default_alpha`, ``"auto"`` uses :func:`auto_alpha`."""
    alpha = default_alpha(h.n, h.m) if alpha is None else _resolve_alpha(alpha, h)
    return RawGrid(_floored((1.0 - alpha) * h.values + alpha), "shrink")


def smooth_reflect(values: np.ndarray, bandwidth_cells: float) -> np.ndarray:
    """Gaussian smoothing truncated at 4 sigma with mirror boundaries."""
    return ndimage.gaussian_filter(
        np.asarray(values, dtype=float), sigma=bandwidth_cells, mode="reflect", truncate=KDE_TRUNCATE
    )


def estimate_grid_kde(
    h: Histogram, bandwidth_cells: float | None = None, alpha: float | str | None = None
) -> RawGrid:
    """Reflected Gaussian smoothing, optionally mixed toward uniform by ``alpha``."""
    if bandwidth_cells is None:
        bandwidth_cells = default_bandwidth(h.m)
    if not bandwidth_cells > 0.0:
        raise DataError(f"bandwidth must be positive, got {bandwidth_cells}")
    smoothed = smooth_reflect(h.values, bandwidth_cells)
    if alpha is not None:
        w = _resolve_alpha(alpha, h, smoothed, bandwidth_cells)
        smoothed = (1.0 - w) * smoothed + w
    return RawGrid(_floored(smoothed), "kde")


def import_grid(path, expected_m: int | None = None) -> RawGrid:
    """Load an externally produced grid, flooring non-positive cells."""
    values, _ = gridio.read_grid(path)
    if expected_m is not None and values.shape[0] != expected_m:
        raise DimensionMismatchError(f"imported grid has m={values.shape[0]}, expected {expected_m}")
    if not np.all(np.isfinite(values)):
        raise DataError(f"imported grid {path} contains non-finite values")
    warnings: tuple[str, ...] = ()
    low = int(np.count_nonzero(values < EPS_FLOOR))
    if low:
        msg = f"{low} cell(s) below {EPS_FLOOR:g} floored in {path}"
        log.warning(msg)
        warnings = (msg,)
    return RawGrid(_floored(values), "external", warnings)
