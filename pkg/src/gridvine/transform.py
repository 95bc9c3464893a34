"""Rank pseudo-observations, density-scale histograms and histogram corruption."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, DimensionMismatchError, DomainError


@dataclass(frozen=True)
class PseudoObs:
    u: np.ndarray
    v: np.ndarray

    @property
    def n(self) -> int:
        return int(self.u.size)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.u, self.v])


@dataclass(frozen=True)
class Histogram:
    """Density-scale histogram: ``values.sum() * delta**2 == 1``.

    ``values[a, b]`` covers ``u`` in cell ``a`` and ``v`` in cell ``b``.
    Counts are recovered as ``n * delta**2 * values``.
    """

    values: np.ndarray
    n: int

    @property
    def m(self) -> int:
        return int(self.values.shape[0])

    @property
    def delta(self) -> float:
        return 1.0 / self.m

    def counts(self) -> np.ndarray:
        return np.rint(self.values * self.n * self.delta**2).astype(np.int64)


class Corruption(str, Enum):
    DIRECT = "direct"
    UNIFORM_MIX = "uniform_mix"
    GAUSSIAN = "gaussian"
    MULTINOMIAL = "multinomial"


def ranks_to_unit(x) -> np.ndarray:
    """Midrank ``r / (n + 1)`` transform of one column."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("expected a 1-D vector")
    if not np.all(np.isfinite(x)):
        raise DataError("values must be finite")
    return rankdata(x, method="average") / (x.size + 1.0)


def pseudo_observations(x, y) -> PseudoObs:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 1:
        raise DataError("need at least one observation")
    return PseudoObs(ranks_to_unit(x), ranks_to_unit(y))


def pseudo_observations_matrix(data) -> np.ndarray:
    """Column-wise rank transform of an ``(n, d)`` matrix."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DataError("expected an (n, d) matrix")
    if not np.all(np.isfinite(data)):
        raise DataError("values must be finite")
    return rankdata(data, method="average", axis=0) / (data.shape[0] + 1.0)


def cell_index(x, m: int) -> np.ndarray:
    """Half-open binning ``[a/m, (a+1)/m)``, with 1.0 clamped into the last cell."""
    return np.clip(np.floor(np.asarray(x, dtype=float) * m).astype(np.int64), 0, m - 1)


def histogram(obs: PseudoObs, m: int) -> Histogram:
    if int(m) != m or m < 2:
        raise DataError(f"grid size must be an integer >= 2, got {m}")
    m = int(m)
    u, v = obs.u, obs.v
    if np.any((u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)):
        raise DomainError("pseudo-observations must lie in (0, 1)")
    a = cell_index(u, m)
    b = cell_index(v, m)
    counts = np.bincount(a * m + b, minlength=m * m).reshape(m, m)
    n = obs.n
    # counts * m^2 / n keeps the mass invariant exact up to one rounding per cell
    return Histogram(counts * (m * m / n), n)


def corrupt(h: Histogram, variant, level: float = 0.0, seed: int = 0) -> Histogram:
    variant = Corruption(variant)
    if variant is Corruption.DIRECT:
        return h
    if variant is Corruption.UNIFORM_MIX:
        if not 0.0 <= level <= 1.0:
            raise DataError(f"uniform-mix level must lie in [0, 1], got {level}")
        if level == 0.0:
            return h
        return Histogram((1.0 - level) * h.values + level, h.n)
    if variant is Corruption.GAUSSIAN:
        if not level > 0.0:
            raise DataError(f"gaussian noise level must be positive, got {level}")
        rng = np.random.default_rng(seed)
        noisy = np.clip(h.values + rng.normal(0.0, level, size=h.values.shape), 0.0, None)
        mass = noisy.sum() * h.delta**2
        if mass <= 0.0:
            return Histogram(np.ones_like(h.values), h.n)
        return Histogram(noisy / mass, h.n)
    rng = np.random.default_rng(seed)
    p = (h.values * h.delta**2).ravel()
    p = p / p.sum()
    counts = rng.multinomial(h.n, p).reshape(h.values.shape)
    return Histogram(counts * (h.m * h.m / h.n), h.n)
