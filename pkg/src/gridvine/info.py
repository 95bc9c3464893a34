"""Copula-entropy information estimates: MI, total correlation, baselines.

Mutual information of a pair is the expected log copula density; total
correlation of a vine is the sum of its edge terms.  KSG and a Gaussian
closed form are provided as reference estimators.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, ndtri

from .edge import EdgeConfig, fit_edge, grid_log_density
from .errors import DataError, DegenerateDataError, DimensionMismatchError, InsufficientDataError
from .ipfp import DensityGrid
from .transform import PseudoObs, pseudo_observations, pseudo_observations_matrix
from .vine import FitConfig, VineModel, _check_copula_input, edge_log_densities, fit

_GAUSS2 = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
KSG_JITTER = 1e-10


# grid MI -------------------------------------------------------------------


def grid_mi(grid: DensityGrid, obs: PseudoObs, interpolation: str = "bilinear") -> float:
    """Plug-in MI: mean interpolated log-density at the observations."""
    return float(np.mean(grid_log_density(grid, obs.u, obs.v, interpolation)))


def grid_mi_integral(grid: DensityGrid) -> float:
    """``sum c log c delta^2`` with ``0 log 0 = 0``."""
    values = np.asarray(grid.values, dtype=float)
    mask = values > 0
    return float(np.sum(values[mask] * np.log(values[mask]))) / values.size


def _cell_nodes(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Two Gauss points per half cell; exact for the piecewise-bilinear log."""
    half = np.concatenate([_GAUSS2 * 0.5, 0.5 + _GAUSS2 * 0.5])
    return ((np.arange(m)[:, None] + half[None, :]) / m).ravel(), np.full(4, 0.25)


def grid_expected_log(grid: DensityGrid, interpolation: str = "bilinear") -> float:
    """``E[log c_interp]`` when data follow the piecewise-constant grid density.

    This is the population version of :func:`grid_mi` and the per-edge term of
    a model's own total correlation.
    """
    if interpolation == "constant":
        return grid_mi_integral(grid)
    m = grid.m
    nodes, w = _cell_nodes(m)
    uu, vv = np.meshgrid(nodes, nodes, indexing="ij")
    logc = grid_log_density(grid, uu, vv, interpolation).reshape(m, 4, m, 4)
    cell_means = np.einsum("aibj,i,j->ab", logc, w, w)
    return float(np.sum(grid.values * cell_means)) / (m * m)


# total correlation ---------------------------------------------------------


@dataclass(frozen=True)
class TcDecomposition:
    total: float
    per_edge: tuple[tuple[str, float], ...]
    per_tree: tuple[tuple[int, float, float], ...]
    n: int = 0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "n": self.n,
            "per_edge": [{"edge": e, "mean_log_density": v} for e, v in self.per_edge],
            "per_tree": [{"tree": t, "signed_sum": s, "abs_share": a} for t, s, a in self.per_tree],
        }


def decompose(model: VineModel, edge_values, n: int = 0) -> TcDecomposition:
    """Aggregate per-edge terms into tree sums and absolute shares."""
    values = [float(v) for v in edge_values]
    per_edge = tuple((e.label, v) for e, v in zip(model.edges, values))
    levels = [e.tree_level for e in model.edges]
    abs_total = sum(abs(v) for v in values)
    per_tree = []
    for level in range(1, len(model.trees) + 1):
        sel = [v for lv, v in zip(levels, values) if lv == level]
        share = sum(abs(v) for v in sel) / abs_total if abs_total > 0 else 0.0
        per_tree.append((level, math.fsum(sel), share))
    return TcDecomposition(math.fsum(values), per_edge, tuple(per_tree), n)


def total_correlation(model: VineModel, heldout) -> TcDecomposition:
    """Held-out TC: per-edge mean log-density along the likelihood recursion."""
    arr, _ = _check_copula_input(model, heldout)
    cols = edge_log_densities(model, arr)
    return decompose(model, [np.mean(c) for c in cols], arr.shape[0])


def model_tc(model: VineModel) -> float:
    """TC of the fitted model itself (expected log-likelihood under the model)."""
    return math.fsum(grid_expected_log(e.grid, model.interpolation) for e in model.edges)


def block_tc(model: VineModel | None, heldout) -> float:
    arr = np.atleast_2d(np.asarray(heldout, dtype=float))
    if model is None:
        if arr.shape[1] != 1:
            raise DimensionMismatchError("only a single-variable block may omit its model")
        return 0.0
    return total_correlation(model, arr).total


def block_mi(model_joint: VineModel, model_x: VineModel | None, model_y: VineModel | None, heldout_x, heldout_y) -> float:
    """``TC(X, Y) - TC(X) - TC(Y)`` on matched held-out rows."""
    hx = np.atleast_2d(np.asarray(heldout_x, dtype=float))
    hy = np.atleast_2d(np.asarray(heldout_y, dtype=float))
    if hx.shape[0] != hy.shape[0]:
        raise DimensionMismatchError("held-out blocks have different row counts")
    joint = np.hstack([hx, hy])
    if model_joint.d != joint.shape[1]:
        raise DimensionMismatchError(f"joint model has d={model_joint.d}, blocks give {joint.shape[1]}")
    for mdl, h in ((model_x, hx), (model_y, hy)):
        if mdl is not None and mdl.d != h.shape[1]:
            raise DimensionMismatchError(f"block model has d={mdl.d}, block has {h.shape[1]} columns")
    return block_tc(model_joint, joint) - block_tc(model_x, hx) - block_tc(model_y, hy)


def fit_block_mi(x, y, cfg: FitConfig = FitConfig(), heldout_x=None, heldout_y=None) -> float:
    """Fit the joint and block vines on raw ``x``/``y`` and return :func:`block_mi`.

    Without held-out blocks the fitting rows are reused (in-sample estimate).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float).T).T
    y = np.atleast_2d(np.asarray(y, dtype=float).T).T
    joint = np.hstack([x, y])
    mj = fit(joint, cfg)
    mx = fit(x, cfg) if x.shape[1] > 1 else None
    my = fit(y, cfg) if y.shape[1] > 1 else None
    if heldout_x is None:
        hj = pseudo_observations_matrix(joint)
    else:
        hx = np.atleast_2d(np.asarray(heldout_x, dtype=float).T).T
        hy = np.atleast_2d(np.asarray(heldout_y, dtype=float).T).T
        hj = np.hstack([hx, hy])
    dx = x.shape[1]
    return block_mi(mj, mx, my, hj[:, :dx], hj[:, dx:])


def edge_mi(x, y, cfg: EdgeConfig = EdgeConfig(), interpolation: str = "bilinear") -> float:
    """Grid pipeline MI of a raw pair, evaluated in-sample on its pseudo-observations."""
    obs = pseudo_observations(x, y)
    model = fit_edge(obs.u, obs.v, cfg)
    return grid_mi(model.grid, obs, interpolation)


# KSG -----------------------------------------------------------------------


def _as_columns(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def _jitter(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    span = np.ptp(a, axis=0)
    span = np.where(span > 0, span, 1.0)
    return a + rng.uniform(-1.0, 1.0, size=a.shape) * KSG_JITTER * span


def _strict_counts(points: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Neighbours strictly closer than ``radius`` (Chebyshev), excluding self."""
    # distances are compared directly (not via shifted bounds) so the neighbour
    # that defines the radius is never counted through rounding
    tree = cKDTree(points)
    r = np.nextafter(radius, 0.0)
    return tree.query_ball_point(points, r, p=np.inf, return_length=True) - 1


def ksg_mi(x, y, k: int = 5, seed: int = 0) -> float:
    """Kraskov-Stoegbauer-Grassberger estimator (variant 1), nats.

    ``x`` and ``y`` may be vectors or ``(n, dim)`` blocks.  Columns are mapped
    to pseudo-observations first, so the estimate depends on ranks only; the
    resulting ties are broken by a tiny seeded jitter.
    """
    xa, ya = _as_columns(x), _as_columns(y)
    n = xa.shape[0]
    if ya.shape[0] != n:
        raise DimensionMismatchError("x and y must have the same number of rows")
    if k < 1 or n <= k:
        raise InsufficientDataError(f"KSG needs n > k >= 1 (n={n}, k={k})")
    rng = np.random.default_rng(seed)
    xa = _jitter(pseudo_observations_matrix(xa), rng)
    ya = _jitter(pseudo_observations_matrix(ya), rng)
    joint = np.hstack([xa, ya])
    dist, _ = cKDTree(joint).query(joint, k=k + 1, p=np.inf)
    eps = dist[:, -1]
    nx = _strict_counts(xa, eps)
    ny = _strict_counts(ya, eps)
    return float(digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1)))


def ksg_tc(data, k: int = 5, seed: int = 0) -> float:
    """Chain rule ``TC = sum_j I(X_j; X_1..X_{j-1})`` with KSG terms."""
    x = np.asarray(data, dtype=float)
    return math.fsum(ksg_mi(x[:, :j], x[:, j], k, seed + j) for j in range(1, x.shape[1]))


# Gaussian reference --------------------------------------------------------


@dataclass(frozen=True)
class GaussianBaseline:
    mi: np.ndarray
    tc: float
    correlation: np.ndarray


def gaussian_tc(corr: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(np.asarray(corr, dtype=float))
    if sign <= 0 or not np.isfinite(logdet):
        raise DegenerateDataError("correlation matrix is singular")
    return -0.5 * float(logdet)


def gaussian_pair_mi(corr: np.ndarray) -> np.ndarray:
    r = np.asarray(corr, dtype=float)
    with np.errstate(divide="ignore"):
        mi = -0.5 * np.log1p(-np.minimum(r * r, 1.0))
    np.fill_diagonal(mi, 0.0)
    return mi


def gaussian_baseline(data) -> GaussianBaseline:
    """Normal-score correlation of the pseudo-observations and its closed-form MI/TC."""
    x = np.asarray(data, dtype=float)
    n, d = x.shape
    if n <= d:
        raise InsufficientDataError(f"need n > d (n={n}, d={d})")
    z = ndtri(pseudo_observations_matrix(x))
    corr = np.corrcoef(z, rowvar=False)
    return GaussianBaseline(gaussian_pair_mi(corr), gaussian_tc(corr), corr)


def ar1_correlation(d: int, rho: float) -> np.ndarray:
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def ar1_tc(d: int, rho: float) -> float:
    """``-(d - 1)/2 log(1 - rho^2)``."""
    return -0.5 * (d - 1) * math.log1p(-rho * rho)


def ar1_sample(n: int, d: int, rho: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, d))
    x = np.empty((n, d))
    x[:, 0] = eps[:, 0]
    s = math.sqrt(1.0 - rho * rho)
    for j in range(1, d):
        x[:, j] = rho * x[:, j - 1] + s * eps[:, j]
    return x


# self-consistency ----------------------------------------------------------


@dataclass(frozen=True)
class SuiteConfig:
    estimator: str = "grid"
    trials: int = 30
    n: int = 10_000
    seed: int = 0
    rho_low: float = 0.3
    rho_high: float = 0.8
    additivity_rho: float = 0.7
    noise_levels: tuple[float, ...] = (2.0, 1.0, 0.5, 0.25)
    dpi_slack: float = 0.0
    ksg_k: int = 5
    fit: FitConfig = field(default_factory=FitConfig)
    threads: int = 1

    def __post_init__(self):
        if self.estimator not in ("grid", "ksg"):
            raise DataError(f"unknown estimator {self.estimator!r}")
        if self.trials < 1 or self.n < self.fit.min_samples:
            raise DataError("need at least one trial and n >= fit.min_samples")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["noise_levels"] = list(self.noise_levels)
        return out


@dataclass(frozen=True)
class SuiteReport:
    dpi_violation_rate: float
    additivity_err: float
    monotonicity_err: float
    dpi_margins: tuple[float, ...]
    additivity_errors: tuple[float, ...]
    monotonicity_errors: tuple[float, ...]

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _pair_mi(cfg: SuiteConfig, x, y, seed: int) -> float:
    if cfg.estimator == "ksg":
        return ksg_mi(x, y, cfg.ksg_k, seed)
    return edge_mi(x, y, cfg.fit.edge_config(), cfg.fit.interpolation)


def _block_mi(cfg: SuiteConfig, x, y, seed: int) -> float:
    if cfg.estimator == "ksg":
        return ksg_mi(x, y, cfg.ksg_k, seed)
    return fit_block_mi(x, y, cfg.fit)


def _trial(cfg: SuiteConfig, index: int) -> tuple[float, float, float]:
    seed = cfg.seed + index
    rng = np.random.default_rng(seed)
    n = cfg.n
    # DPI: Gaussian Markov chain X -> Y -> Z
    r1, r2 = rng.uniform(cfg.rho_low, cfg.rho_high, size=2)
    x = rng.standard_normal(n)
    y = r1 * x + math.sqrt(1 - r1 * r1) * rng.standard_normal(n)
    z = r2 * y + math.sqrt(1 - r2 * r2) * rng.standard_normal(n)
    margin = _pair_mi(cfg, x, y, seed) + cfg.dpi_slack - _pair_mi(cfg, x, z, seed)
    # additivity: two independent correlated pairs stacked into blocks
    r = cfg.additivity_rho
    a1, a2 = rng.standard_normal((2, n))
    b1 = r * a1 + math.sqrt(1 - r * r) * rng.standard_normal(n)
    b2 = r * a2 + math.sqrt(1 - r * r) * rng.standard_normal(n)
    joint = _block_mi(cfg, np.column_stack([a1, a2]), np.column_stack([b1, b2]), seed)
    add_err = abs(joint - _pair_mi(cfg, a1, b1, seed) - _pair_mi(cfg, a2, b2, seed))
    # monotonicity: MI must not drop as channel noise shrinks
    s = rng.standard_normal(n)
    e = rng.standard_normal(n)
    mis = [_pair_mi(cfg, s, s + sigma * e, seed) for sigma in cfg.noise_levels]
    drops = [max(0.0, a - b) for a, b in zip(mis, mis[1:])]
    return margin, add_err, float(np.mean(drops)) if drops else 0.0


def self_consistency_suite(cfg: SuiteConfig = SuiteConfig()) -> SuiteReport:
    """DPI, additivity and monotonicity checks; trial ``i`` uses seed ``cfg.seed + i``."""
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(lambda i: _trial(cfg, i), range(cfg.trials)))
    else:
        results = [_trial(cfg, i) for i in range(cfg.trials)]
    margins, adds, monos = (tuple(float(v) for v in col) for col in zip(*results))
    return SuiteReport(
        dpi_violation_rate=sum(mg < 0 for mg in margins) / len(margins),
        additivity_err=float(np.mean(adds)),
        monotonicity_err=float(np.mean(monos)),
        dpi_margins=margins,
        additivity_errors=adds,
        monotonicity_errors=monos,
    )
