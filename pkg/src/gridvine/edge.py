"""Single-edge pipeline: ranks -> histogram -> estimator -> IPFP -> h-tables."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import estimators
from .errors import DataError
from .hfunc import HTables, Side, build_h_tables, h_forward, h_inverse
from .ipfp import DensityGrid, IpfpReport, project
from .transform import PseudoObs, histogram, pseudo_observations

ESTIMATORS = ("hist", "shrink", "kde", "import")
INTERPOLATIONS = ("bilinear", "constant")


@dataclass(frozen=True)
class EdgeConfig:
    m: int = 64
    estimator: str = "shrink"
    alpha: float | str | None = None
    bandwidth: float | None = None
    k_ipfp: int = 15
    interpolation: str = "bilinear"
    rerank: bool = True
    grid_dir: str | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise DataError(f"unknown edge estimator {self.estimator!r}; choose from {ESTIMATORS}")
        if self.interpolation not in INTERPOLATIONS:
            raise DataError(f"unknown interpolation {self.interpolation!r}")
        if self.m < 2:
            raise DataError("grid size m must be >= 2")
        if self.k_ipfp < 0:
            raise DataError("k_ipfp must be non-negative")
        if isinstance(self.alpha, str) and self.alpha != "auto":
            raise DataError(f"alpha must be a number or 'auto', got {self.alpha!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EdgeModel:
    grid: DensityGrid
    htables: HTables
    report: IpfpReport | None = None

    @classmethod
    def from_grid(cls, grid: DensityGrid, report: IpfpReport | None = None) -> "EdgeModel":
        return cls(grid, build_h_tables(grid), report)

    @classmethod
    def independence(cls, m: int) -> "EdgeModel":
        return cls.from_grid(DensityGrid.uniform(m))

    @property
    def m(self) -> int:
        return self.grid.m

    def log_density(self, u, v, interpolation: str = "bilinear"):
        return grid_log_density(self.grid, u, v, interpolation)

    def h_u_given_v(self, u, v):
        return h_forward(self.htables, Side.U_GIVEN_V, u, v)

    def h_v_given_u(self, v, u):
        return h_forward(self.htables, Side.V_GIVEN_U, v, u)

    def hinv_u_given_v(self, w, v):
        return h_inverse(self.htables, Side.U_GIVEN_V, w, v)

    def hinv_v_given_u(self, w, u):
        return h_inverse(self.htables, Side.V_GIVEN_U, w, u)


def _center_coords(x, m: int):
    s = np.asarray(x, dtype=float) * m - 0.5
    i = np.clip(np.floor(s).astype(np.int64), 0, m - 2)
    return i, np.clip(s - i, 0.0, 1.0)


def grid_log_density(grid: DensityGrid, u, v, interpolation: str = "bilinear"):
    """Log-density at ``(u, v)``.

    ``"bilinear"`` interpolates the log grid between cell centres and holds the
    centre value in the outer half cells; ``"constant"`` reads the containing
    cell.
    """
    logg = np.log(grid.values)
    m = grid.m
    if interpolation == "constant" or m < 2:
        from .transform import cell_index

        out = logg[cell_index(u, m), cell_index(v, m)]
    else:
        i, fu = _center_coords(u, m)
        j, fv = _center_coords(v, m)
        out = (
            (1.0 - fu) * (1.0 - fv) * logg[i, j]
            + fu * (1.0 - fv) * logg[i + 1, j]
            + (1.0 - fu) * fv * logg[i, j + 1]
            + fu * fv * logg[i + 1, j + 1]
        )
    return float(out) if np.ndim(out) == 0 else out


def edge_file_stem(label: str) -> str:
    return "edge_" + "".join(ch if ch.isalnum() else "_" for ch in label)


def estimate_raw(h, cfg: EdgeConfig, label: str | None = None) -> estimators.RawGrid:
    if cfg.estimator == "hist":
        return estimators.estimate_raw_histogram(h)
    if cfg.estimator == "shrink":
        return estimators.estimate_shrinkage(h, cfg.alpha)
    if cfg.estimator == "kde":
        return estimators.estimate_grid_kde(h, cfg.bandwidth, cfg.alpha)
    if cfg.grid_dir is None or label is None:
        raise DataError("the import estimator needs grid_dir and an edge label")
    return estimators.import_grid(Path(cfg.grid_dir) / edge_file_stem(label), expected_m=cfg.m)


def fit_edge(u, v, cfg: EdgeConfig = EdgeConfig(), label: str | None = None) -> EdgeModel:
    """Fit one bivariate edge on copula-scale data ``(u, v)``."""
    if cfg.rerank:
        obs = pseudo_observations(u, v)
    else:
        obs = PseudoObs(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    h = histogram(obs, cfg.m)
    raw = estimate_raw(h, cfg, label)
    grid, report = project(raw, cfg.k_ipfp)
    return EdgeModel.from_grid(grid, report)
