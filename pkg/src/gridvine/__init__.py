"""Grid-based vine copulas: edge density grids, IPFP projection, h-function
recursion, likelihood, sampling and copula-entropy information estimates."""

from .edge import EdgeConfig, EdgeModel, fit_edge
from .errors import (
    DataError,
    DegenerateDataError,
    DimensionMismatchError,
    DomainError,
    GridVineError,
    InsufficientDataError,
    InvalidSpecError,
    MalformedFileError,
    NumericalError,
    ParseError,
)
from .info import TcDecomposition, grid_mi, grid_mi_integral, ksg_mi, total_correlation
from .ipfp import DensityGrid, IpfpReport, project
from .kendall import kendall_tau
from .vine import FitConfig, VineEdge, VineModel, fit, log_likelihood, sample
from .zoo import CopulaSpec

__all__ = [
    "CopulaSpec",
    "DataError",
    "DegenerateDataError",
    "DensityGrid",
    "DimensionMismatchError",
    "DomainError",
    "EdgeConfig",
    "EdgeModel",
    "FitConfig",
    "GridVineError",
    "InsufficientDataError",
    "InvalidSpecError",
    "IpfpReport",
    "MalformedFileError",
    "NumericalError",
    "ParseError",
    "TcDecomposition",
    "VineEdge",
    "VineModel",
    "fit",
    "fit_edge",
    "grid_mi",
    "grid_mi_integral",
    "kendall_tau",
    "ksg_mi",
    "log_likelihood",
    "project",
    "sample",
    "total_correlation",
]
