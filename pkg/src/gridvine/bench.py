"""Benchmark harness: bivariate edge accuracy, IPFP ablation, TC scaling."""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import info, vine, zoo
from .edge import EdgeConfig, estimate_raw
from .errors import DataError
from .ipfp import project, validity_report
from .transform import histogram, pseudo_observations, pseudo_observations_matrix
from .zoo import CopulaSpec

SEED_STRIDE = 1_000_000
METHODS = ("hist", "shrink", "kde", "kde+auto", "shrink+auto", "oracle")
REFERENCE_M = 256


def case_seed(root: int, index: int) -> int:
    return root * SEED_STRIDE + index


# grid functionals ----------------------------------------------------------


def grid_cdf_nodes(values: np.ndarray) -> np.ndarray:
    """``C(a/m, b/m)`` for ``a, b = 0..m`` of a piecewise-constant density."""
    m = values.shape[0]
    out = np.zeros((m + 1, m + 1))
    out[1:, 1:] = np.cumsum(np.cumsum(values, axis=0), axis=1) / (m * m)
    return out


def grid_tau(values) -> float:
    """Kendall's tau ``4 E[C(U, V)] - 1`` of a piecewise-constant density.

    Inside cell ``(a, b)`` the CDF is bilinear in the fractional position, so
    the expectation over the cell has a closed form in the corner value, the
    two strip masses and the cell mass.
    """
    g = np.asarray(getattr(values, "values", values), dtype=float)
    m = g.shape[0]
    mass = g / (m * m)
    corner = grid_cdf_nodes(g)[:-1, :-1]
    left = np.zeros_like(mass)
    left[1:, :] = np.cumsum(mass, axis=0)[:-1, :]
    below = np.zeros_like(mass)
    below[:, 1:] = np.cumsum(mass, axis=1)[:, :-1]
    return float(4.0 * np.sum(mass * (corner + 0.5 * left + 0.5 * below + 0.25 * mass)) - 1.0)


def grid_upper_tail(values, band: int = 4) -> float:
    """``(1 - 2q + C(q, q)) / (1 - q)`` with ``q = 1 - band/m``."""
    g = np.asarray(getattr(values, "values", values), dtype=float)
    m = g.shape[0]
    q = 1.0 - band / m
    c = grid_cdf_nodes(g)[m - band, m - band]
    return float((1.0 - 2.0 * q + c) / (1.0 - q))


def ise(estimate, reference) -> float:
    a = np.asarray(getattr(estimate, "values", estimate), dtype=float)
    b = np.asarray(getattr(reference, "values", reference), dtype=float)
    return float(np.sum((a - b) ** 2)) / a.size


def reference_tau(spec: CopulaSpec) -> float:
    if spec.is_mixture:
        return grid_tau(zoo.cell_average_grid(spec, REFERENCE_M))
    return zoo.analytic_tau(spec)


# suites --------------------------------------------------------------------


def default_suite() -> list[CopulaSpec]:
    """24 specs covering every family, both signs of dependence and all rotations."""
    return [
        zoo.independence(),
        zoo.gaussian(0.3),
        zoo.gaussian(0.5),
        zoo.gaussian(0.7),
        zoo.gaussian(-0.5),
        zoo.student_t(0.5, 4.0),
        zoo.student_t(0.7, 10.0),
        zoo.student_t(-0.3, 5.0),
        zoo.clayton(1.0),
        zoo.clayton(3.0),
        zoo.clayton(3.0, rotation=90),
        zoo.clayton(2.0, rotation=180),
        zoo.gumbel(1.5),
        zoo.gumbel(2.5),
        zoo.gumbel(2.0, rotation=90),
        zoo.gumbel(2.0, rotation=270),
        zoo.frank(5.0),
        zoo.frank(-5.0),
        zoo.frank(10.0),
        zoo.joe(2.0),
        zoo.joe(3.0, rotation=180),
        zoo.mixture([(0.5, zoo.clayton(3.0)), (0.5, zoo.gumbel(2.0))]),
        zoo.mixture([(0.3, zoo.gaussian(0.8)), (0.7, zoo.independence())]),
        zoo.mixture([(0.5, zoo.frank(8.0)), (0.5, zoo.joe(2.0))], rotation=90),
    ]


def method_config(method: str, m: int, k_ipfp: int = 15) -> EdgeConfig:
    base, _, extra = method.partition("+")
    if method not in METHODS or base == "oracle":
        raise DataError(f"unknown method {method!r}; choose from {METHODS}")
    return EdgeConfig(m=m, estimator=base, alpha="auto" if extra == "auto" else None, k_ipfp=k_ipfp)


# results -------------------------------------------------------------------


@dataclass(frozen=True)
class BenchSuiteResult:
    rows: tuple[dict, ...]
    aggregates: tuple[dict, ...]
    timings: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "aggregates": list(self.aggregates)}


def aggregate(rows) -> tuple[dict, ...]:
    """Mean and population std of every (method, metric) over cases."""
    groups: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        groups.setdefault((r["method"], r["metric"]), []).append(r["value"])
    out = []
    for (method, metric), vals in groups.items():
        out.append(
            {
                "method": method,
                "metric": metric,
                "mean": statistics.fmean(vals),
                "std": statistics.pstdev(vals),
                "count": len(vals),
            }
        )
    return tuple(out)


def _bench_case(spec: CopulaSpec, index: int, methods, n: int, m: int, root: int, k_ipfp: int):
    seed = case_seed(root, index)
    truth = zoo.cell_average_grid(spec, m)
    tau_ref = reference_tau(spec)
    lam_ref = zoo.analytic_upper_tail(spec)
    uv = zoo.sample(spec, n, seed)
    h = histogram(pseudo_observations(uv[:, 0], uv[:, 1]), m)
    rows, times = [], {}
    for method in methods:
        start = time.perf_counter()
        if method == "oracle":
            grid, _ = project(truth, k_ipfp)
        else:
            grid, _ = project(estimate_raw(h, method_config(method, m, k_ipfp)), k_ipfp)
        times[method] = time.perf_counter() - start
        case = f"{index}:{root}"
        common = {"case": case, "spec": spec.label(), "seed": seed, "method": method}
        rows.append({**common, "metric": "ise", "value": ise(grid, truth)})
        rows.append({**common, "metric": "abs_dtau", "value": abs(grid_tau(grid) - tau_ref)})
        rows.append({**common, "metric": "abs_dlambda", "value": abs(grid_upper_tail(grid) - lam_ref)})
    return rows, times


def bench_bivariate(
    suite=None, methods=("hist", "shrink", "kde"), n: int = 10_000, m: int = 64, seeds=(0,), k_ipfp: int = 15, threads: int = 1
) -> BenchSuiteResult:
    """Score each method on every (spec, root seed) case.

    Case ``i`` under root seed ``r`` samples with seed ``r * 10**6 + i``.
    """
    suite = default_suite() if suite is None else list(suite)
    if not suite or not methods:
        raise DataError("bench needs at least one spec and one method")
    for method in methods:
        if method != "oracle":
            method_config(method, m)
    jobs = [(spec, i, methods, n, m, root, k_ipfp) for root in seeds for i, spec in enumerate(suite)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda job: _bench_case(*job), jobs))
    else:
        results = [_bench_case(*job) for job in jobs]
    rows = tuple(r for case_rows, _ in results for r in case_rows)
    timings: dict[str, float] = {}
    for _, times in results:
        for method, t in times.items():
            timings[method] = timings.get(method, 0.0) + t
    return BenchSuiteResult(rows, aggregate(rows), timings)


# IPFP ablation -------------------------------------------------------------

ABLATION_KS = (0, 1, 2, 5, 10, 15, 20, 30, 50, 100)


def ablation_specs() -> list[CopulaSpec]:
    return [zoo.gaussian(0.7), zoo.clayton(3.0), zoo.frank(5.0), zoo.gumbel(2.5)]


def ipfp_ablation(ks=ABLATION_KS, n: int = 10_000, m: int = 64, seed: int = 0, repeats: int = 5):
    """Final marginal errors (and median runtime) of shrinkage grids after ``k`` iterations."""
    rows, times = [], []
    for index, spec in enumerate(ablation_specs()):
        uv = zoo.sample(spec, n, case_seed(seed, index))
        raw = estimate_raw(histogram(pseudo_observations(uv[:, 0], uv[:, 1]), m), EdgeConfig(m=m))
        for k in ks:
            elapsed = []
            for _ in range(repeats):
                start = time.perf_counter()
                grid, report = project(raw, k)
                elapsed.append(time.perf_counter() - start)
            row_err, col_err, _ = validity_report(grid)
            rows.append({"spec": spec.label(), "k": k, "max_row_err": row_err, "max_col_err": col_err})
            times.append({"spec": spec.label(), "k": k, "median_seconds": statistics.median(elapsed)})
    return rows, times


# TC scaling ----------------------------------------------------------------


def tc_scaling(
    d_list=(5, 10, 20),
    rho: float = 0.7,
    n: int = 20_000,
    seeds=(0,),
    cfg: vine.FitConfig = vine.FitConfig(),
    ksg: bool = True,
    ksg_k: int = 5,
):
    """Fit a vine on AR(1) Gaussian data and score held-out TC against the truth.

    Each case draws ``2n`` rows; the first half fits the vine, the second is
    held out.  KSG (chain rule) and the Gaussian closed form run on the
    fitting half.
    """
    rows, times = [], []
    index = 0
    for root in seeds:
        for d in d_list:
            if d < 2:
                raise DataError("TC scaling needs d >= 2")
            seed = case_seed(root, index)
            index += 1
            data = info.ar1_sample(2 * n, d, rho, seed)
            fit_x, held = data[:n], data[n:]
            truth = info.ar1_tc(d, rho)
            start = time.perf_counter()
            model = vine.fit(fit_x, cfg)
            tc = info.total_correlation(model, ndtr(held)).total
            t_grid = time.perf_counter() - start
            row = {
                "d": d,
                "seed": seed,
                "tc_true": truth,
                "tc_grid": tc,
                "abs_err": abs(tc - truth),
                "rel_err": abs(tc - truth) / truth,
                "tc_gaussian": info.gaussian_baseline(fit_x).tc,
            }
            timing = {"d": d, "seed": seed, "grid_seconds": t_grid}
            if ksg:
                start = time.perf_counter()
                row["tc_ksg"] = info.ksg_tc(fit_x, ksg_k, seed)
                timing["ksg_seconds"] = time.perf_counter() - start
            rows.append(row)
            times.append(timing)
    return rows, times


def median_fit_seconds(n: int, d: int, repeats: int = 5, rho: float = 0.7, cfg: vine.FitConfig = vine.FitConfig()) -> float:
    """Median wall time of an end-to-end fit plus TC evaluation."""
    data = info.ar1_sample(n, d, rho, 0)
    u = pseudo_observations_matrix(data)
    elapsed = []
    for _ in range(repeats):
        start = time.perf_counter()
        info.total_correlation(vine.fit(data, cfg), u)
        elapsed.append(time.perf_counter() - start)
    return statistics.median(elapsed)
