import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats
from scipy.special import digamma

from gridvine import info, vine, zoo
from gridvine.edge import EdgeConfig, grid_log_density
from gridvine.errors import DataError, DegenerateDataError, DimensionMismatchError, InsufficientDataError
from gridvine.ipfp import DensityGrid, project
from gridvine.transform import pseudo_observations_matrix
from gridvine.vine import FitConfig

copula_grids = st.integers(2, 6).flatmap(
    lambda m: arrays(float, (m, m), elements=st.floats(0.05, 20.0, allow_nan=False))
).map(lambda d: project(d, 5000, tol=1e-13)[0])


def ksg_bruteforce(x, y, k):
    """O(n^2) KSG variant 1 on already tie-free columns."""
    x, y = np.atleast_2d(x.T).T, np.atleast_2d(y.T).T
    n = x.shape[0]
    dx = np.max(np.abs(x[:, None, :] - x[None, :, :]), axis=2)
    dy = np.max(np.abs(y[:, None, :] - y[None, :, :]), axis=2)
    dz = np.maximum(dx, dy)
    np.fill_diagonal(dz, np.inf)
    eps = np.sort(dz, axis=1)[:, k - 1]
    np.fill_diagonal(dx, np.inf)
    np.fill_diagonal(dy, np.inf)
    nx = np.sum(dx < eps[:, None], axis=1)
    ny = np.sum(dy < eps[:, None], axis=1)
    return digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1))


class TestGridMI:
    def test_two_by_two_closed_form(self):
        g = DensityGrid(np.array([[4 / 3, 2 / 3], [2 / 3, 4 / 3]]))
        expected = 0.5 * (4 / 3 * math.log(4 / 3) + 2 / 3 * math.log(2 / 3))
        assert info.grid_mi_integral(g) == pytest.approx(expected, rel=1e-14)
        assert info.grid_mi_integral(g) == pytest.approx(0.056633, abs=5e-7)

    def test_uniform_zero(self):
        assert info.grid_mi_integral(DensityGrid.uniform(8)) == 0.0
        assert info.grid_expected_log(DensityGrid.uniform(8)) == 0.0

    @settings(max_examples=20, deadline=None)
    @given(copula_grids)
    def test_expected_log_matches_fine_quadrature(self, g):
        # midpoint rule on a fine lattice, weighted by the piecewise-constant density
        m, k = g.m, 60
        t = (np.arange(m * k) + 0.5) / (m * k)
        uu, vv = np.meshgrid(t, t, indexing="ij")
        logc = grid_log_density(g, uu, vv)
        weights = np.repeat(np.repeat(g.values, k, axis=0), k, axis=1)
        ref = np.mean(weights * logc)
        assert info.grid_expected_log(g) == pytest.approx(ref, abs=1e-4)

    def test_constant_interpolation_is_integral(self):
        g = project(zoo.cell_average_grid(zoo.frank(4.0), 8), 50)[0]
        assert info.grid_expected_log(g, "constant") == info.grid_mi_integral(g)

    def test_grid_mi_converges_to_analytic(self):
        g = project(zoo.cell_average_grid(zoo.gaussian(0.5), 128), 50)[0]
        assert info.grid_mi_integral(g) == pytest.approx(zoo.analytic_mi(zoo.gaussian(0.5)), abs=0.01)

    def test_edge_mi_gaussian(self):
        x = zoo.sample(zoo.gaussian(0.6), 50_000, 2)
        assert info.edge_mi(x[:, 0], x[:, 1]) == pytest.approx(-0.5 * math.log(1 - 0.36), abs=0.03)


class TestKSG:
    def test_matches_bruteforce(self, rng):
        z = rng.normal(size=(300, 3))
        z[:, 2] += z[:, 0]
        x, y = z[:, :2], z[:, 2]
        # reproduce the rank transform and jitter, then compare counting
        r = np.random.default_rng(5)
        xa = info._jitter(pseudo_observations_matrix(x), r)
        ya = info._jitter(pseudo_observations_matrix(y[:, None]), r)
        assert info.ksg_mi(x, y, 4, seed=5) == pytest.approx(ksg_bruteforce(xa, ya, 4), abs=1e-12)

    @pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
    def test_gaussian_pairs(self, rho):
        x = zoo.sample(zoo.gaussian(rho) if rho else zoo.independence(), 5000, 1)
        assert info.ksg_mi(x[:, 0], x[:, 1]) == pytest.approx(-0.5 * math.log(1 - rho * rho), abs=0.03)

    def test_rank_invariant(self, rng):
        x, y = rng.normal(size=1000), rng.normal(size=1000)
        y = y + x
        assert info.ksg_mi(np.exp(x), y**3, seed=1) == info.ksg_mi(x, y, seed=1)

    def test_chain_tc(self):
        data = info.ar1_sample(5000, 4, 0.6, 3)
        assert info.ksg_tc(data) == pytest.approx(info.ar1_tc(4, 0.6), rel=0.1)

    def test_input_checks(self, rng):
        with pytest.raises(DimensionMismatchError):
            info.ksg_mi(rng.normal(size=10), rng.normal(size=9))
        with pytest.raises(InsufficientDataError):
            info.ksg_mi(rng.normal(size=5), rng.normal(size=5), k=5)


class TestGaussian:
    @pytest.mark.parametrize("d, expected", [(5, 1.347), (10, 3.030), (20, 6.397), (50, 16.497)])
    def test_ar1_reference_values(self, d, expected):
        assert info.ar1_tc(d, 0.7) == pytest.approx(expected, abs=5e-4)
        assert info.gaussian_tc(info.ar1_correlation(d, 0.7)) == pytest.approx(info.ar1_tc(d, 0.7), rel=1e-10)

    def test_tc_equals_entropy_gap(self, rng):
        a = rng.normal(size=(4, 4))
        cov = a @ a.T + 4 * np.eye(4)
        sd = np.sqrt(np.diag(cov))
        corr = cov / np.outer(sd, sd)
        marg = sum(stats.norm(scale=s).entropy() for s in sd)
        joint = stats.multivariate_normal(np.zeros(4), cov).entropy()
        assert info.gaussian_tc(corr) == pytest.approx(marg - joint, rel=1e-10)

    def test_pair_mi(self):
        mi = info.gaussian_pair_mi(np.array([[1.0, 0.5], [0.5, 1.0]]))
        assert mi[0, 1] == pytest.approx(-0.5 * math.log(0.75))
        assert mi[0, 0] == 0.0

    def test_baseline_from_data(self):
        base = info.gaussian_baseline(info.ar1_sample(20_000, 5, 0.7, 1))
        assert base.tc == pytest.approx(info.ar1_tc(5, 0.7), abs=0.03)

    def test_ar1_sample_covariance(self):
        x = info.ar1_sample(200_000, 4, 0.5, 3)
        np.testing.assert_allclose(np.corrcoef(x, rowvar=False), info.ar1_correlation(4, 0.5), atol=0.01)

    def test_errors(self):
        with pytest.raises(DegenerateDataError):
            info.gaussian_tc(np.ones((2, 2)))
        with pytest.raises(InsufficientDataError):
            info.gaussian_baseline(np.ones((2, 3)))


@pytest.fixture(scope="module")
def model():
    return vine.fit(info.ar1_sample(20_000, 4, 0.7, 8), FitConfig(m=32))


class TestTotalCorrelation:
    def test_decomposition_adds_up(self, model):
        tc = info.total_correlation(model, np.random.default_rng(1).random((500, 4)))
        assert tc.total == pytest.approx(sum(v for _, v in tc.per_edge))
        assert tc.total == pytest.approx(sum(s for _, s, _ in tc.per_tree))
        assert sum(a for _, _, a in tc.per_tree) == pytest.approx(1.0)
        assert tc.to_dict()["n"] == 500

    def test_heldout_close_to_truth(self, model):
        held = stats.norm.cdf(info.ar1_sample(20_000, 4, 0.7, 9))
        assert info.total_correlation(model, held).total == pytest.approx(info.ar1_tc(4, 0.7), rel=0.1)

    def test_model_tc_monte_carlo(self, model):
        x = vine.sample(model, 50_000, 3)
        ll = vine.log_likelihood(model, x)
        se = ll.std() / math.sqrt(ll.size)
        assert abs(ll.mean() - info.model_tc(model)) < 4 * se

    def test_block_mi_of_independent_blocks(self, rng):
        x = rng.normal(size=(5000, 2))
        x[:, 1] += x[:, 0]
        y = rng.normal(size=(5000, 2))
        assert info.fit_block_mi(x, y, FitConfig(m=16)) == pytest.approx(0.0, abs=0.02)

    def test_block_mi_of_pairs(self):
        x = info.ar1_sample(20_000, 2, 0.7, 2)
        truth = -0.5 * math.log(1 - 0.49)
        assert info.fit_block_mi(x[:, :1], x[:, 1:], FitConfig(m=32)) == pytest.approx(truth, abs=0.05)

    def test_block_mi_shape_checks(self, model):
        u = np.full((3, 2), 0.5)
        with pytest.raises(DimensionMismatchError):
            info.block_mi(model, None, None, u, np.full((2, 2), 0.5))
        with pytest.raises(DimensionMismatchError):
            info.block_tc(None, u)


class TestSuite:
    def test_small_run(self):
        rep = info.self_consistency_suite(info.SuiteConfig(trials=2, n=2000, fit=FitConfig(m=16)))
        assert len(rep.dpi_margins) == 2
        assert 0.0 <= rep.dpi_violation_rate <= 1.0
        assert set(rep.to_dict()) >= {"dpi_violation_rate", "additivity_err", "monotonicity_err"}

    def test_deterministic_and_threads(self):
        cfg = info.SuiteConfig(trials=2, n=1000, fit=FitConfig(m=8))
        a = info.self_consistency_suite(cfg)
        b = info.self_consistency_suite(info.SuiteConfig(trials=2, n=1000, fit=FitConfig(m=8), threads=2))
        assert a == b

    def test_ksg_run(self):
        rep = info.self_consistency_suite(info.SuiteConfig(estimator="ksg", trials=1, n=1000))
        assert np.isfinite(rep.additivity_err)

    def test_config_validation(self):
        with pytest.raises(DataError):
            info.SuiteConfig(estimator="kde")
        with pytest.raises(DataError):
            info.SuiteConfig(n=10)
