import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from gridvine.errors import DataError, DimensionMismatchError, DomainError
from gridvine.transform import (
    Corruption,
    PseudoObs,
    cell_index,
    corrupt,
    histogram,
    pseudo_observations,
    pseudo_observations_matrix,
    ranks_to_unit,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestRanks:
    def test_midranks(self):
        np.testing.assert_allclose(ranks_to_unit([3.0, 1.0, 2.0, 2.0]), np.array([4, 1, 2.5, 2.5]) / 5)

    @given(arrays(float, st.integers(1, 50), elements=finite))
    def test_open_interval_and_mean(self, x):
        r = ranks_to_unit(x)
        assert np.all((r > 0) & (r < 1))
        # midranks always sum to n(n+1)/2
        assert r.sum() == pytest.approx(x.size / 2)

    @given(arrays(float, st.integers(2, 40), elements=finite, unique=True))
    def test_invariant_to_monotone_maps(self, x):
        # negation and power-of-two scaling are exact, hence strictly monotone in floats
        np.testing.assert_array_equal(ranks_to_unit(x), ranks_to_unit(4.0 * x))
        np.testing.assert_allclose(ranks_to_unit(x), 1.0 - ranks_to_unit(-2.0 * x), atol=1e-15)

    def test_matrix_matches_columns(self, rng):
        x = rng.normal(size=(30, 3))
        u = pseudo_observations_matrix(x)
        for j in range(3):
            np.testing.assert_array_equal(u[:, j], ranks_to_unit(x[:, j]))

    def test_rejects_bad_input(self):
        with pytest.raises(DataError):
            ranks_to_unit([1.0, np.nan])
        with pytest.raises(DimensionMismatchError):
            pseudo_observations([1.0, 2.0], [1.0])
        with pytest.raises(DataError):
            pseudo_observations_matrix(np.ones(3))


class TestHistogram:
    def test_density_scale(self, rng):
        x = rng.random((1000, 2))
        h = histogram(pseudo_observations(x[:, 0], x[:, 1]), 8)
        assert h.values.sum() * h.delta**2 == pytest.approx(1.0, abs=1e-12)
        assert h.counts().sum() == 1000

    def test_against_numpy_histogram2d(self, rng):
        x = rng.normal(size=(500, 2))
        obs = pseudo_observations(x[:, 0], x[:, 1])
        h = histogram(obs, 5)
        ref, _, _ = np.histogram2d(obs.u, obs.v, bins=5, range=[[0, 1], [0, 1]])
        np.testing.assert_array_equal(h.counts(), ref.astype(int))

    def test_cell_edges_half_open(self):
        np.testing.assert_array_equal(cell_index([0.0, 0.25, 0.2499, 1.0], 4), [0, 1, 0, 3])

    def test_domain(self):
        with pytest.raises(DomainError):
            histogram(PseudoObs(np.array([0.0, 0.5]), np.array([0.5, 0.5])), 4)
        with pytest.raises(DataError):
            histogram(PseudoObs(np.array([0.5]), np.array([0.5])), 1)

    def test_pseudo_obs_margins_are_near_uniform(self, rng):
        x = rng.normal(size=(6400, 2))
        h = histogram(pseudo_observations(x[:, 0], x[:, 1]), 8)
        np.testing.assert_allclose(h.values.mean(axis=1), 1.0)
        np.testing.assert_allclose(h.values.mean(axis=0), 1.0)


class TestCorruption:
    @pytest.fixture
    def h(self, rng):
        x = rng.random((2000, 2))
        return histogram(pseudo_observations(x[:, 0], x[:, 1]), 8)

    @pytest.mark.parametrize("variant, level", [("direct", 0), ("uniform_mix", 0.3), ("gaussian", 0.5), ("multinomial", 0)])
    def test_unit_mass(self, h, variant, level):
        out = corrupt(h, variant, level, seed=1)
        assert out.values.sum() * out.delta**2 == pytest.approx(1.0, abs=1e-12)
        assert np.all(out.values >= 0)

    def test_uniform_mix_formula(self, h):
        np.testing.assert_allclose(corrupt(h, Corruption.UNIFORM_MIX, 0.25).values, 0.75 * h.values + 0.25)

    def test_multinomial_resample_statistics(self, h):
        p = (h.values * h.delta**2).ravel()
        draws = np.stack([corrupt(h, "multinomial", seed=s).counts().ravel() for s in range(200)])
        np.testing.assert_allclose(draws.mean(axis=0), h.n * p, atol=4 * np.sqrt(h.n * p.max() / 200) + 1e-9)

    def test_gaussian_seeded(self, h):
        a = corrupt(h, "gaussian", 0.5, seed=4).values
        np.testing.assert_array_equal(a, corrupt(h, "gaussian", 0.5, seed=4).values)

    def test_bad_levels(self, h):
        with pytest.raises(DataError):
            corrupt(h, "uniform_mix", 1.5)
        with pytest.raises(DataError):
            corrupt(h, "gaussian", 0.0)
        with pytest.raises(ValueError):
            corrupt(h, "bogus")


def test_ranks_agree_with_scipy(rng):
    x = np.round(rng.normal(size=200), 1)
    np.testing.assert_array_equal(ranks_to_unit(x), stats.rankdata(x) / 201)
