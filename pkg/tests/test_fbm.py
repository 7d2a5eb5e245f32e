import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddsde.errors import DomainError, FactorizationError, ResourceError
from ddsde.fbm import (
    TimeGrid,
    circulant_eigenvalues,
    covariance_matrix,
    fbm_covariance,
    fgn_autocovariance,
    holder_seminorm,
    sample_fbm_cholesky,
    sample_fbm_circulant,
    sample_fbm_ensemble,
)
from ddsde.rng import RngStream
from ddsde.young import path_exponent

hursts = st.floats(0.05, 0.95)
times = st.floats(0.0, 10.0)


class TestTimeGrid:
    def test_points(self):
        g = TimeGrid(2.0, 8)
        assert g.dt == 0.25
        assert g.times[0] == 0.0 and g.times[-1] == 2.0
        assert np.all(np.diff(g.times) > 0)

    @pytest.mark.parametrize("T, n", [(0.0, 4), (-1.0, 4), (1.0, 0)])
    def test_rejects(self, T, n):
        with pytest.raises(DomainError):
            TimeGrid(T, n)

    def test_refine(self):
        assert TimeGrid(1.0, 4).refine(2).n_steps == 8


class TestCovariance:
    @pytest.mark.parametrize(
        "s, t, H, expected",
        [(1.0, 1.0, 0.7, 1.0), (1.0, 2.0, 0.5, 1.0), (1.0, 2.0, 0.25, 0.7071067811865476)],
    )
    def test_examples(self, s, t, H, expected):
        assert fbm_covariance(s, t, H) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("H", [0.0, 1.0, -0.2, 1.3])
    def test_bad_hurst(self, H):
        with pytest.raises(DomainError):
            fbm_covariance(1.0, 1.0, H)

    def test_negative_time(self):
        with pytest.raises(DomainError):
            fbm_covariance(-1.0, 1.0, 0.5)

    @given(times, times, hursts)
    def test_symmetric(self, s, t, H):
        assert fbm_covariance(s, t, H) == fbm_covariance(t, s, H)

    @given(times, hursts)
    def test_diagonal_is_variance(self, t, H):
        assert fbm_covariance(t, t, H) == pytest.approx(t ** (2 * H), rel=1e-12, abs=1e-300)

    @given(st.integers(0, 64), st.integers(0, 64), st.integers(1, 16))
    def test_brownian_case_is_min(self, a, b, q):
        s, t = a / q, b / q
        assert fbm_covariance(s, t, 0.5) == pytest.approx(min(s, t), abs=1e-13)

    @pytest.mark.parametrize("H", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    def test_psd(self, H):
        C = covariance_matrix(np.linspace(0, 1, 513)[1:], H)
        assert np.allclose(C, C.T)
        assert np.linalg.eigvalsh(C)[0] >= -1e-9

    def test_fgn_lag_one(self):
        # 2^(2H-1) - 1 at H = 0.75
        assert fgn_autocovariance(1, 0.75) == pytest.approx(0.41421356237309515, rel=1e-12)


class TestSamplers:
    def test_starts_at_zero_and_shape(self):
        p = sample_fbm_cholesky(TimeGrid(1.0, 64), 0.3, 2, 1)
        assert p.values.shape == (2, 65)
        assert np.all(p.values[:, 0] == 0)

    @pytest.mark.parametrize("sampler", [sample_fbm_cholesky, sample_fbm_circulant])
    def test_deterministic(self, sampler):
        g = TimeGrid(1.0, 128)
        a = sampler(g, 0.7, 2, RngStream(5))
        b = sampler(g, 0.7, 2, RngStream(5))
        assert np.array_equal(a.values, b.values)

    def test_components_use_their_own_streams(self):
        g = TimeGrid(1.0, 32)
        two = sample_fbm_cholesky(g, 0.4, 2, RngStream(9))
        one = sample_fbm_cholesky(g, 0.4, 1, RngStream(9))
        # same draws; only the BLAS summation order differs
        assert np.allclose(two.values[0], one.values[0], rtol=0, atol=1e-13)

    def test_ensemble_rows_match_single_paths(self):
        g = TimeGrid(1.0, 64)
        ens = sample_fbm_ensemble(g, 0.6, 2, 5, RngStream(3), "circulant")
        single = sample_fbm_circulant(g, 0.6, 2, RngStream(3).spawn(4))
        assert np.array_equal(ens[4], single.values)

    def test_oversize_cholesky(self):
        with pytest.raises(ResourceError):
            sample_fbm_cholesky(TimeGrid(1.0, 5000), 0.5, 1, 0)

    def test_factorization_error_carries_eigenvalue(self, monkeypatch):
        import ddsde.fbm as fbm

        fbm._fgn_cholesky.cache_clear()
        monkeypatch.setattr(fbm, "fgn_autocovariance", lambda k, H: np.where(np.asarray(k) == 1, 2.0, 1.0))
        with pytest.raises(FactorizationError, match="smallest eigenvalue"):
            fbm._fgn_cholesky(8, 0.5)
        fbm._fgn_cholesky.cache_clear()

    def test_brownian_circulant_is_random_walk(self):
        g = TimeGrid(1.0, 256)
        inc = np.diff(sample_fbm_ensemble(g, 0.5, 1, 400, 2, "circulant")[:, 0], axis=1)
        assert inc.var() == pytest.approx(g.dt, rel=0.05)
        lag1 = np.mean(inc[:, 1:] * inc[:, :-1]) / inc.var()
        assert abs(lag1) < 4 / np.sqrt(inc.size)

    def test_circulant_embedding_is_nonnegative(self):
        for H in (0.1, 0.5, 0.9):
            lam, clipped = circulant_eigenvalues(1000, H)
            assert clipped == 0.0 and lam.min() >= -1e-12

    @pytest.mark.parametrize("H", [0.3, 0.75])
    def test_variance_and_lag1(self, H):
        g = TimeGrid(1.0, 64)
        X = sample_fbm_ensemble(g, H, 1, 4000, 17, "cholesky")[:, 0]
        v = X[:, -1] ** 2
        assert abs(v.mean() - 1.0) < 3 * v.std() / np.sqrt(len(v))
        z = np.diff(X, axis=1) / g.dt**H
        prod = z[:, 10] * z[:, 11]
        rho = 2 ** (2 * H - 1) - 1
        assert abs(prod.mean() - rho) < 3 * prod.std() / np.sqrt(len(prod))

    def test_path_exponent(self):
        X = sample_fbm_ensemble(TimeGrid(1.0, 4096), 0.7, 1, 100, 4, "circulant")[:, 0]
        gamma, r2 = path_exponent(X, 1 / 4096)
        assert 0.63 <= gamma <= 0.77 and r2 > 0.99


class TestHolderSeminorm:
    def test_linear(self):
        t = np.linspace(0, 1, 101)
        assert holder_seminorm(t, t, 1.0) == pytest.approx(1.0)

    def test_constant(self):
        t = np.linspace(0, 1, 11)
        assert holder_seminorm(t, np.full(11, 3.0), 0.5) == 0.0

    def test_sqrt(self):
        # |sqrt t - sqrt s| <= sqrt(t - s), equality at s = 0
        t = np.linspace(0, 1, 201)
        assert holder_seminorm(t, np.sqrt(t), 0.5) == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.floats(0.1, 1.0))
    def test_homogeneous(self, vals, gamma):
        t = np.arange(len(vals)) / len(vals)
        v = np.asarray(vals)
        assert holder_seminorm(t, 2 * v, gamma) == pytest.approx(2 * holder_seminorm(t, v, gamma), abs=1e-12)

    @pytest.mark.parametrize("gamma", [0.0, 1.5])
    def test_bad_gamma(self, gamma):
        with pytest.raises(DomainError):
            holder_seminorm([0, 1], [0, 1], gamma)

    def test_vector_values(self):
        t = np.array([0.0, 1.0])
        assert holder_seminorm(t, np.array([[0, 0], [3, 4]]), 1.0) == 5.0
