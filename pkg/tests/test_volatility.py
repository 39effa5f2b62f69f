import numpy as np
import pytest

from tvpridge import (
    ValidationError,
    fit_garch11,
    normalize_mean_one,
    smooth_covariance_paths,
)


def _simulate_garch(omega, alpha, beta, T, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(T)
    eps = np.empty(T)
    s2 = omega / (1.0 - alpha - beta)
    for t in range(T):
        if t > 0:
            s2 = omega + alpha * eps[t - 1] ** 2 + beta * s2
        eps[t] = np.sqrt(s2) * z[t]
    return eps


class TestFitGarch:
    def test_recovers_parameters_on_long_sample(self):
        eps = _simulate_garch(0.1, 0.1, 0.8, 4000, seed=0)
        params, path = fit_garch11(eps)
        assert not params.fallback
        assert abs(params.omega - 0.1) < 0.1
        assert abs(params.alpha - 0.1) < 0.1
        assert abs(params.beta - 0.8) < 0.1
        assert path.shape == eps.shape and np.all(path > 0)

    def test_variance_path_matches_recursion(self):
        eps = _simulate_garch(0.2, 0.15, 0.7, 500, seed=1)
        params, path = fit_garch11(eps)
        s = np.empty(500)
        s[0] = np.mean(eps**2)
        for t in range(1, 500):
            s[t] = params.omega + params.alpha * eps[t - 1] ** 2 + params.beta * s[t - 1]
        assert np.max(np.abs(path - s)) < 1e-8

    def test_short_sample_falls_back(self):
        rng = np.random.default_rng(2)
        params, path = fit_garch11(rng.standard_normal(20))
        assert params.fallback
        assert np.all(path > 0)

    def test_constant_residuals_fall_back(self):
        params, path = fit_garch11(np.zeros(100))
        assert params.fallback
        assert np.all(path > 0)

    def test_matrix_input_rejected(self):
        with pytest.raises(ValidationError):
            fit_garch11(np.zeros((10, 2)))

    def test_homoscedastic_data_gives_flat_path(self):
        rng = np.random.default_rng(3)
        eps = rng.standard_normal(1500)
        _, path = fit_garch11(eps)
        # fitted path should hover near the unconditional variance
        assert abs(path.mean() - 1.0) < 0.2
        assert path.std() < 0.5


class TestNormalizeMeanOne:
    def test_hand_case(self):
        assert np.allclose(normalize_mean_one(np.array([1.0, 3.0])), [0.5, 1.5])

    def test_result_has_unit_mean(self):
        rng = np.random.default_rng(4)
        path = rng.uniform(0.1, 5.0, 50)
        out = normalize_mean_one(path)
        assert abs(out.mean() - 1.0) < 1e-12

    def test_nonpositive_rejected(self):
        with pytest.raises(ValidationError):
            normalize_mean_one(np.array([1.0, 0.0]))


class TestSmoothCovariancePaths:
    def test_zero_phi_is_identity(self):
        rng = np.random.default_rng(5)
        eps = rng.standard_normal((30, 2))
        out = smooth_covariance_paths(eps, np.zeros(3))
        pairs = np.column_stack(
            [eps[:, 0] ** 2, eps[:, 0] * eps[:, 1], eps[:, 1] ** 2]
        )
        assert np.max(np.abs(out - pairs)) < 1e-12

    def test_matches_direct_solve(self):
        rng = np.random.default_rng(6)
        eps = rng.standard_normal((25, 2))
        phi = np.array([0.5, 2.0, 0.5])
        out = smooth_covariance_paths(eps, phi)
        T = 25
        D = np.eye(T)
        idx = np.arange(1, T)
        D[idx, idx - 1] = -1.0
        DtD = D.T @ D
        pairs = np.column_stack(
            [eps[:, 0] ** 2, eps[:, 0] * eps[:, 1], eps[:, 1] ** 2]
        )
        for j in range(3):
            oracle = np.linalg.solve(np.eye(T) + phi[j] * DtD, pairs[:, j])
            assert np.max(np.abs(out[:, j] - oracle)) < 1e-10

    def test_scalar_phi_broadcasts(self):
        rng = np.random.default_rng(7)
        eps = rng.standard_normal((20, 3))
        out = smooth_covariance_paths(eps, np.asarray(1.0))
        assert out.shape == (20, 6)

    def test_large_phi_flattens_toward_mean_level(self):
        rng = np.random.default_rng(8)
        eps = rng.standard_normal((40, 1))
        rough = smooth_covariance_paths(eps, np.asarray(0.1))
        flat = smooth_covariance_paths(eps, np.asarray(1e6))
        assert flat.std() < rough.std()

    def test_phi_count_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            smooth_covariance_paths(np.zeros((10, 2)), np.ones(2))

    def test_negative_phi_rejected(self):
        with pytest.raises(ValidationError):
            smooth_covariance_paths(np.zeros((10, 1)), np.asarray(-1.0))
