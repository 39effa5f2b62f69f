import numpy as np
import pytest

from tvpridge import (
    RANDOM_WALK,
    CvSpec,
    RegressionData,
    ValidationError,
    build_expansion,
    credible_bands,
    cv_elastic_net,
    default_cv_spec,
    dual_ridge,
    elastic_net,
    estimate_2srr,
    estimate_glrr,
    estimate_grrrr,
    estimate_mv_grrrr,
    extract_factors,
    iterated_adaptive_ridge,
)
from tvpridge.estimators.twostep import drift_variances


def _smooth_instance(seed, T=120, K=3, noise=0.3):
    """One smoothly varying coefficient, the rest constant."""
    rng = np.random.default_rng(seed)
    t = np.arange(1, T + 1)
    beta = np.column_stack(
        [np.cos(2 * np.pi * t / T)] + [np.full(T, c) for c in rng.uniform(-1, 1, K - 1)]
    )
    X = rng.standard_normal((T, K))
    y = (X * beta).sum(axis=1) + noise * rng.standard_normal(T)
    return RegressionData(y=y, X=X), beta


def _spec(data, seed=0, points=15, decades=4):
    ex = build_expansion(data, RANDOM_WALK)
    return default_cv_spec(ex, n_folds=5, seed=seed, points=points, decades=decades)


class TestElasticNet:
    def _kkt_violation(self, X, y, b, xi, mixing, pf):
        grad = X.T @ (X @ b - y)
        worst = 0.0
        for j in range(b.size):
            g = grad[j] + xi * (1 - mixing) * pf[j] * b[j]
            if b[j] != 0:
                worst = max(worst, abs(g + xi * mixing * pf[j] * np.sign(b[j])))
            else:
                worst = max(worst, max(0.0, abs(g) - xi * mixing * pf[j]))
        return worst

    def test_kkt_conditions_hold(self):
        rng = np.random.default_rng(60)
        X = rng.standard_normal((40, 8))
        y = rng.standard_normal(40)
        pf = np.ones(8)
        b = elastic_net(X, y, xi=2.0, mixing=0.5, penalty_factor=pf)
        assert self._kkt_violation(X, y, b, 2.0, 0.5, pf) < 1e-5

    def test_zero_xi_is_least_squares(self):
        rng = np.random.default_rng(61)
        X = rng.standard_normal((30, 4))
        y = rng.standard_normal(30)
        b = elastic_net(X, y, xi=0.0)
        assert np.max(np.abs(b - np.linalg.lstsq(X, y, rcond=None)[0])) < 1e-8

    def test_unpenalized_column_stays_free(self):
        rng = np.random.default_rng(62)
        X = rng.standard_normal((50, 3))
        y = 5.0 * X[:, 0] + 0.01 * rng.standard_normal(50)
        pf = np.array([0.0, 1.0, 1.0])
        b = elastic_net(X, y, xi=50.0, mixing=0.9, penalty_factor=pf)
        assert abs(b[0] - 5.0) < 0.1
        assert np.all(np.abs(b[1:]) < 0.1)

    def test_huge_xi_kills_penalized_columns(self):
        rng = np.random.default_rng(63)
        X = rng.standard_normal((30, 4))
        y = rng.standard_normal(30)
        b = elastic_net(X, y, xi=1e8, mixing=0.5)
        assert np.all(b == 0.0)

    def test_negative_xi_rejected(self):
        with pytest.raises(ValidationError):
            elastic_net(np.ones((4, 1)), np.ones(4), xi=-1.0)

    def test_cv_returns_grid_member(self):
        rng = np.random.default_rng(64)
        X = rng.standard_normal((60, 5))
        y = X[:, 0] + 0.1 * rng.standard_normal(60)
        xi = cv_elastic_net(X, y, mixing=0.5, seed=1)
        assert xi > 0


class TestIteratedAdaptiveRidge:
    def _cd_lasso(self, X, y, lam, sweeps=5000):
        n, p = X.shape
        b = np.zeros(p)
        r = y - X @ b
        col_sq = (X**2).sum(axis=0)
        for _ in range(sweeps):
            delta = 0.0
            for j in range(p):
                rho = X[:, j] @ r + col_sq[j] * b[j]
                new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
                if new != b[j]:
                    r += X[:, j] * (b[j] - new)
                    delta = max(delta, abs(new - b[j]))
                    b[j] = new
            if delta < 1e-12:
                break
        return b

    def test_fixed_point_is_lasso_solution(self):
        rng = np.random.default_rng(65)
        X = rng.standard_normal((50, 6))
        b_true = np.array([2.0, -1.5, 0.0, 0.0, 0.0, 0.0])
        y = X @ b_true + 0.1 * rng.standard_normal(50)
        lam = 5.0
        b_ar = iterated_adaptive_ridge(X, y, lam)
        b_cd = self._cd_lasso(X, y, lam)
        assert np.max(np.abs(b_ar - b_cd)) < 1e-4
        # the truly-zero coefficients collapse numerically
        assert np.all(np.abs(b_ar[np.abs(b_cd) < 1e-10]) < 1e-5)


class TestTwoStep:
    def test_drift_variances_hit_target_mean(self):
        rng = np.random.default_rng(66)
        data = RegressionData(y=rng.standard_normal(30), X=rng.standard_normal((30, 3)))
        ex = build_expansion(data, RANDOM_WALK)
        est = dual_ridge(ex, data.y, lam=1.0, lambda0=1.0)
        v = drift_variances(est, target_mean=0.25)
        assert abs(v.mean() - 0.25) < 1e-12
        assert np.all(v >= 0)

    def test_recovers_smooth_path(self):
        data, beta = _smooth_instance(seed=70)
        est = estimate_2srr(data, RANDOM_WALK, _spec(data))
        assert np.mean(np.abs(est.beta - beta)) < 0.2
        assert np.allclose(est.fitted + est.residuals, data.y)

    def test_diagnostics_present(self):
        data, _ = _smooth_instance(seed=71, T=80)
        est = estimate_2srr(data, RANDOM_WALK, _spec(data))
        for key in ("stage1_lambda", "garch", "sigma_u_k", "converged"):
            assert key in est.diagnostics

    def test_scale_equivariance(self):
        data, _ = _smooth_instance(seed=72, T=80)
        est1 = estimate_2srr(data, RANDOM_WALK, _spec(data))
        scaled = RegressionData(y=data.y, X=data.X * np.array([2.0, 0.5, 4.0]))
        est2 = estimate_2srr(scaled, RANDOM_WALK, _spec(data))
        assert np.max(np.abs(est2.beta * np.array([2.0, 0.5, 4.0]) - est1.beta)) < 1e-6

    def test_bands_bracket_the_point_estimate(self):
        data, _ = _smooth_instance(seed=73, T=80)
        est = estimate_2srr(data, RANDOM_WALK, _spec(data), bands_level=0.9)
        assert est.bands.shape == (80, 3, 2)
        assert np.all(est.bands[..., 0] <= est.beta)
        assert np.all(est.bands[..., 1] >= est.beta)

    def test_credible_bands_widen_with_level(self):
        rng = np.random.default_rng(74)
        data = RegressionData(y=rng.standard_normal(40), X=rng.standard_normal((40, 2)))
        ex = build_expansion(data, RANDOM_WALK)
        est = dual_ridge(ex, data.y, lam=1.0, lambda0=1.0)
        narrow = credible_bands(est, ex, 0.5)
        wide = credible_bands(est, ex, 0.95)
        assert np.all(wide[..., 1] - wide[..., 0] >= narrow[..., 1] - narrow[..., 0])


class TestGlrr:
    def test_selects_the_varying_coefficient(self):
        data, beta = _smooth_instance(seed=80, T=150, K=4, noise=0.3)
        est, selected = estimate_glrr(data, RANDOM_WALK, _spec(data))
        assert selected.shape == (4,)
        assert selected[0]  # the cosine path must survive
        # every dropped coefficient really is flat in the final fit
        for k in np.flatnonzero(~selected):
            assert np.ptp(est.beta[:, k]) < 1e-6

    def test_all_constant_data_declared_constant(self):
        rng = np.random.default_rng(81)
        T, K = 150, 3
        X = rng.standard_normal((T, K))
        b = np.array([1.0, -0.5, 0.8])
        y = X @ b + 0.5 * rng.standard_normal(T)
        data = RegressionData(y=y, X=X)
        est, selected = estimate_glrr(data, RANDOM_WALK, _spec(data))
        assert not selected.any()
        assert np.max(np.ptp(est.beta, axis=0)) < 1e-6

    def test_bad_alpha_rejected(self):
        data, _ = _smooth_instance(seed=82, T=60)
        with pytest.raises(ValidationError):
            estimate_glrr(data, RANDOM_WALK, _spec(data), mix_alpha=0.0)

    def test_alpha_one_freezes_two_step_weights(self):
        data, _ = _smooth_instance(seed=83, T=80)
        est, selected = estimate_glrr(data, RANDOM_WALK, _spec(data), mix_alpha=1.0)
        state = est.diagnostics["glrr_state"]
        # without the adaptive term the weights never move after the first pass
        w = np.asarray(state.weight_history)
        assert np.max(np.abs(w[-1] - w[0]) / w[0]) < 1e-4


class TestExtractFactors:
    def test_exact_low_rank_recovery(self):
        rng = np.random.default_rng(90)
        Teff, K, r = 60, 8, 2
        F_true = rng.standard_normal((r, Teff))
        L_true = rng.standard_normal((K, r))
        U = (L_true @ F_true).T  # time x coefficient
        fs = extract_factors(U, variance_threshold=0.999)
        assert fs.rank == r
        recon = (fs.loadings @ fs.factors).T
        assert np.max(np.abs(recon - U)) < 1e-8

    def test_factor_rows_unit_mean_square(self):
        rng = np.random.default_rng(91)
        U = rng.standard_normal((40, 5))
        fs = extract_factors(U, variance_threshold=0.5)
        ms = (fs.factors**2).mean(axis=1)
        assert np.max(np.abs(ms - 1.0)) < 1e-10

    def test_sign_convention(self):
        rng = np.random.default_rng(92)
        U = rng.standard_normal((30, 4))
        fs = extract_factors(U, variance_threshold=0.99)
        for j in range(fs.rank):
            col = fs.loadings[:, j]
            assert col[np.argmax(np.abs(col))] > 0

    def test_zero_matrix_rank_zero(self):
        fs = extract_factors(np.zeros((20, 3)))
        assert fs.rank == 0
        assert fs.loadings.shape == (3, 0)

    def test_max_rank_cap(self):
        rng = np.random.default_rng(93)
        U = rng.standard_normal((50, 6))
        fs = extract_factors(U, variance_threshold=1.0 - 1e-12, max_rank=2)
        assert fs.rank == 2

    def test_nonfinite_rejected(self):
        U = np.zeros((10, 2))
        U[0, 0] = np.inf
        with pytest.raises(ValidationError):
            extract_factors(U)


def _rank1_instance(seed, T=90, K=6, noise=0.3):
    rng = np.random.default_rng(seed)
    t = np.arange(1, T + 1)
    g = np.cos(2 * np.pi * t / T)
    loadings = 0.6 * rng.standard_normal(K)
    beta = np.outer(g, loadings) + rng.uniform(-0.5, 0.5, K)
    X = rng.standard_normal((T, K))
    y = (X * beta).sum(axis=1) + noise * rng.standard_normal(T)
    return RegressionData(y=y, X=X), beta


class TestGrrrr:
    def test_objective_monotone_within_and_across_steps(self):
        data, _ = _rank1_instance(seed=100)
        est, fs = estimate_grrrr(data, RANDOM_WALK, _spec(data), rank=1)
        pairs = est.diagnostics["objective_pairs"]
        assert pairs, "no objective bookkeeping recorded"
        for before, after in pairs:
            assert after <= before + 1e-6 * max(1.0, abs(before))

    def test_recovers_rank_one_paths(self):
        data, beta = _rank1_instance(seed=101)
        est, fs = estimate_grrrr(data, RANDOM_WALK, _spec(data), rank=1)
        assert fs.rank == 1
        assert np.mean(np.abs(est.beta - beta)) < 0.25

    def test_structure_consistent_with_estimate(self):
        data, _ = _rank1_instance(seed=102)
        est, fs = estimate_grrrr(data, RANDOM_WALK, _spec(data), rank=1)
        ex = build_expansion(data, RANDOM_WALK)
        recon = est.beta[0][None, :] + np.cumsum(
            np.concatenate([np.zeros((1, ex.K)), (fs.loadings @ fs.factors).T]), axis=0
        )
        assert np.max(np.abs(recon - est.beta)) < 1e-6

    def test_factor_rows_identified(self):
        data, _ = _rank1_instance(seed=103)
        _, fs = estimate_grrrr(data, RANDOM_WALK, _spec(data), rank=1)
        assert abs(float((fs.factors**2).mean()) - 1.0) < 1e-8

    def test_max_rank_clamped_to_K(self):
        data, _ = _smooth_instance(seed=104, T=70, K=2)
        est, fs = estimate_grrrr(data, RANDOM_WALK, _spec(data), max_rank=5)
        assert fs.rank <= 2


class TestMvGrrrr:
    def test_shared_factors_across_equations(self):
        rng = np.random.default_rng(110)
        T, K, M = 80, 3, 2
        t = np.arange(1, T + 1)
        g = np.cos(2 * np.pi * t / T)
        X = rng.standard_normal((T, K))
        Y = np.empty((T, M))
        for m in range(M):
            beta = np.outer(g, 0.6 * rng.standard_normal(K)) + rng.uniform(-0.5, 0.5, K)
            Y[:, m] = (X * beta).sum(axis=1) + 0.3 * rng.standard_normal(T)
        data = RegressionData.multivariate(Y, X)
        spec = _spec(RegressionData(y=Y[:, 0], X=X))
        ests, fs = estimate_mv_grrrr(data, RANDOM_WALK, spec, max_rank=2, max_iter=20)
        assert len(ests) == M
        assert fs.loadings.shape == (M * K, fs.rank)
        assert fs.factors.shape == (fs.rank, T - 1)
        for est in ests:
            assert est.beta.shape == (T, K)

    def test_single_equation_falls_through(self):
        data, _ = _rank1_instance(seed=111, T=70, K=3)
        ests, fs = estimate_mv_grrrr(data, RANDOM_WALK, _spec(data), max_rank=2)
        assert len(ests) == 1
