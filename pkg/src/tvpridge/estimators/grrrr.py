"""Reduced-rank time variation: drift innovations constrained to U = Lambda F.

Estimation alternates two convex problems — a ridge step for the factors
(a time-varying-coefficient regression on the collapsed regressors X Lambda)
and an elastic-net step for the loadings — with the starting values refit in
both.  Each step minimizes the same penalized objective over its block, so
the recorded objective can only decrease; factor orthogonalization between
iterations is a fit-preserving reparametrization.

A literal summation-form implementation of the one-factor case is kept as an
independent cross-check (`grrrr_rank1_oracle`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..basis import (
    RANDOM_WALK,
    BasisExpansion,
    LawOfMotion,
    RegressionData,
    build_expansion,
)
from ..errors import NumericalError, ValidationError
from ..ridge_core import (
    TvpEstimate,
    VarianceProfile,
    _solve_generalized,
    solve_spd,
)
from ..tuning import CvSpec, make_folds, make_lambda_grid
from ._standardize import beta_scale_vector, destandardize_estimate, standardize
from .elastic_net import cv_elastic_net, elastic_net
from .twostep import first_stage

_B0_RIDGE = 1e-6
_OBJ_TOL = 1e-6
_MONO_SLACK = 1e-8
_MAX_ITER = 100
_MIXING = 0.5


@dataclass
class FactorStructure:
    """Low-rank decomposition of the drift innovations."""

    loadings: np.ndarray  # K x r
    factors: np.ndarray  # r x (T - 1), rows scaled to unit mean square
    rank: int
    selected_rank_history: list = field(default_factory=list)


def extract_factors(
    U: np.ndarray,
    variance_threshold: float = 0.9,
    max_rank: int = 5,
) -> FactorStructure:
    """Principal components of a (time x coefficient) innovation matrix.

    The rank is the smallest number of components whose cumulative explained
    variance reaches the threshold, capped at max_rank.  A zero matrix gives
    rank 0 (nothing varies)."""
    U = np.asarray(U, dtype=float)
    if not np.isfinite(U).all():
        raise ValidationError("innovation matrix has non-finite entries")
    Teff = U.shape[0]
    if not np.any(U):
        return FactorStructure(
            loadings=np.zeros((U.shape[1], 0)), factors=np.zeros((0, Teff)), rank=0
        )
    P, s, Vt = np.linalg.svd(U, full_matrices=False)
    energy = s**2
    cum = np.cumsum(energy) / energy.sum()
    r = int(np.searchsorted(cum, variance_threshold) + 1)
    r = min(r, max_rank, int((s > 1e-12 * s[0]).sum()))
    F = np.sqrt(Teff) * P[:, :r].T  # r x Teff, unit mean square rows
    loadings = (Vt[:r].T * s[:r]) / np.sqrt(Teff)  # K x r
    F, loadings = _fix_signs(F, loadings)
    return FactorStructure(loadings=loadings, factors=F, rank=r)


def _fix_signs(F: np.ndarray, loadings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic sign convention: largest-|.| loading entry positive."""
    F = F.copy()
    loadings = loadings.copy()
    for j in range(F.shape[0]):
        col = loadings[:, j]
        if col.size and col[np.argmax(np.abs(col))] < 0:
            loadings[:, j] = -col
            F[j] = -F[j]
    return F, loadings


def _orthogonalize(loadings: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rebalance (Lambda, F) so F rows are orthogonal with unit mean square,
    keeping the product Lambda F (hence the fit) exactly unchanged."""
    U = loadings @ F  # K x Teff
    Teff = F.shape[1]
    r = F.shape[0]
    P, s, Vt = np.linalg.svd(U, full_matrices=False)
    F_new, L_new = _fix_signs(np.sqrt(Teff) * Vt[:r], (P[:, :r] * s[:r]) / np.sqrt(Teff))
    return L_new, F_new


def _sub_law(law: LawOfMotion) -> LawOfMotion:
    # drift augmentation already happened on the base expansion
    return RANDOM_WALK if law.kind == "random_walk_drift" else law


def _f_step(
    expansion_base: BasisExpansion,
    y: np.ndarray,
    loadings: np.ndarray,
    omega: np.ndarray,
    lam_f: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ridge over (beta0, F) at fixed loadings; returns (beta0, F, fitted)."""
    X = expansion_base.X
    K = X.shape[1]
    r = loadings.shape[1]
    Xbar = X @ loadings
    aug = build_expansion(
        RegressionData(y=y, X=np.hstack([X, Xbar])), _sub_law(expansion_base.law)
    )
    b0_var = np.concatenate([np.full(K, 1.0 / _B0_RIDGE), np.zeros(r)])
    u_var = np.concatenate([np.zeros(K), np.full(r, 1.0 / lam_f)])
    theta, _, fitted = _solve_generalized(aug, y, b0_var, u_var, omega)
    blocks = theta.reshape(K + r, aug.T)
    beta0 = blocks[:K, 0]
    F = blocks[K:, 1:]
    return beta0, F, fitted


def _l_step_design(
    X: np.ndarray, Cu: np.ndarray, F: np.ndarray
) -> np.ndarray:
    """Columns X_k * (Cu F_rho'), ordered factor-major."""
    paths = Cu @ F.T  # T x r cumulated factors
    T, K = X.shape
    r = F.shape[0]
    cols = np.empty((T, r * K))
    for rho in range(r):
        cols[:, rho * K : (rho + 1) * K] = X * paths[:, [rho]]
    return cols


def _objective(
    y: np.ndarray,
    fitted: np.ndarray,
    omega: np.ndarray,
    beta0: np.ndarray,
    F: np.ndarray,
    loadings: np.ndarray,
    lam_f: float,
    xi: float,
) -> float:
    l = loadings.ravel()
    return float(
        0.5 * np.sum((y - fitted) ** 2 / omega)
        + 0.5 * _B0_RIDGE * np.sum(beta0**2)
        + 0.5 * lam_f * np.sum(F**2)
        + xi * np.sum(_MIXING * np.abs(l) + 0.5 * (1 - _MIXING) * l**2)
    )


def _fitted_from_state(
    expansion: BasisExpansion, beta0: np.ndarray, loadings: np.ndarray, F: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    beta = np.outer(expansion.c0, beta0) + expansion.Cu @ (F.T @ loadings.T)
    return beta, (expansion.X * beta).sum(axis=1)


def _cv_lambda_f(
    expansion_base: BasisExpansion,
    y: np.ndarray,
    loadings: np.ndarray,
    omega: np.ndarray,
    spec: CvSpec,
) -> float:
    """Out-of-fold tuning of the factor smoothness penalty at fixed loadings."""
    X = expansion_base.X
    K = X.shape[1]
    r = loadings.shape[1]
    aug = build_expansion(
        RegressionData(y=y, X=np.hstack([X, X @ loadings])), _sub_law(expansion_base.law)
    )
    b0_var = np.concatenate([np.full(K, 1.0 / _B0_RIDGE), np.zeros(r)])
    u_shape = np.concatenate([np.zeros(K), np.ones(r)])
    grid = make_lambda_grid(y, aug)
    folds = make_folds(aug.T, spec)
    zeros = np.zeros(K + r)
    errs = np.zeros(grid.size)
    for idx_out in folds:
        idx_in = np.setdiff1d(np.arange(aug.T), idx_out)
        L_in = aug.cross_gram(idx_in, idx_in, b0_var, zeros)
        D_in = aug.cross_gram(idx_in, idx_in, zeros, u_shape)
        L_oi = aug.cross_gram(idx_out, idx_in, b0_var, zeros)
        D_oi = aug.cross_gram(idx_out, idx_in, zeros, u_shape)
        for g, lam in enumerate(grid):
            G = L_in + D_in / lam
            G[np.diag_indices_from(G)] += omega[idx_in]
            alpha = solve_spd(G, y[idx_in])
            pred = (L_oi + D_oi / lam) @ alpha
            errs[g] += np.sum((y[idx_out] - pred) ** 2)
    return float(grid[int(np.flatnonzero(errs == errs.min()).max())])


def _alternate(
    expansion: BasisExpansion,
    y: np.ndarray,
    loadings: np.ndarray,
    omega: np.ndarray,
    lam_f: float,
    xi: float | None,
    spec: CvSpec,
    refresh_volatility: bool,
    max_iter: int,
    record_history: bool,
) -> dict:
    """Core alternation loop in standardized space; rank is fixed."""
    from ..volatility import fit_garch11, normalize_mean_one

    X = expansion.X
    K = X.shape[1]
    r = loadings.shape[1]
    F = np.zeros((r, expansion.T - 1))
    beta0 = np.zeros(K)
    b_warm = None
    history = []
    objective_pairs = []
    obj_prev = np.inf
    converged = False
    xi_val = xi

    for it in range(1, max_iter + 1):
        # factor step (exact ridge over beta0 and F at fixed loadings)
        _, fitted0 = _fitted_from_state(expansion, beta0, loadings, F)
        before = _objective(y, fitted0, omega, beta0, F, loadings, lam_f, xi_val or 0.0)
        beta0, F, fitted = _f_step(expansion, y, loadings, omega, lam_f)
        after_f = _objective(y, fitted, omega, beta0, F, loadings, lam_f, xi_val or 0.0)
        if after_f > before + _MONO_SLACK * max(1.0, abs(before)):
            raise NumericalError("factor step increased the objective")
        objective_pairs.append((before, after_f))

        # loadings step (elastic net over beta0 and vec(Lambda) at fixed F)
        w = 1.0 / np.sqrt(omega)
        design = np.hstack([X * expansion.c0[:, None], _l_step_design(X, expansion.Cu, F)])
        pf = np.concatenate([np.zeros(K), np.ones(r * K)])
        l2x = np.concatenate([np.full(K, _B0_RIDGE), np.zeros(r * K)])
        if xi_val is None:
            xi_val = cv_elastic_net(
                design * w[:, None], y * w, _MIXING, penalty_factor=pf, seed=spec.seed
            )
            after_f = _objective(y, fitted, omega, beta0, F, loadings, lam_f, xi_val)
        if b_warm is None or b_warm.shape[0] != K + r * K:
            b_warm = np.concatenate([beta0, loadings.T.ravel()])
        else:
            b_warm[:K] = beta0
            b_warm[K:] = loadings.T.ravel()
        b = elastic_net(
            design * w[:, None],
            y * w,
            xi_val,
            _MIXING,
            penalty_factor=pf,
            b_init=b_warm,
            l2_extra=l2x,
        )
        beta0 = b[:K]
        loadings = b[K:].reshape(r, K).T
        _, fitted = _fitted_from_state(expansion, beta0, loadings, F)
        after_l = _objective(y, fitted, omega, beta0, F, loadings, lam_f, xi_val)
        if after_l > after_f + _MONO_SLACK * max(1.0, abs(after_f)):
            raise NumericalError("loadings step increased the objective")
        objective_pairs.append((after_f, after_l))
        b_warm = b

        # identification: orthogonal factors, unit mean square, fixed signs
        if np.any(loadings):
            loadings, F = _orthogonalize(loadings, F)
        else:
            # all loadings zeroed: the fit ignores F, but the recorded
            # iterate still follows the unit-mean-square row convention
            ms = np.sqrt((F**2).mean(axis=1, keepdims=True))
            F = np.divide(F, ms, out=F.copy(), where=ms > 0)
        if record_history:
            history.append(
                {"beta0": beta0.copy(), "loadings": loadings.copy(), "factors": F.copy()}
            )

        if abs(obj_prev - after_l) < _OBJ_TOL * max(1.0, abs(obj_prev)):
            converged = True
            break
        obj_prev = after_l

        if refresh_volatility:
            _, fitted = _fitted_from_state(expansion, beta0, loadings, F)
            _, sigma2 = fit_garch11(y - fitted)
            omega = normalize_mean_one(sigma2)

    return {
        "beta0": beta0,
        "loadings": loadings,
        "factors": F,
        "omega": omega,
        "xi": xi_val or 0.0,
        "objective_pairs": objective_pairs,
        "history": history,
        "iterations": it,
        "converged": converged,
    }


def _finalize(
    expansion: BasisExpansion,
    y_std: np.ndarray,
    y_orig: np.ndarray,
    std,
    state: dict,
    lam_f: float,
    law: LawOfMotion,
) -> tuple[TvpEstimate, FactorStructure]:
    beta, fitted = _fitted_from_state(
        expansion, state["beta0"], state["loadings"], state["factors"]
    )
    U = state["loadings"] @ state["factors"]  # K x (T-1)
    theta = np.hstack([state["beta0"][:, None], U]).ravel()
    profile = VarianceProfile(
        sigma_eps_t=state["omega"],
        sigma_u_k=(U**2).sum(axis=1) / expansion.T,
        lambda0=_B0_RIDGE,
        lam=lam_f,
    )
    est = TvpEstimate(
        beta=beta,
        theta=theta,
        residuals=y_std - fitted,
        fitted=fitted,
        lam=lam_f,
        profile=profile,
        law=law,
        diagnostics={
            "objective_pairs": state["objective_pairs"],
            "history": state["history"],
            "iterations": state["iterations"],
            "converged": state["converged"],
            "xi": state["xi"],
            "lambda_f": lam_f,
        },
    )
    out = destandardize_estimate(est, expansion, std, y_orig)
    scale = beta_scale_vector(std, expansion)
    structure = FactorStructure(
        loadings=state["loadings"] / scale[:, None],
        factors=state["factors"],
        rank=state["loadings"].shape[1],
        selected_rank_history=[state["loadings"].shape[1]] * state["iterations"],
    )
    return out, structure


def estimate_grrrr(
    data: RegressionData,
    law: LawOfMotion,
    spec: CvSpec,
    max_rank: int = 5,
    xi: float | None = None,
    lambda_f: float | None = None,
    rank: int | None = None,
    init_loadings: np.ndarray | None = None,
    refresh_volatility: bool = True,
    variance_threshold: float = 0.9,
    max_iter: int = _MAX_ITER,
    record_history: bool = False,
) -> tuple[TvpEstimate, FactorStructure]:
    """Alternating reduced-rank estimation of the drift innovations.

    Rank and initial loadings come from principal components of a
    cross-validated homogeneous first-stage fit unless forced; the factor
    penalty is tuned once at initialization.  ``refresh_volatility=False``
    runs fully homoscedastic (used by the one-factor cross-check)."""
    from ..volatility import fit_garch11, normalize_mean_one

    data_std, std = standardize(data)
    expansion, stage1, _ = first_stage(data_std, law, spec)
    K = expansion.K
    max_rank = min(max_rank, K)
    if max_rank < 1:
        raise ValidationError("max_rank must be at least 1")
    y = data_std.y

    if init_loadings is not None:
        loadings = np.asarray(init_loadings, dtype=float).reshape(K, -1)
        r = rank if rank is not None else loadings.shape[1]
        loadings = loadings[:, :r]
    else:
        init = extract_factors(stage1.u_matrix.T, variance_threshold, max_rank)
        if rank is not None:
            r = rank
            if init.rank >= r:
                loadings = init.loadings[:, :r]
            else:
                full = extract_factors(stage1.u_matrix.T, 1.0 + 1e-12, r)
                loadings = np.hstack(
                    [full.loadings, np.zeros((K, max(0, r - full.rank)))]
                )[:, :r]
        else:
            r = init.rank
            loadings = init.loadings

    if refresh_volatility:
        _, sigma2 = fit_garch11(stage1.residuals)
        omega = normalize_mean_one(sigma2)
    else:
        omega = np.ones(expansion.T)

    if r == 0:
        # nothing varies: constant-coefficient ridge fallback
        profile = VarianceProfile(
            sigma_eps_t=omega,
            sigma_u_k=np.zeros(K),
            lambda0=stage1.profile.lambda0,
            lam=stage1.lam,
        )
        from ..ridge_core import generalized_dual_ridge

        est = generalized_dual_ridge(expansion, y, profile)
        est.diagnostics.update(converged=True, iterations=0, objective_pairs=[])
        out = destandardize_estimate(est, expansion, std, data.y)
        return out, FactorStructure(
            loadings=np.zeros((K, 0)), factors=np.zeros((0, expansion.T - 1)), rank=0
        )

    lam_f = lambda_f if lambda_f is not None else _cv_lambda_f(
        expansion, y, loadings, omega, spec
    )
    state = _alternate(
        expansion, y, loadings, omega, lam_f, xi, spec,
        refresh_volatility, max_iter, record_history,
    )
    return _finalize(expansion, y, data.y, std, state, lam_f, law)


def grrrr_rank1_oracle(
    data: RegressionData,
    law: LawOfMotion,
    l_init: np.ndarray,
    lambda_f: float,
    xi: float,
    max_iter: int = _MAX_ITER,
) -> tuple[TvpEstimate, np.ndarray, np.ndarray]:
    """Literal summation-form implementation of the one-factor alternation.

    Step 1 runs a time-varying regression on the collapsed regressor
    Xbar_t = sum_k l_k X_{k,t} via a dense primal solve; step 2 runs the
    loadings elastic net on the columns f-path_t * X_{k,t}.  Homoscedastic
    by construction; kept deliberately independent of the dual-form path."""
    data_std, std = standardize(data)
    expansion = build_expansion(data_std, law)
    X = expansion.X
    T, K = X.shape
    C, c0, Cu = expansion.C, expansion.c0, expansion.Cu
    y = data_std.y
    l = np.asarray(l_init, dtype=float).copy()
    f = np.zeros(T - 1)
    beta0 = np.zeros(K)
    history = []
    obj_prev = np.inf
    converged = False
    b_warm = None

    for it in range(1, max_iter + 1):
        # step 1: dense primal ridge on [level columns | collapsed drift columns]
        xbar = np.array([np.dot(l, X[t]) for t in range(T)])
        A = np.hstack([X * c0[:, None], Cu * xbar[:, None]])
        P = np.concatenate([np.full(K, _B0_RIDGE), np.full(T - 1, lambda_f)])
        M = A.T @ A
        M[np.diag_indices_from(M)] += P
        sol = np.linalg.solve(M, A.T @ y)
        beta0, f = sol[:K], sol[K:]

        # step 2: elastic net on the per-coefficient factor-path columns
        fpath = Cu @ f
        design = np.hstack([X * c0[:, None], X * fpath[:, None]])
        pf = np.concatenate([np.zeros(K), np.ones(K)])
        l2x = np.concatenate([np.full(K, _B0_RIDGE), np.zeros(K)])
        if b_warm is None:
            b_warm = np.concatenate([beta0, l])
        else:
            b_warm[:K] = beta0
            b_warm[K:] = l
        b = elastic_net(
            design, y, xi, _MIXING, penalty_factor=pf, b_init=b_warm, l2_extra=l2x
        )
        beta0, l = b[:K], b[K:]
        b_warm = b

        beta = np.outer(c0, beta0) + np.outer(fpath, l)
        fitted = (X * beta).sum(axis=1)
        obj = _objective(
            y, fitted, np.ones(T), beta0, f[None, :], l[:, None], lambda_f, xi
        )

        # scale/sign identification, matching the general r = 1 convention
        s = np.sqrt(np.mean(f**2))
        if s > 0:
            f = f / s
            l = l * s
        if np.any(l) and l[np.argmax(np.abs(l))] < 0:
            f, l = -f, -l
        history.append({"beta0": beta0.copy(), "loadings": l.copy(), "factors": f.copy()})

        if abs(obj_prev - obj) < _OBJ_TOL * max(1.0, abs(obj_prev)):
            converged = True
            break
        obj_prev = obj

    beta = np.outer(c0, beta0) + np.outer(Cu @ f, l)
    fitted = (X * beta).sum(axis=1)
    U = np.outer(l, f)
    est = TvpEstimate(
        beta=beta,
        theta=np.hstack([beta0[:, None], U]).ravel(),
        residuals=y - fitted,
        fitted=fitted,
        lam=lambda_f,
        profile=VarianceProfile(
            sigma_eps_t=np.ones(T),
            sigma_u_k=(U**2).sum(axis=1) / T,
            lambda0=_B0_RIDGE,
            lam=lambda_f,
        ),
        law=law,
        diagnostics={"history": history, "iterations": it, "converged": converged},
    )
    out = destandardize_estimate(est, expansion, std, data.y)
    return out, l, f
