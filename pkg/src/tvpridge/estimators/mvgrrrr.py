"""Multivariate reduced-rank estimation: M equations, one shared factor set.

All equations share the regressor matrix and the factors F; loadings are
equation-specific.  The factor step stacks the M weighted regressions into
one system (solved in primal form when observations outnumber parameters);
the loadings step separates into M independent elastic nets.
"""

from __future__ import annotations

import numpy as np

from ..basis import LawOfMotion, RegressionData, build_expansion
from ..errors import NumericalError, ValidationError
from ..ridge_core import TvpEstimate, VarianceProfile
from ..tuning import CvSpec
from ._standardize import beta_scale_vector, destandardize_estimate, standardize
from .elastic_net import cv_elastic_net, elastic_net
from .grrrr import (
    _B0_RIDGE,
    _MIXING,
    _MONO_SLACK,
    _OBJ_TOL,
    FactorStructure,
    _cv_lambda_f,
    _l_step_design,
    _objective,
    _orthogonalize,
    estimate_grrrr,
)
from .twostep import first_stage


def _mv_objective(ys, fits, omegas, beta0s, F, loadings_list, lam_f, xi):
    total = 0.5 * lam_f * float(np.sum(F**2))
    for y, fit, om, b0, L in zip(ys, fits, omegas, beta0s, loadings_list):
        total += _objective(y, fit, om, b0, np.zeros((0, 1)), L, 0.0, xi)
    return total


def _stacked_f_step(X, c0, Cu, ys, omegas, loadings_list, lam_f):
    """Joint solve for all beta0 blocks and the shared factors."""
    T, K = X.shape
    M = len(ys)
    r = loadings_list[0].shape[1]
    Teff = Cu.shape[1]
    p = M * K + r * Teff
    n = M * T
    level = X * c0[:, None]
    A_blocks = []
    for m in range(M):
        xbar = X @ loadings_list[m]  # T x r
        Af = np.hstack([xbar[:, [rho]] * Cu for rho in range(r)])
        A_blocks.append((level, Af))
    prior = np.concatenate([np.full(M * K, _B0_RIDGE), np.full(r * Teff, lam_f)])

    if n > p:
        # primal normal equations on the stacked weighted design
        G = np.zeros((p, p))
        rhs = np.zeros(p)
        fsl = slice(M * K, p)
        for m, (Ab, Af) in enumerate(A_blocks):
            w = 1.0 / np.sqrt(omegas[m])
            Abw, Afw = Ab * w[:, None], Af * w[:, None]
            yw = ys[m] * w
            bsl = slice(m * K, (m + 1) * K)
            G[bsl, bsl] += Abw.T @ Abw
            G[bsl, fsl] += Abw.T @ Afw
            G[np.ix_(range(fsl.start, fsl.stop), range(bsl.start, bsl.stop))] += (
                Afw.T @ Abw
            )
            G[fsl, fsl] += Afw.T @ Afw
            rhs[bsl] += Abw.T @ yw
            rhs[fsl] += Afw.T @ yw
        G[np.diag_indices_from(G)] += prior
        sol = np.linalg.solve(G, rhs)
    else:
        # dual solve through the stacked n x n system
        A = np.zeros((n, p))
        yv = np.empty(n)
        om = np.empty(n)
        for m, (Ab, Af) in enumerate(A_blocks):
            rows = slice(m * T, (m + 1) * T)
            A[rows, m * K : (m + 1) * K] = Ab
            A[rows, M * K :] = Af
            yv[rows] = ys[m]
            om[rows] = omegas[m]
        theta_var = 1.0 / prior
        Gd = (A * theta_var) @ A.T
        Gd[np.diag_indices_from(Gd)] += om
        alpha = np.linalg.solve(Gd, yv)
        sol = theta_var * (A.T @ alpha)

    beta0s = [sol[m * K : (m + 1) * K] for m in range(M)]
    F = sol[M * K :].reshape(r, Teff)
    fits = []
    for m, (Ab, Af) in enumerate(A_blocks):
        fits.append(Ab @ beta0s[m] + Af @ sol[M * K :])
    return beta0s, F, fits


def estimate_mv_grrrr(
    data: RegressionData,
    law: LawOfMotion,
    spec: CvSpec,
    max_rank: int = 5,
    xi: float | None = None,
    lambda_f: float | None = None,
    refresh_volatility: bool = True,
    variance_threshold: float = 0.9,
    max_iter: int = 100,
) -> tuple[list[TvpEstimate], FactorStructure]:
    """Joint reduced-rank fit of an M-equation system with shared factors."""
    from ..volatility import fit_garch11, normalize_mean_one

    from .grrrr import extract_factors

    if data.Y is None or data.Y.shape[1] == 1:
        est, fs = estimate_grrrr(
            data, law, spec, max_rank=max_rank, xi=xi, lambda_f=lambda_f,
            refresh_volatility=refresh_volatility,
            variance_threshold=variance_threshold, max_iter=max_iter,
        )
        return [est], fs

    Y = data.Y
    M = Y.shape[1]
    eq_data = [
        RegressionData(y=Y[:, m], X=data.X, series_names=data.series_names)
        for m in range(M)
    ]
    std_pairs = [standardize(d) for d in eq_data]
    expansion = build_expansion(std_pairs[0][0], law)
    K = expansion.K
    if max_rank > min(K, 5):
        raise ValidationError("max_rank must be at most min(K, 5)")
    X, c0, Cu = expansion.X, expansion.c0, expansion.Cu
    T = expansion.T
    ys = [p[0].y for p in std_pairs]

    # per-equation homogeneous first stages; pooled innovations for the factors
    stage1s = []
    for m in range(M):
        _, s1, _ = first_stage(std_pairs[m][0], law, spec)
        stage1s.append(s1)
    pooled_U = np.vstack([s1.u_matrix for s1 in stage1s])  # MK x (T-1)
    init = extract_factors(pooled_U.T, variance_threshold, max_rank)
    r = init.rank
    if r == 0:
        raise ValidationError("no time variation detected in any equation")
    loadings_list = [init.loadings[m * K : (m + 1) * K] for m in range(M)]
    F = init.factors

    if refresh_volatility:
        omegas = []
        for s1 in stage1s:
            _, sig2 = fit_garch11(s1.residuals)
            omegas.append(normalize_mean_one(sig2))
    else:
        omegas = [np.ones(T) for _ in range(M)]

    if lambda_f is None:
        per_eq = [
            _cv_lambda_f(expansion, ys[m], loadings_list[m], omegas[m], spec)
            for m in range(M)
        ]
        lambda_f = float(np.exp(np.mean(np.log(per_eq))))

    beta0s = [np.zeros(K) for _ in range(M)]
    xi_val = xi
    warm = [None] * M
    obj_prev = np.inf
    converged = False
    objective_pairs = []

    for it in range(1, max_iter + 1):
        fits0 = [
            (X * (np.outer(c0, beta0s[m]) + Cu @ (F.T @ loadings_list[m].T))).sum(axis=1)
            for m in range(M)
        ]
        before = _mv_objective(
            ys, fits0, omegas, beta0s, F, loadings_list, lambda_f, xi_val or 0.0
        )
        beta0s, F, fits = _stacked_f_step(X, c0, Cu, ys, omegas, loadings_list, lambda_f)
        after_f = _mv_objective(
            ys, fits, omegas, beta0s, F, loadings_list, lambda_f, xi_val or 0.0
        )
        if after_f > before + _MONO_SLACK * max(1.0, abs(before)):
            raise NumericalError("stacked factor step increased the objective")
        objective_pairs.append((before, after_f))

        drift_cols = _l_step_design(X, Cu, F)
        pf = np.concatenate([np.zeros(K), np.ones(r * K)])
        l2x = np.concatenate([np.full(K, _B0_RIDGE), np.zeros(r * K)])
        design = np.hstack([X * c0[:, None], drift_cols])
        if xi_val is None:
            per_eq_xi = [
                cv_elastic_net(
                    design / np.sqrt(omegas[m])[:, None],
                    ys[m] / np.sqrt(omegas[m]),
                    _MIXING,
                    penalty_factor=pf,
                    seed=spec.seed,
                )
                for m in range(M)
            ]
            xi_val = float(np.mean(per_eq_xi))
            after_f = _mv_objective(
                ys, fits, omegas, beta0s, F, loadings_list, lambda_f, xi_val
            )
        for m in range(M):
            w = 1.0 / np.sqrt(omegas[m])
            b0 = np.concatenate([beta0s[m], loadings_list[m].T.ravel()])
            b = elastic_net(
                design * w[:, None],
                ys[m] * w,
                xi_val,
                _MIXING,
                penalty_factor=pf,
                b_init=warm[m] if warm[m] is not None else b0,
                l2_extra=l2x,
            )
            beta0s[m] = b[:K]
            loadings_list[m] = b[K:].reshape(r, K).T
            warm[m] = b
        fits = [
            (X * (np.outer(c0, beta0s[m]) + Cu @ (F.T @ loadings_list[m].T))).sum(axis=1)
            for m in range(M)
        ]
        after_l = _mv_objective(
            ys, fits, omegas, beta0s, F, loadings_list, lambda_f, xi_val
        )
        if after_l > after_f + _MONO_SLACK * max(1.0, abs(after_f)):
            raise NumericalError("loadings step increased the objective")
        objective_pairs.append((after_f, after_l))

        stacked = np.vstack(loadings_list)
        if np.any(stacked):
            stacked, F = _orthogonalize(stacked, F)
            loadings_list = [stacked[m * K : (m + 1) * K] for m in range(M)]
        else:
            ms = np.sqrt((F**2).mean(axis=1, keepdims=True))
            F = np.divide(F, ms, out=F.copy(), where=ms > 0)

        if abs(obj_prev - after_l) < _OBJ_TOL * max(1.0, abs(obj_prev)):
            converged = True
            break
        obj_prev = after_l

        if refresh_volatility:
            omegas = []
            for m in range(M):
                _, sig2 = fit_garch11(ys[m] - fits[m])
                omegas.append(normalize_mean_one(sig2))

    estimates = []
    scale = beta_scale_vector(std_pairs[0][1], expansion)
    for m in range(M):
        U = loadings_list[m] @ F
        beta = np.outer(c0, beta0s[m]) + Cu @ U.T
        fitted = (X * beta).sum(axis=1)
        est = TvpEstimate(
            beta=beta,
            theta=np.hstack([beta0s[m][:, None], U]).ravel(),
            residuals=ys[m] - fitted,
            fitted=fitted,
            lam=lambda_f,
            profile=VarianceProfile(
                sigma_eps_t=omegas[m],
                sigma_u_k=(U**2).sum(axis=1) / T,
                lambda0=_B0_RIDGE,
                lam=lambda_f,
            ),
            law=law,
            diagnostics={
                "converged": converged,
                "iterations": it,
                "objective_pairs": objective_pairs,
                "xi": xi_val or 0.0,
                "lambda_f": lambda_f,
            },
        )
        estimates.append(
            destandardize_estimate(est, expansion, std_pairs[m][1], Y[:, m])
        )
    structure = FactorStructure(
        loadings=np.vstack(loadings_list) / np.tile(scale, M)[:, None],
        factors=F,
        rank=r,
        selected_rank_history=[r] * it,
    )
    return estimates, structure
