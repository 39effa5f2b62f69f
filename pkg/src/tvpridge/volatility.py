"""Residual-variance modelling for the GLS reweighting stage.

A plain Gaussian GARCH(1,1) fitted by quasi-maximum likelihood gives the
per-period variance path; a rolling-variance fallback keeps the enclosing
estimator total when the likelihood search fails.  Also hosts the linear
smoother used to turn realized cross-product series into covariance paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.signal

from .errors import ValidationError

_ROLLING_WINDOW = 12
_VAR_FLOOR = 1e-8


@dataclass(frozen=True)
class GarchParams:
    """omega + alpha * eps^2_{t-1} + beta * sigma^2_{t-1}, with alpha+beta < 1."""

    omega: float
    alpha: float
    beta: float
    loglik: float
    fallback: bool = False


def _garch_path(resid_sq: np.ndarray, omega: float, alpha: float, beta: float) -> np.ndarray:
    """Conditional-variance recursion, vectorized as a first-order IIR filter."""
    T = resid_sq.shape[0]
    s = np.empty(T)
    s[0] = resid_sq.mean()
    if T > 1:
        x = omega + alpha * resid_sq[:-1]
        s[1:], _ = scipy.signal.lfilter([1.0], [1.0, -beta], x, zi=[beta * s[0]])
    return s


def _neg_loglik(params: np.ndarray, resid_sq: np.ndarray) -> float:
    omega, alpha, beta = params
    if omega <= 0 or alpha < 0 or beta < 0 or alpha + beta >= 0.999:
        return np.inf
    s = _garch_path(resid_sq, omega, alpha, beta)
    if np.any(s <= 0) or not np.isfinite(s).all():
        return np.inf
    return 0.5 * float(np.sum(np.log(s) + resid_sq / s))


def _rolling_fallback(residuals: np.ndarray) -> np.ndarray:
    T = residuals.shape[0]
    w = min(_ROLLING_WINDOW, T)
    sq = residuals**2
    csum = np.concatenate([[0.0], np.cumsum(sq)])
    path = np.empty(T)
    for t in range(T):
        lo = max(0, t - w + 1)
        path[t] = (csum[t + 1] - csum[lo]) / (t + 1 - lo)
    return np.maximum(path, _VAR_FLOOR)


def fit_garch11(residuals: np.ndarray) -> tuple[GarchParams, np.ndarray]:
    """Gaussian QML fit by simplex search from three starting points.

    Returns the parameter estimates and the conditional-variance path.  If
    T < 30 or no start converges to an admissible optimum, a rolling-window
    variance (floored away from zero) is returned with the fallback flag set.
    """
    residuals = np.asarray(residuals, dtype=float)
    if residuals.ndim != 1:
        raise ValidationError("residuals must be a vector")
    T = residuals.shape[0]
    var = float(np.var(residuals))
    if T < 30 or var <= 0:
        path = _rolling_fallback(residuals)
        return GarchParams(max(var, _VAR_FLOOR), 0.0, 0.0, np.nan, fallback=True), path

    resid_sq = residuals**2
    starts = [
        (0.05 * var, 0.05, 0.90),
        (0.10 * var, 0.10, 0.80),
        (0.50 * var, 0.20, 0.30),
    ]
    best = None
    for x0 in starts:
        res = scipy.optimize.minimize(
            _neg_loglik,
            x0,
            args=(resid_sq,),
            method="Nelder-Mead",
            options={"maxiter": 2000, "xatol": 1e-8, "fatol": 1e-8},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None or not np.isfinite(best.fun):
        path = _rolling_fallback(residuals)
        return GarchParams(var, 0.0, 0.0, np.nan, fallback=True), path
    omega, alpha, beta = best.x
    if omega <= 0 or alpha < 0 or beta < 0 or alpha + beta >= 1:
        path = _rolling_fallback(residuals)
        return GarchParams(var, 0.0, 0.0, np.nan, fallback=True), path
    path = _garch_path(resid_sq, omega, alpha, beta)
    return GarchParams(float(omega), float(alpha), float(beta), -float(best.fun)), path


def normalize_mean_one(path: np.ndarray) -> np.ndarray:
    """Rescale a positive path so its mean is exactly one."""
    path = np.asarray(path, dtype=float)
    if np.any(path <= 0):
        raise ValidationError("path entries must be strictly positive")
    return path / path.mean()


def smooth_covariance_paths(
    eps: np.ndarray,
    phi_per_column: np.ndarray,
) -> np.ndarray:
    """Smooth the realized variance/covariance series of multivariate residuals.

    Builds the T x M(M+1)/2 matrix of per-period products eps_i * eps_j
    (pairs ordered (1,1), (1,2), ..., (M,M)) and applies the penalized
    smoother (I + phi D'D)^-1 columnwise, where D is the first-difference
    operator with a level-penalizing first row.  Columns sharing a phi are
    solved with one factorization.
    """
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    if eps.shape[0] == 1:
        eps = eps.T
    T, M = eps.shape
    pairs = [(i, j) for i in range(M) for j in range(i, M)]
    eta = np.column_stack([eps[:, i] * eps[:, j] for i, j in pairs])
    phi = np.asarray(phi_per_column, dtype=float)
    if phi.ndim == 0:
        phi = np.full(len(pairs), float(phi))
    if phi.shape[0] != len(pairs):
        raise ValidationError("need one phi per non-redundant covariance column")
    if np.any(phi < 0):
        raise ValidationError("phi must be nonnegative")

    D = np.eye(T)
    idx = np.arange(1, T)
    D[idx, idx - 1] = -1.0
    DtD = D.T @ D
    out = np.empty_like(eta)
    for phi_val in np.unique(phi):
        cols = np.flatnonzero(phi == phi_val)
        if phi_val == 0.0:
            out[:, cols] = eta[:, cols]
            continue
        cho = scipy.linalg.cho_factor(np.eye(T) + phi_val * DtD, lower=True)
        out[:, cols] = scipy.linalg.cho_solve(cho, eta[:, cols])
    return out
