"""Exact dual-form solvers for the expanded ridge problem.

Everything here goes through one T x T symmetric positive-definite solve:
theta_hat = Omega_theta Z' (Z Omega_theta Z' + Omega_eps)^{-1} y.  The Gram
matrix is assembled from Hadamard-product kernels (see BasisExpansion.gram),
so cost scales as O(K T^2) per candidate penalty instead of anything cubic
in K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import BasisExpansion, LawOfMotion
from .errors import DimensionError, NumericalError, ResourceError, ValidationError

# KT ceiling above which posterior_variance refuses to build the full matrix.
_POSTERIOR_MAX_COLUMNS = 20_000


@dataclass(frozen=True)
class VarianceProfile:
    """Per-time residual variances and per-coefficient drift variances.

    ``sigma_eps_t`` is the diagonal of Omega_eps, normalized to mean one.
    ``sigma_u_k`` holds the prior variance of each coefficient's drift
    innovations (an entry of zero pins that coefficient to a constant path).
    ``lam`` is the global smoothness ratio sigma_eps^2 / (sigma_u^2 K);
    ``lambda0`` the separate penalty on starting values.
    """

    sigma_eps_t: np.ndarray
    sigma_u_k: np.ndarray
    lambda0: float
    lam: float

    def __post_init__(self):
        se = np.asarray(self.sigma_eps_t, dtype=float)
        su = np.asarray(self.sigma_u_k, dtype=float)
        if np.any(se <= 0) or not np.isfinite(se).all():
            raise ValidationError("sigma_eps_t must be positive and finite")
        if np.any(su < 0) or not np.isfinite(su).all():
            raise ValidationError("sigma_u_k must be nonnegative and finite")
        if abs(se.mean() - 1.0) > 1e-8:
            raise ValidationError("sigma_eps_t must be normalized to mean one")
        if self.lambda0 <= 0 or self.lam <= 0:
            raise ValidationError("penalties must be positive")
        object.__setattr__(self, "sigma_eps_t", se)
        object.__setattr__(self, "sigma_u_k", su)

    @classmethod
    def homogeneous(cls, T: int, K: int, lam: float, lambda0: float) -> "VarianceProfile":
        return cls(
            sigma_eps_t=np.ones(T),
            sigma_u_k=np.full(K, 1.0 / (lam * K)),
            lambda0=lambda0,
            lam=lam,
        )


@dataclass
class TvpEstimate:
    """Fitted coefficient paths and the underlying expanded-ridge solution."""

    beta: np.ndarray  # T x K coefficient paths
    theta: np.ndarray  # length K*T, blocks [beta0_k, u_{k,1..T-1}]
    residuals: np.ndarray
    fitted: np.ndarray
    lam: float
    profile: VarianceProfile
    law: LawOfMotion
    bands: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def u_matrix(self) -> np.ndarray:
        """Drift innovations as a K x (T-1) matrix."""
        T = self.beta.shape[0]
        return self.theta.reshape(-1, T)[:, 1:]

    @property
    def beta0(self) -> np.ndarray:
        T = self.beta.shape[0]
        return self.theta.reshape(-1, T)[:, 0]


def solve_spd(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve with escalating diagonal jitter before giving up."""
    mean_diag = float(np.mean(np.diag(G)))
    if mean_diag <= 0 or not np.isfinite(mean_diag):
        raise NumericalError("Gram matrix has nonpositive or non-finite diagonal")
    for jitter in (0.0, 1e-10, 1e-8, 1e-6):
        try:
            cho = scipy.linalg.cho_factor(
                G + jitter * mean_diag * np.eye(G.shape[0]), lower=True
            )
            return scipy.linalg.cho_solve(cho, rhs)
        except np.linalg.LinAlgError:
            continue
        except scipy.linalg.LinAlgError:
            continue
    cond = np.linalg.cond(G)
    raise NumericalError(
        f"Gram matrix factorization failed after jitter escalation "
        f"(condition estimate {cond:.3e})"
    )


def _theta_from_dual(
    expansion: BasisExpansion,
    alpha: np.ndarray,
    beta0_var: np.ndarray,
    u_var: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Back out theta = Omega_theta Z' alpha and the beta paths, blockwise."""
    X = expansion.X
    c0, Cu = expansion.c0, expansion.Cu
    beta0 = beta0_var * (X.T @ (c0 * alpha))  # (K,)
    U = (u_var[:, None]) * ((X * alpha[:, None]).T @ Cu)  # K x (T-1)
    theta = np.hstack([beta0[:, None], U]).ravel()
    beta = np.outer(c0, beta0) + Cu @ U.T  # T x K
    return theta, beta


def _solve_generalized(
    expansion: BasisExpansion,
    y: np.ndarray,
    beta0_var: np.ndarray,
    u_var: np.ndarray,
    omega_eps: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Core dual solve; returns (theta, beta, fitted)."""
    if y.shape[0] != expansion.T:
        raise DimensionError("y length does not match the expansion")
    G = expansion.gram(beta0_var, u_var, omega_eps)
    alpha = solve_spd(G, y)
    theta, beta = _theta_from_dual(expansion, alpha, beta0_var, u_var)
    fitted = y - omega_eps * alpha
    return theta, beta, fitted


def dual_ridge(
    expansion: BasisExpansion,
    y: np.ndarray,
    lam: float,
    lambda0: float,
) -> TvpEstimate:
    """Homogeneous-variance solve: drift penalty lam*K per innovation,
    starting values penalized at lambda0."""
    if lam <= 0 or lambda0 <= 0:
        raise ValidationError("lam and lambda0 must be positive")
    profile = VarianceProfile.homogeneous(expansion.T, expansion.K, lam, lambda0)
    return generalized_dual_ridge(expansion, y, profile)


def generalized_dual_ridge(
    expansion: BasisExpansion,
    y: np.ndarray,
    profile: VarianceProfile,
) -> TvpEstimate:
    """Heterogeneous-variance solve via the T x T dual system."""
    if profile.sigma_u_k.shape[0] != expansion.K:
        raise DimensionError("profile has wrong number of drift variances")
    if profile.sigma_eps_t.shape[0] != expansion.T:
        raise DimensionError("profile has wrong number of residual variances")
    y = np.asarray(y, dtype=float)
    beta0_var = np.full(expansion.K, 1.0 / profile.lambda0)
    theta, beta, fitted = _solve_generalized(
        expansion, y, beta0_var, profile.sigma_u_k, profile.sigma_eps_t
    )
    return TvpEstimate(
        beta=beta,
        theta=theta,
        residuals=y - fitted,
        fitted=fitted,
        lam=profile.lam,
        profile=profile,
        law=expansion.law,
    )


def multivariate_dual_ridge(
    expansion: BasisExpansion,
    Y: np.ndarray,
    lam: float,
    lambda0: float,
) -> list[TvpEstimate]:
    """Solve M equations sharing one regressor matrix with one factorization."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != expansion.T:
        raise DimensionError("Y rows must match the expansion")
    profile = VarianceProfile.homogeneous(expansion.T, expansion.K, lam, lambda0)
    beta0_var = np.full(expansion.K, 1.0 / profile.lambda0)
    G = expansion.gram(beta0_var, profile.sigma_u_k, profile.sigma_eps_t)
    mean_diag = float(np.mean(np.diag(G)))
    cho = None
    for jitter in (0.0, 1e-10, 1e-8, 1e-6):
        try:
            cho = scipy.linalg.cho_factor(
                G + jitter * mean_diag * np.eye(G.shape[0]), lower=True
            )
            break
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            continue
    if cho is None:
        raise NumericalError(
            f"Gram matrix factorization failed after jitter escalation "
            f"(condition estimate {np.linalg.cond(G):.3e})"
        )
    alphas = scipy.linalg.cho_solve(cho, Y)  # T x M
    out = []
    for m in range(Y.shape[1]):
        alpha = alphas[:, m]
        theta, beta = _theta_from_dual(expansion, alpha, beta0_var, profile.sigma_u_k)
        fitted = Y[:, m] - profile.sigma_eps_t * alpha
        out.append(
            TvpEstimate(
                beta=beta,
                theta=theta,
                residuals=Y[:, m] - fitted,
                fitted=fitted,
                lam=lam,
                profile=profile,
                law=expansion.law,
            )
        )
    return out


def recover_beta(theta: np.ndarray, expansion: BasisExpansion) -> np.ndarray:
    """Map the stacked theta vector back to T x K coefficient paths."""
    theta = np.asarray(theta, dtype=float)
    T, K = expansion.T, expansion.K
    if theta.shape[0] != K * T:
        raise DimensionError(f"theta must have length {K * T}")
    blocks = theta.reshape(K, T)
    return (expansion.C @ blocks.T).reshape(T, K)


@dataclass
class PosteriorBeta:
    """Pointwise posterior standard deviations of beta (and full covariance)."""

    sd: np.ndarray  # T x K
    cov: np.ndarray | None = None


def posterior_variance(
    expansion: BasisExpansion,
    profile: VarianceProfile,
    sigma_eps_hat: float,
    full: bool = False,
) -> PosteriorBeta:
    """Posterior covariance of beta, V = C (Z'Z + Omega^-1)^-1 C' * sigma^2.

    Uses the GLS-reweighted design under heteroscedasticity.  This is the one
    place the KT-sized system is formed; coefficients with zero drift variance
    have their drift columns dropped (the selection event is taken as given).
    """
    T, K = expansion.T, expansion.K
    prior = np.empty(K * T)
    blocks = prior.reshape(K, T)
    blocks[:, 0] = 1.0 / profile.lambda0
    blocks[:, 1:] = profile.sigma_u_k[:, None]
    keep = prior > 0
    n_kept = int(keep.sum())
    if n_kept > _POSTERIOR_MAX_COLUMNS:
        raise ResourceError(
            f"posterior covariance needs {n_kept} columns "
            f"(> {_POSTERIOR_MAX_COLUMNS}); use a diagonal-only approximation"
        )
    Zw = expansion.Z[:, keep] / np.sqrt(profile.sigma_eps_t)[:, None]
    A = Zw.T @ Zw
    A[np.diag_indices_from(A)] += 1.0 / prior[keep]
    M = np.linalg.inv(A)
    sd = np.zeros((T, K))
    kept_cols = np.flatnonzero(keep)
    # block-local positions of kept columns, per coefficient
    offset = 0
    block_slices = []
    for k in range(K):
        cols_k = kept_cols[(kept_cols >= k * T) & (kept_cols < (k + 1) * T)]
        block_slices.append((slice(offset, offset + len(cols_k)), cols_k - k * T))
        offset += len(cols_k)
    for k, (sl, local) in enumerate(block_slices):
        Ck = expansion.C[:, local]
        var_k = np.einsum("ti,ij,tj->t", Ck, M[sl, sl], Ck)
        sd[:, k] = np.sqrt(np.maximum(var_k, 0.0) * sigma_eps_hat)
    cov = None
    if full:
        B = np.zeros((T * K, n_kept))
        for k, (sl, local) in enumerate(block_slices):
            B[k * T : (k + 1) * T, sl] = expansion.C[:, local]
        cov = B @ M @ B.T * sigma_eps_hat
    return PosteriorBeta(sd=sd, cov=cov)
