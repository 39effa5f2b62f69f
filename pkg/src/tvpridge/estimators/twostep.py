"""Two-step estimation of time-varying coefficient paths.

Stage one fits the homogeneous-variance ridge problem with a
cross-validated smoothness penalty.  Stage two reads evolving residual
variance off a GARCH(1,1) fit and per-coefficient drift variances off the
stage-one innovations, then resolves the GLS-reweighted problem, with an
optional second cross-validation pass on the global penalty scale.
"""

from __future__ import annotations

import numpy as np
import scipy.stats

from ..basis import LawOfMotion, RegressionData, build_expansion
from ..errors import ValidationError
from ..ridge_core import (
    BasisExpansion,
    TvpEstimate,
    VarianceProfile,
    dual_ridge,
    generalized_dual_ridge,
    posterior_variance,
)
from ..tuning import CvResult, CvSpec, kfold_cv
from ._standardize import beta_scale_vector, destandardize_estimate, standardize


def drift_variances(estimate: TvpEstimate, target_mean: float) -> np.ndarray:
    """Per-coefficient mean squared drift innovation, renormalized so the
    vector mean equals ``target_mean`` (the previous homogeneous prior level)."""
    U = estimate.u_matrix
    T = estimate.beta.shape[0]
    raw = (U**2).sum(axis=1) / T
    total = raw.mean()
    if total <= 0:
        return np.full(raw.shape[0], target_mean)
    return raw * (target_mean / total)


def first_stage(
    data_std: RegressionData,
    law: LawOfMotion,
    spec: CvSpec,
) -> tuple[BasisExpansion, TvpEstimate, CvResult]:
    """Cross-validated homogeneous fit on already-standardized data."""
    expansion = build_expansion(data_std, law)
    cv = kfold_cv(expansion, data_std.y, spec)
    est = dual_ridge(expansion, data_std.y, cv.best_lambda, cv.best_lambda0)
    return expansion, est, cv


def _second_stage_profile(
    expansion: BasisExpansion,
    stage1: TvpEstimate,
    sigma_eps_t: np.ndarray,
) -> VarianceProfile:
    lam1 = stage1.lam
    sigma_u = drift_variances(stage1, target_mean=1.0 / (lam1 * expansion.K))
    return VarianceProfile(
        sigma_eps_t=sigma_eps_t,
        sigma_u_k=sigma_u,
        lambda0=stage1.profile.lambda0,
        lam=lam1,
    )


def estimate_2srr(
    data: RegressionData,
    law: LawOfMotion,
    spec: CvSpec,
    bands_level: float | None = None,
) -> TvpEstimate:
    """Full two-step procedure on raw data; returns paths in original units."""
    from ..volatility import fit_garch11, normalize_mean_one

    data_std, std = standardize(data)
    expansion, stage1, cv1 = first_stage(data_std, law, spec)

    garch, sigma2_path = fit_garch11(stage1.residuals)
    sigma_eps_t = normalize_mean_one(sigma2_path)
    profile = _second_stage_profile(expansion, stage1, sigma_eps_t)

    if spec.refit_second_stage:
        cv2 = kfold_cv(expansion, data_std.y, spec, profile=profile)
        rescale = profile.lam / cv2.best_lambda
        profile = VarianceProfile(
            sigma_eps_t=profile.sigma_eps_t,
            sigma_u_k=profile.sigma_u_k * rescale,
            lambda0=profile.lambda0,
            lam=cv2.best_lambda,
        )

    est = generalized_dual_ridge(expansion, data_std.y, profile)
    est.diagnostics.update(
        stage1_lambda=stage1.lam,
        stage1_lambda0=stage1.profile.lambda0,
        garch=garch,
        sigma_u_k=profile.sigma_u_k,
        converged=True,
    )
    out = destandardize_estimate(est, expansion, std, data.y)
    if bands_level is not None:
        sd_std = _posterior_sd(est, expansion)
        scale = beta_scale_vector(std, expansion)
        out.bands = _bands_from_sd(out.beta, sd_std / scale, bands_level)
    return out


def _posterior_sd(est_std: TvpEstimate, expansion: BasisExpansion) -> np.ndarray:
    prof = est_std.profile
    sigma_eps_hat = float(np.mean(est_std.residuals**2 / prof.sigma_eps_t))
    return posterior_variance(expansion, prof, sigma_eps_hat).sd


def _bands_from_sd(beta: np.ndarray, sd: np.ndarray, level: float) -> np.ndarray:
    if not 0.0 <= level < 1.0:
        raise ValidationError("band level must lie in [0, 1)")
    z = scipy.stats.norm.ppf(0.5 + level / 2.0)
    return np.stack([beta - z * sd, beta + z * sd], axis=-1)


def credible_bands(
    estimate: TvpEstimate,
    expansion: BasisExpansion,
    level: float,
) -> np.ndarray:
    """Gaussian bands beta +/- z * posterior sd, hyperparameters taken as known.

    The estimate and expansion must live in the same units (no internal
    destandardization happens here)."""
    sd = _posterior_sd(estimate, expansion)
    return _bands_from_sd(estimate.beta, sd, level)
