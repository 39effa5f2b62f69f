"""Input standardization shared by the high-level estimators.

The solvers themselves are scale-equivariant, but one lambda grid can only
serve all datasets if inputs arrive on a common scale: y is demeaned and
each regressor divided by its standard deviation.  Estimates are mapped
back afterwards; when an intercept column is present the removed mean is
folded into its coefficient path, otherwise it is kept as a level offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..basis import BasisExpansion, RegressionData
from ..ridge_core import TvpEstimate


@dataclass(frozen=True)
class Standardizer:
    y_mean: float
    x_scale: np.ndarray  # length K, original regressor order
    intercept_col: int | None
    intercept_value: float


def standardize(data: RegressionData) -> tuple[RegressionData, Standardizer]:
    X = data.X
    sd = X.std(axis=0)
    scale = np.where(sd > 1e-12, sd, 1.0)
    intercept_col = None
    intercept_value = 0.0
    for k in range(data.K):
        if sd[k] <= 1e-12 and abs(X[0, k]) > 1e-12:
            intercept_col = k
            intercept_value = float(X[0, k])
            break
    y_mean = float(data.y.mean())
    std_data = RegressionData(
        y=data.y - y_mean,
        X=X / scale,
        series_names=data.series_names,
    )
    return std_data, Standardizer(y_mean, scale, intercept_col, intercept_value)


def beta_scale_vector(std: Standardizer, expansion: BasisExpansion) -> np.ndarray:
    """Per-coefficient scale divisor, repeated for trend-augmented columns."""
    s = std.x_scale
    if expansion.K == 2 * s.shape[0]:
        return np.concatenate([s, s])
    return s


def destandardize_estimate(
    est: TvpEstimate,
    expansion: BasisExpansion,
    std: Standardizer,
    y_original: np.ndarray,
) -> TvpEstimate:
    """Map a standardized-space estimate back to the original units.

    Theta is recomputed from the adjusted paths through the triangular
    summation system, which keeps beta = C theta exact for every law of
    motion (including the AR case, where a level shift is not a simple
    beta0 adjustment).
    """
    scale = beta_scale_vector(std, expansion)
    beta = est.beta / scale
    if std.intercept_col is not None:
        beta = beta.copy()
        beta[:, std.intercept_col] += std.y_mean / std.intercept_value
    theta_blocks = scipy.linalg.solve_triangular(expansion.C, beta, lower=True)
    fitted = est.fitted + std.y_mean
    diagnostics = dict(est.diagnostics)
    diagnostics["x_scale"] = scale
    if std.intercept_col is None and abs(std.y_mean) > 0:
        diagnostics["level_offset"] = std.y_mean
    return TvpEstimate(
        beta=beta,
        theta=theta_blocks.T.ravel(),
        residuals=y_original - fitted,
        fitted=fitted,
        lam=est.lam,
        profile=est.profile,
        law=est.law,
        bands=est.bands,
        diagnostics=diagnostics,
    )
