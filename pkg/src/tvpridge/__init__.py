"""Time-varying-coefficient regression solved as exact ridge problems.

The state-space model y_t = X_t' beta_t + eps_t with slowly drifting
coefficients is rewritten as one big ridge regression in the drift
innovations, solved in its T x T dual form, and then refined: a two-step
reweighting learns per-coefficient drift variances and a residual variance
path, an iterated adaptive-ridge variant shrinks constant coefficients
exactly to constancy, and a reduced-rank variant forces the drifts onto a
small set of common factors.  A simulation lab, a pseudo-out-of-sample
forecasting harness, and a batch CLI sit on top.
"""

from .basis import (
    LOCAL_LEVEL,
    RANDOM_WALK,
    RANDOM_WALK_DRIFT,
    BasisExpansion,
    LawOfMotion,
    RegressionData,
    apply_gls_weights,
    autoregressive,
    build_expansion,
    build_summation_matrix,
)
from .errors import (
    ConfigError,
    DimensionError,
    NumericalError,
    ResourceError,
    TvpRidgeError,
    ValidationError,
)
from .estimators import (
    FactorStructure,
    GlrrState,
    credible_bands,
    cv_elastic_net,
    elastic_net,
    estimate_2srr,
    estimate_glrr,
    estimate_grrrr,
    estimate_mv_grrrr,
    extract_factors,
    glrr_weights,
    grrrr_rank1_oracle,
    iterated_adaptive_ridge,
)
from .forecast import (
    DmResult,
    ForecastRun,
    ForecastTask,
    constant_model,
    dm_test,
    expanding_window_run,
    half_and_half,
    make_ardi_features,
    make_direct_target,
    make_lag_matrix,
    outlier_guard,
    rmspe,
    tvp_model,
)
from .ridge_core import (
    PosteriorBeta,
    TvpEstimate,
    VarianceProfile,
    dual_ridge,
    generalized_dual_ridge,
    multivariate_dual_ridge,
    posterior_variance,
    recover_beta,
)
from .simlab import (
    DgpSpec,
    SimulatedInstance,
    StudyResult,
    benchmark_timing,
    default_estimators,
    gen_dgp,
    gen_paths,
    mae,
    run_study,
)
from .tuning import (
    CvResult,
    CvSpec,
    SmoothnessCvResult,
    cv_smoothness,
    default_cv_spec,
    kfold_cv,
    make_folds,
    make_lambda_grid,
)
from .volatility import (
    GarchParams,
    fit_garch11,
    normalize_mean_one,
    smooth_covariance_paths,
)

__version__ = "0.1.0"

__all__ = [
    "BasisExpansion",
    "ConfigError",
    "CvResult",
    "CvSpec",
    "DgpSpec",
    "DimensionError",
    "DmResult",
    "FactorStructure",
    "ForecastRun",
    "ForecastTask",
    "GarchParams",
    "GlrrState",
    "LawOfMotion",
    "LOCAL_LEVEL",
    "NumericalError",
    "PosteriorBeta",
    "RANDOM_WALK",
    "RANDOM_WALK_DRIFT",
    "RegressionData",
    "ResourceError",
    "SimulatedInstance",
    "SmoothnessCvResult",
    "StudyResult",
    "TvpEstimate",
    "TvpRidgeError",
    "ValidationError",
    "VarianceProfile",
    "apply_gls_weights",
    "autoregressive",
    "benchmark_timing",
    "build_expansion",
    "build_summation_matrix",
    "constant_model",
    "credible_bands",
    "cv_elastic_net",
    "cv_smoothness",
    "default_cv_spec",
    "default_estimators",
    "dm_test",
    "dual_ridge",
    "elastic_net",
    "estimate_2srr",
    "estimate_glrr",
    "estimate_grrrr",
    "estimate_mv_grrrr",
    "expanding_window_run",
    "extract_factors",
    "fit_garch11",
    "gen_dgp",
    "gen_paths",
    "generalized_dual_ridge",
    "glrr_weights",
    "grrrr_rank1_oracle",
    "half_and_half",
    "iterated_adaptive_ridge",
    "kfold_cv",
    "mae",
    "make_ardi_features",
    "make_direct_target",
    "make_folds",
    "make_lag_matrix",
    "make_lambda_grid",
    "multivariate_dual_ridge",
    "normalize_mean_one",
    "outlier_guard",
    "posterior_variance",
    "recover_beta",
    "rmspe",
    "run_study",
    "smooth_covariance_paths",
    "tvp_model",
    "__version__",
]
