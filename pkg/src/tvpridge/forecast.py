"""Pseudo-out-of-sample forecast evaluation.

Direct forecasts only: the model is fit straight to the h-step-ahead target
(average growth rates for multi-step differenced targets), re-estimated and
re-tuned at every step of an expanding window.  Accuracy is compared by
RMSPE and a Diebold-Mariano test on squared-error loss differentials with a
rectangular HAC window of h - 1 lags.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .basis import RegressionData
from .errors import DimensionError, ValidationError

_TRANSFORMS = ("level", "diff", "difflog")


@dataclass(frozen=True)
class ForecastTask:
    horizon: int
    target_transform: str = "level"
    averaging: bool = True
    oos_start: int = 0
    oos_end: int | None = None
    retune_each_step: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("horizon must be at least 1")
        if self.target_transform not in _TRANSFORMS:
            raise ValidationError(f"unknown transform {self.target_transform!r}")


@dataclass
class DmResult:
    statistic: float
    p_value: float
    loss_differential_mean: float
    hac_bandwidth: int
    degenerate: bool = False


def _transform(y: np.ndarray, kind: str) -> np.ndarray:
    """Transformed series aligned to the original index (first entry nan for
    differenced transforms)."""
    if kind == "level":
        return y.astype(float)
    if kind == "difflog":
        if np.any(y <= 0):
            raise ValidationError("difflog requires strictly positive data")
        y = np.log(y)
    z = np.full(y.shape[0], np.nan)
    z[1:] = np.diff(y)
    return z


def make_direct_target(y: np.ndarray, task: ForecastTask) -> np.ndarray:
    """Target vector for direct h-step forecasting.

    Entry t uses only observations t+1 .. t+h, so a feature row dated t pairs
    with it leakage-free.  For differenced transforms at h > 1 with averaging
    on, the target is the mean of the next h increments."""
    y = np.asarray(y, dtype=float)
    h = task.horizon
    T = y.shape[0]
    if T <= h:
        return np.empty(0)
    z = _transform(y, task.target_transform)
    n = T - h
    target = np.empty(n)
    if task.target_transform == "level" or not task.averaging or h == 1:
        if task.target_transform == "level":
            target = y[h:]
        else:
            target = z[h:]
    else:
        for t in range(n):
            target[t] = np.mean(z[t + 1 : t + h + 1])
    return target


def rmspe(forecasts: np.ndarray, actuals: np.ndarray) -> float:
    forecasts = np.asarray(forecasts, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if forecasts.shape != actuals.shape:
        raise DimensionError("forecast and actual vectors must match")
    if forecasts.size == 0:
        raise ValidationError("empty evaluation set")
    return float(np.sqrt(np.mean((forecasts - actuals) ** 2)))


def dm_test(errors_a: np.ndarray, errors_b: np.ndarray, horizon: int = 1) -> DmResult:
    """Equal-predictive-accuracy test on the squared-error loss differential."""
    ea = np.asarray(errors_a, dtype=float)
    eb = np.asarray(errors_b, dtype=float)
    if ea.shape != eb.shape:
        raise DimensionError("error series must have equal length")
    n = ea.shape[0]
    if n < 10:
        raise ValidationError("need at least 10 out-of-sample errors")
    d = ea**2 - eb**2
    dbar = float(d.mean())
    if np.allclose(ea, eb):
        return DmResult(0.0, 1.0, dbar, horizon - 1, degenerate=True)
    dc = d - dbar
    gamma0 = float(dc @ dc) / n
    var = gamma0
    for j in range(1, horizon):
        gj = float(dc[j:] @ dc[:-j]) / n
        var += 2.0 * gj
    var = max(var, 1e-300)
    stat = dbar / np.sqrt(var / n)
    p = 2.0 * (1.0 - scipy.stats.norm.cdf(abs(stat)))
    return DmResult(float(stat), float(p), dbar, horizon - 1)


def half_and_half(tvp_forecast: np.ndarray, constant_forecast: np.ndarray) -> np.ndarray:
    """Equal-weight average of the two forecast paths."""
    a = np.asarray(tvp_forecast, dtype=float)
    b = np.asarray(constant_forecast, dtype=float)
    if a.shape != b.shape:
        raise DimensionError("forecast paths must have equal length")
    return 0.5 * (a + b)


def outlier_guard(
    forecast: float, y_history: np.ndarray, fallback: float
) -> tuple[float, bool]:
    """Discard forecasts outside [ybar + 2 min(y - ybar), ybar + 2 max(y - ybar)].

    The interval is closed: boundary values are kept.  A discarded forecast
    is replaced by the supplied constant-parameter forecast."""
    y = np.asarray(y_history, dtype=float)
    if y.size == 0:
        raise ValidationError("empty history")
    ybar = y.mean()
    lo = ybar + 2.0 * (y.min() - ybar)
    hi = ybar + 2.0 * (y.max() - ybar)
    if lo <= forecast <= hi:
        return float(forecast), False
    return float(fallback), True


def constant_model():
    """Least-squares constant-parameter benchmark."""

    def fit_predict(X_train, y_train, x_new):
        coef = np.linalg.lstsq(X_train, y_train, rcond=None)[0]
        return float(x_new @ coef), {}

    return fit_predict


def tvp_model(law, n_folds: int = 5, seed: int = 0, estimator: str = "2srr"):
    """Time-varying-coefficient forecaster: fit the chosen estimator on the
    training block and extrapolate the final coefficient vector."""
    from .basis import build_expansion
    from .estimators import estimate_2srr, estimate_glrr, estimate_grrrr
    from .tuning import default_cv_spec

    def fit_predict(X_train, y_train, x_new):
        data = RegressionData(y=y_train, X=X_train)
        spec = default_cv_spec(build_expansion(data, law), n_folds=n_folds, seed=seed)
        if estimator == "2srr":
            est = estimate_2srr(data, law, spec)
        elif estimator == "glrr":
            est, _ = estimate_glrr(data, law, spec)
        elif estimator == "grrrr":
            est, _ = estimate_grrrr(data, law, spec)
        else:
            raise ValidationError(f"unknown estimator {estimator!r}")
        return float(x_new @ est.beta[-1]), {"lambda": est.lam}

    return fit_predict


@dataclass
class ForecastRun:
    target_dates: np.ndarray  # index of the predicted observation
    forecasts: np.ndarray
    actuals: np.ndarray
    fallback_flags: np.ndarray
    guard_flags: np.ndarray
    lambdas: list = field(default_factory=list)
    seconds: list = field(default_factory=list)


def expanding_window_run(
    model,
    data: RegressionData,
    task: ForecastTask,
    fallback_model=None,
    guard: bool = False,
) -> ForecastRun:
    """Walk the out-of-sample dates, refitting on all information through t.

    At each origin t the model trains on feature rows 0..t-h (whose targets
    are fully observed by t) and predicts from the feature row at t.  If the
    model errors out, the constant-parameter fallback forecast is recorded
    with a flag."""
    y = data.y
    X = data.X
    h = task.horizon
    target = make_direct_target(y, task)
    n_target = target.shape[0]
    t_end = task.oos_end if task.oos_end is not None else n_target - 1
    if task.oos_start < 2 * h + 5:
        raise ValidationError("oos_start leaves no room for the first fit")
    if t_end >= n_target:
        raise DimensionError("oos_end runs past the available targets")
    fb = fallback_model if fallback_model is not None else constant_model()

    dates, fcs, acts, fflags, gflags = [], [], [], [], []
    lambdas, seconds = [], []
    for t in range(task.oos_start, t_end + 1):
        n_train = t - h + 1  # rows 0..t-h have observed targets
        X_train, y_train = X[:n_train], target[:n_train]
        x_new = X[t]
        fb_value, _ = fb(X_train, y_train, x_new)
        t0 = time.perf_counter()
        try:
            value, info = model(X_train, y_train, x_new)
            failed = False
        except Exception as exc:
            warnings.warn(f"model failed at origin {t}: {exc}")
            value, info = fb_value, {}
            failed = True
        seconds.append(time.perf_counter() - t0)
        guarded = False
        if guard and not failed:
            value, guarded = outlier_guard(value, target[: t - h + 1], fb_value)
        dates.append(t + h)
        fcs.append(value)
        acts.append(target[t])
        fflags.append(failed)
        gflags.append(guarded)
        lambdas.append(info.get("lambda"))
    return ForecastRun(
        target_dates=np.array(dates),
        forecasts=np.array(fcs),
        actuals=np.array(acts),
        fallback_flags=np.array(fflags),
        guard_flags=np.array(gflags),
        lambdas=lambdas,
        seconds=seconds,
    )


def make_lag_matrix(y: np.ndarray, n_lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Autoregressive feature rows: row t holds (1, y_t, ..., y_{t-n_lags+1}).

    Returns (X, y_aligned) where row t of X is the information set for
    forecasting past date t; the first n_lags - 1 rows are dropped."""
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    if n_lags < 1 or T <= n_lags:
        raise ValidationError("need more observations than lags")
    rows = T - n_lags + 1
    X = np.ones((rows, n_lags + 1))
    for j in range(n_lags):
        X[:, j + 1] = y[n_lags - 1 - j : T - j]
    return X, y[n_lags - 1 :]


def make_ardi_features(
    y: np.ndarray, panel: np.ndarray, n_lags: int, n_factors: int
) -> tuple[np.ndarray, np.ndarray]:
    """Lags of y plus principal-component factors of a wide panel.

    Factors are extracted from the standardized panel over the rows kept
    after lag alignment (re-extract on each training window by slicing the
    returned rows)."""
    from .estimators import extract_factors

    X_ar, y_aligned = make_lag_matrix(y, n_lags)
    panel = np.asarray(panel, dtype=float)
    if panel.shape[0] != y.shape[0]:
        raise DimensionError("panel must have one row per observation of y")
    sub = panel[n_lags - 1 :]
    sd = sub.std(axis=0)
    zs = (sub - sub.mean(axis=0)) / np.where(sd > 1e-12, sd, 1.0)
    fs = extract_factors(zs, variance_threshold=1.0 + 1e-12, max_rank=n_factors)
    factors = fs.factors.T[: X_ar.shape[0]] if fs.rank else np.empty((X_ar.shape[0], 0))
    return np.hstack([X_ar, factors]), y_aligned
