"""Design-matrix construction for time-varying-coefficient ridge problems.

A regression with drifting coefficients can be rewritten as one wide linear
model: each original regressor is expanded into a block of T columns whose
running sums reproduce the coefficient path.  This module builds the
lower-triangular summation matrix C, the expanded design Z, and the GLS
reweighting used by the heterogeneous-variance solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, ValidationError


@dataclass(frozen=True)
class LawOfMotion:
    """How a coefficient path accumulates its innovations.

    ``kind`` is one of ``random_walk``, ``random_walk_drift``, ``local_level``
    or ``autoregressive``; the latter requires ``phi`` in (0, 1] and collapses
    to the random walk at phi = 1.
    """

    kind: str
    phi: float | None = None

    _KINDS = ("random_walk", "random_walk_drift", "local_level", "autoregressive")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValidationError(f"unknown law of motion {self.kind!r}")
        if self.kind == "autoregressive":
            if self.phi is None or not (0.0 < self.phi <= 1.0):
                raise ValidationError("autoregressive law needs phi in (0, 1]")
        elif self.phi is not None:
            raise ValidationError(f"phi is only meaningful for the autoregressive law")


RANDOM_WALK = LawOfMotion("random_walk")
RANDOM_WALK_DRIFT = LawOfMotion("random_walk_drift")
LOCAL_LEVEL = LawOfMotion("local_level")


def autoregressive(phi: float) -> LawOfMotion:
    return LawOfMotion("autoregressive", phi)


@dataclass(frozen=True)
class RegressionData:
    """Outcome vector and regressor matrix for one equation.

    The first column of ``X`` may be an intercept of ones.  ``Y`` optionally
    carries additional outcome columns for multivariate systems sharing the
    same regressors.
    """

    y: np.ndarray
    X: np.ndarray
    series_names: tuple[str, ...] = ()
    Y: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if self.Y is not None:
            Y = np.asarray(self.Y, dtype=float)
            if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
                raise DimensionError("Y must be a T x M matrix")
            if not np.isfinite(Y).all():
                raise ValidationError("non-finite entries in Y")
            object.__setattr__(self, "Y", Y)
        if X.ndim != 2:
            raise DimensionError("X must be a T x K matrix")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DimensionError("y must be a vector with one entry per row of X")
        if not (np.isfinite(y).all() and np.isfinite(X).all()):
            raise ValidationError("non-finite entries in y or X")
        if X.shape[0] < 3 or X.shape[1] < 1:
            raise ValidationError("need T >= 3 observations and K >= 1 regressors")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        if not self.series_names:
            object.__setattr__(
                self, "series_names", tuple(f"x{k}" for k in range(X.shape[1]))
            )
        elif len(self.series_names) != X.shape[1]:
            raise DimensionError("series_names must have one label per regressor")

    @classmethod
    def multivariate(cls, Y, X, series_names: tuple[str, ...] = ()) -> "RegressionData":
        """System of M equations sharing one regressor matrix; y is column 0."""
        Y = np.asarray(Y, dtype=float)
        return cls(y=Y[:, 0], X=X, series_names=series_names, Y=Y)

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]


def build_summation_matrix(T: int, law: LawOfMotion) -> np.ndarray:
    """Lower-triangular operator turning innovations into coefficient paths."""
    if T < 2:
        raise DimensionError("summation matrix needs T >= 2")
    ones_lower = np.tril(np.ones((T, T)))
    if law.kind in ("random_walk", "random_walk_drift"):
        # Drift is handled upstream by augmenting regressors with (t/T) * X.
        return ones_lower
    if law.kind == "local_level":
        return ones_lower @ ones_lower
    # autoregressive: entry (t, s) = phi^(t-s) on and below the diagonal
    t_idx = np.arange(T)
    expo = t_idx[:, None] - t_idx[None, :]
    C = np.where(expo >= 0, law.phi ** np.maximum(expo, 0), 0.0)
    return C


class BasisExpansion:
    """Expanded design Z = [diag(X_1) C | ... | diag(X_K) C] with block layout.

    Column block k spans ``T`` columns: the first multiplies the starting
    value of coefficient k, the remaining ``T - 1`` multiply its drift
    innovations.  ``Z`` is materialized lazily; solvers work from ``X`` and
    the cached Gram kernels instead.
    """

    def __init__(self, data: RegressionData, law: LawOfMotion):
        self.data = data
        self.law = law
        self.T = data.T
        X = data.X
        names = list(data.series_names)
        if law.kind == "random_walk_drift":
            trend = (np.arange(1, self.T + 1) / self.T)[:, None]
            X = np.hstack([X, trend * X])
            names = names + [f"trend*{n}" for n in names]
        self.X = X
        self.series_names = tuple(names)
        self.K = X.shape[1]
        self.C = build_summation_matrix(self.T, law)

    @property
    def c0(self) -> np.ndarray:
        """First column of C: the propagation of a unit starting value."""
        return self.C[:, 0]

    @property
    def Cu(self) -> np.ndarray:
        """Columns of C that accumulate the T-1 drift innovations."""
        return self.C[:, 1:]

    @cached_property
    def Z(self) -> np.ndarray:
        T, K = self.T, self.K
        Z = np.empty((T, K * T))
        for k in range(K):
            Z[:, k * T : (k + 1) * T] = self.X[:, k, None] * self.C
        return Z

    @cached_property
    def beta0_columns(self) -> np.ndarray:
        return np.arange(self.K) * self.T

    @cached_property
    def u_columns(self) -> np.ndarray:
        cols = np.arange(self.K * self.T)
        return cols[cols % self.T != 0]

    @cached_property
    def block_index(self) -> dict[int, tuple[int, int]]:
        """Map column j of Z to (coefficient k, within-block position tau)."""
        return {j: divmod(j, self.T) for j in range(self.K * self.T)}

    # Gram kernels: Z Omega Z' decomposes into Hadamard products of these
    # with X-weighted outer products, so no T x KT matrix is ever formed.
    @cached_property
    def level_kernel(self) -> np.ndarray:
        return np.outer(self.c0, self.c0)

    @cached_property
    def drift_kernel(self) -> np.ndarray:
        return self.Cu @ self.Cu.T

    def gram(
        self,
        beta0_var: np.ndarray,
        u_var: np.ndarray,
        omega_eps: np.ndarray | None = None,
    ) -> np.ndarray:
        """Assemble Z Omega_theta Z' (+ Omega_eps) as a dense T x T matrix."""
        X = self.X
        G = ((X * beta0_var) @ X.T) * self.level_kernel
        G += ((X * u_var) @ X.T) * self.drift_kernel
        if omega_eps is not None:
            G[np.diag_indices_from(G)] += omega_eps
        return G

    def cross_gram(
        self,
        rows_out: np.ndarray,
        rows_in: np.ndarray,
        beta0_var: np.ndarray,
        u_var: np.ndarray,
    ) -> np.ndarray:
        """Rows x rows slice of Z Omega_theta Z' for out-of-fold prediction."""
        Xo, Xi = self.X[rows_out], self.X[rows_in]
        lvl = np.outer(self.c0[rows_out], self.c0[rows_in])
        drf = self.Cu[rows_out] @ self.Cu[rows_in].T
        return ((Xo * beta0_var) @ Xi.T) * lvl + ((Xo * u_var) @ Xi.T) * drf

    def trace_zzt(self) -> float:
        """trace(ZZ') without materializing Z."""
        row_sq = (self.C**2).sum(axis=1)
        return float(((self.X**2).sum(axis=1) * row_sq).sum())


def build_expansion(data: RegressionData, law: LawOfMotion) -> BasisExpansion:
    return BasisExpansion(data, law)


def apply_gls_weights(
    Z: np.ndarray,
    y: np.ndarray,
    sigma_eps_t: np.ndarray,
    omega_theta_diag: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Reweight observations and columns: Z~ = Oe^{-1/2} Z Ot^{1/2}, y~ = Oe^{-1/2} y."""
    sigma_eps_t = np.asarray(sigma_eps_t, dtype=float)
    omega_theta_diag = np.asarray(omega_theta_diag, dtype=float)
    if np.any(sigma_eps_t <= 0):
        raise ValidationError("residual variances must be strictly positive")
    if np.any(omega_theta_diag < 0):
        raise ValidationError("prior variances must be nonnegative")
    if Z.shape[0] != sigma_eps_t.shape[0] or Z.shape[1] != omega_theta_diag.shape[0]:
        raise DimensionError("weight vectors do not match Z")
    w_rows = 1.0 / np.sqrt(sigma_eps_t)
    w_cols = np.sqrt(omega_theta_diag)
    return Z * np.outer(w_rows, w_cols), y * w_rows
