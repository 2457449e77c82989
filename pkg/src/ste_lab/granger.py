"""Bivariate VAR(p) by least squares and the Wald test for Granger causality."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dvine import X_TO_Y, normalize_direction
from .errors import ConfigError, FitError, NumericalError, TooShortError


@dataclass(frozen=True)
class VarModel:
    """Columns are ordered (x, y); ``coefs[j]`` is the 2x2 matrix for lag j+1."""

    p: int
    coefs: np.ndarray
    intercept: np.ndarray
    sigma: np.ndarray
    residuals: np.ndarray
    xtx_inv: np.ndarray
    n_obs: int

    def companion(self) -> np.ndarray:
        top = np.hstack(list(self.coefs))
        if self.p == 1:
            return top
        below = np.hstack([np.eye(2 * (self.p - 1)), np.zeros((2 * (self.p - 1), 2))])
        return np.vstack([top, below])

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))


def _values(s):
    return np.asarray(getattr(s, "values", s), dtype=float)


def fit_var(x, y, p: int) -> VarModel:
    if int(p) != p or p < 1:
        raise ConfigError(f"VAR order must be a positive integer, got {p}")
    p = int(p)
    data = np.column_stack([_values(x), _values(y)])
    n = len(data)
    if n <= 10 * p:
        raise TooShortError(f"VAR({p}) needs more than {10 * p} samples, got {n}")

    rows = n - p
    design = np.empty((rows, 1 + 2 * p))
    design[:, 0] = 1.0
    for j in range(p):
        design[:, 1 + 2 * j: 3 + 2 * j] = data[p - 1 - j: n - 1 - j]
    target = data[p:]

    xtx = design.T @ design
    if np.linalg.cond(xtx) > 1e12:
        raise FitError("singular VAR regressor matrix", p=p)
    xtx_inv = np.linalg.inv(xtx)
    beta = xtx_inv @ design.T @ target  # (1 + 2p) x 2
    resid = target - design @ beta
    dof = rows - design.shape[1]
    if dof <= 0:
        raise TooShortError("no residual degrees of freedom")
    sigma = resid.T @ resid / dof

    coefs = np.stack([beta[1 + 2 * j: 3 + 2 * j].T for j in range(p)])
    model = VarModel(p, coefs, beta[0].copy(), sigma, resid, xtx_inv, rows)
    if model.spectral_radius() >= 1:
        warnings.warn("fitted VAR is not stationary", stacklevel=2)
    return model


def wald_gc_test(model: VarModel, direction: str = X_TO_Y) -> tuple[float, float]:
    """Wald chi-square test that the source's lags are absent from the target's equation."""
    direction = normalize_direction(direction)
    source, target = (0, 1) if direction == X_TO_Y else (1, 0)
    idx = np.array([1 + 2 * j + source for j in range(model.p)])
    beta = model.coefs[:, target, source]
    cov = model.sigma[target, target] * model.xtx_inv[np.ix_(idx, idx)]
    try:
        stat = float(beta @ np.linalg.solve(cov, beta))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"coefficient covariance is not invertible: {exc}") from exc
    if not np.isfinite(stat):
        raise NumericalError("non-finite Wald statistic")
    return stat, float(stats.chi2.sf(stat, model.p))
