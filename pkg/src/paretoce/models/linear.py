from __future__ import annotations

import logging

import numpy as np

from .base import FitError, Predictor, register_kind

log = logging.getLogger(__name__)

RIDGE_SCALE = 1e-8


def ols(X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, bool]:
    """Least squares of ``y`` on ``[1, X]``.

    Falls back to ridge with penalty ``1e-8 * trace(A'A) / p`` when the
    design ``A`` is rank deficient. Returns (intercept, coefs, used_ridge).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([np.ones(X.shape[0]), X])
    p = A.shape[1]
    rank = np.linalg.matrix_rank(A)
    if rank == p:
        beta, *_ = np.linalg.lstsq(A, y, rcond=None)
        ridge = False
    else:
        G = A.T @ A
        tr = np.trace(G)
        if not np.isfinite(tr) or tr <= 0:
            raise FitError("degenerate design matrix (zero trace)")
        penalty = RIDGE_SCALE * tr / p
        log.info("rank-deficient design (rank %d < %d); ridge fallback with penalty %.3g", rank, p, penalty)
        beta = np.linalg.solve(G + penalty * np.eye(p), A.T @ y)
        ridge = True
    if not np.all(np.isfinite(beta)):
        raise FitError("least squares produced non-finite coefficients")
    return float(beta[0]), beta[1:], ridge


@register_kind
class LinearModel(Predictor):
    kind = "linear"

    def __init__(self, coef, intercept, **kw):
        coef = np.asarray(coef, dtype=float)
        super().__init__(coef.shape[0], **kw)
        self.coef = coef
        self.intercept = float(intercept)

    def _predict(self, X):
        return X @ self.coef + self.intercept

    def _params(self):
        return {"coef": self.coef.tolist(), "intercept": self.intercept}

    @classmethod
    def _from_params(cls, feature_count, hyperparameters, seed, params):
        return cls(params["coef"], params["intercept"], hyperparameters=hyperparameters, seed=seed)


def fit_linear(train, seed=None) -> LinearModel:
    if train.n <= train.r:
        log.warning("linear fit with n=%d <= r=%d; relying on ridge fallback", train.n, train.r)
    b0, w, ridge = ols(train.features, train.target)
    return LinearModel(w, b0, hyperparameters={"ridge_fallback": ridge}, seed=seed)
