from __future__ import annotations

import numpy as np

from .base import FitError, Predictor, predictor_from_dict, register_kind
from .linear import ols


@register_kind
class StackingModel(Predictor):
    """Linear second stage over the predictions of fitted base models."""

    kind = "stacking"

    def __init__(self, bases, weights, intercept, **kw):
        bases = list(bases)
        super().__init__(bases[0].feature_count, **kw)
        self.bases = bases
        self.weights = np.asarray(weights, dtype=float)
        self.intercept = float(intercept)

    def base_predictions(self, X) -> np.ndarray:
        return np.column_stack([b.predict(X) for b in self.bases])

    def _predict(self, X):
        return self.intercept + self.base_predictions(X) @ self.weights

    def _params(self):
        return {
            "bases": [b.to_dict() for b in self.bases],
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
        }

    @classmethod
    def _from_params(cls, feature_count, hyperparameters, seed, params):
        bases = [predictor_from_dict(d) for d in params["bases"]]
        return cls(bases, params["weights"], params["intercept"], hyperparameters=hyperparameters, seed=seed)


def fit_stacking(bases, train, seed=None, min_bases: int = 2) -> StackingModel:
    """OLS of the target on in-sample base predictions plus an intercept."""
    bases = list(bases)
    if len(bases) < min_bases:
        raise FitError(f"stacking needs at least {min_bases} base models, got {len(bases)}")
    if any(b.feature_count != train.r for b in bases):
        raise FitError("base models disagree with the training feature count")
    P = np.column_stack([b.predict(train.features) for b in bases])
    b0, w, ridge = ols(P, train.target)
    return StackingModel(bases, w, b0, hyperparameters={"ridge_fallback": ridge}, seed=seed)
