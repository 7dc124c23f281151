from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ..data import split_indices
from .base import FitError, Predictor, as_int_seed
from .linear import fit_linear
from .mlp import fit_mlp
from .stacking import fit_stacking
from .trees import fit_gbt, fit_random_forest

# A fit procedure receives (train, seed, already-fitted models by name).
FitProcedure = Callable[..., Predictor]

BASE_MODELS = ("linear", "random_forest", "gbt", "mlp")
MODEL_LABELS = {
    "linear": "Model1 (Linear Regression)",
    "random_forest": "Model2 (Random Forest)",
    "gbt": "Model3 (Gradient Boosting)",
    "mlp": "Model4 (MLP)",
    "stacking": "Stacking Model",
}


def default_zoo(n_trees=100, n_rounds=100, hidden=100, mlp_options=None) -> dict[str, FitProcedure]:
    """The four base regressors followed by stacking over them."""
    mlp_options = dict(mlp_options or {})
    return {
        "linear": lambda tr, seed, fitted: fit_linear(tr, seed=seed),
        "random_forest": lambda tr, seed, fitted: fit_random_forest(tr, n_trees=n_trees, seed=seed),
        "gbt": lambda tr, seed, fitted: fit_gbt(tr, n_rounds=n_rounds, seed=seed),
        "mlp": lambda tr, seed, fitted: fit_mlp(tr, hidden=hidden, seed=seed, **mlp_options),
        "stacking": lambda tr, seed, fitted: fit_stacking([fitted[k] for k in BASE_MODELS], tr, seed=seed),
    }


def fit_zoo(zoo: Mapping[str, FitProcedure], train, seed: int, split: int = 0) -> dict[str, Predictor]:
    fitted: dict[str, Predictor] = {}
    for j, (name, proc) in enumerate(zoo.items()):
        try:
            fitted[name] = proc(train, as_int_seed(seed, split, j), fitted)
        except FitError as exc:
            raise FitError(f"model {name!r}, split {split}: {exc}") from exc
    return fitted


@dataclass(frozen=True)
class AccuracyReport:
    names: tuple[str, ...]
    split_mse: np.ndarray  # (n_splits, n_models)

    @property
    def mean_mse(self) -> np.ndarray:
        return self.split_mse.mean(axis=0)

    @property
    def std_mse(self) -> np.ndarray:
        if self.split_mse.shape[0] < 2:
            return np.zeros(len(self.names))
        return self.split_mse.std(axis=0, ddof=1)

    @property
    def ranking(self) -> list[int]:
        return [int(i) for i in np.argsort(self.mean_mse, kind="stable")]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "mean_mse", "std_mse"])
            for name, m, s in zip(self.names, self.mean_mse, self.std_mse):
                w.writerow([name, repr(float(m)), repr(float(s))])
        return path


def mse(model: Predictor, d) -> float:
    return float(np.mean((model.predict(d.features) - d.target) ** 2))


def evaluate_models(zoo: Mapping[str, FitProcedure], d, plan) -> AccuracyReport:
    """Test MSE of every zoo member over each split of ``plan``."""
    splits = split_indices(d.n, plan)
    out = np.empty((len(splits), len(zoo)))
    for k, (tr, te) in enumerate(splits):
        train, test = d.subset(tr), d.subset(te)
        fitted = fit_zoo(zoo, train, plan.seed, split=k)
        for j, name in enumerate(zoo):
            out[k, j] = mse(fitted[name], test)
    return AccuracyReport(tuple(zoo), out)


def select_top_m(report: AccuracyReport, m: int, candidates=None) -> list[int]:
    """First ``m`` model indices of the accuracy ranking.

    ``candidates`` (names or indices) restricts which models may be chosen.
    """
    ranking = report.ranking
    if candidates is not None:
        allowed = {report.names.index(c) if isinstance(c, str) else int(c) for c in candidates}
        ranking = [i for i in ranking if i in allowed]
    if not 1 <= m <= len(ranking):
        raise ValueError(f"m must lie in [1, {len(ranking)}], got {m}")
    return ranking[:m]
