from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_NAME = "paretoce.predictor"
FORMAT_VERSION = 1


class FitError(RuntimeError):
    """A model could not be fitted."""


def as_int_seed(seed, *extra) -> int:
    """Fold an arbitrary (possibly 64-bit) seed plus keys into a 32-bit int."""
    return int(np.random.SeedSequence([int(seed), *map(int, extra)]).generate_state(1)[0])


class Predictor:
    """A fitted regression model over length-``feature_count`` inputs.

    Subclasses implement ``_predict`` on an (n, r) float matrix and the
    ``_params``/``_from_params`` pair used by JSON serialization.
    """

    kind: str = "base"

    def __init__(self, feature_count: int, hyperparameters: dict | None = None, seed: int | None = None):
        self.feature_count = int(feature_count)
        self.hyperparameters = dict(hyperparameters or {})
        self.seed = seed

    def predict(self, X) -> np.ndarray | float:
        """Predict one row (returns a float) or a matrix of rows (returns a vector)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        if X2.ndim != 2 or X2.shape[1] != self.feature_count:
            raise ValueError(f"{self.kind} expects inputs of length {self.feature_count}, got shape {X.shape}")
        out = self._predict(X2)
        return float(out[0]) if single else out

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # serialization ---------------------------------------------------------

    def _params(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_params(cls, feature_count, hyperparameters, seed, params):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "feature_count": self.feature_count,
            "hyperparameters": self.hyperparameters,
            "seed": self.seed,
            "parameters": self._params(),
        }

    def __repr__(self):
        return f"<{type(self).__name__} kind={self.kind} r={self.feature_count}>"


_KINDS: dict[str, type[Predictor]] = {}


def register_kind(cls=None, *, aliases=()):
    def deco(c):
        for name in (c.kind, *aliases):
            _KINDS[name] = c
        return c

    return deco(cls) if cls is not None else deco


def predictor_from_dict(doc: dict) -> Predictor:
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not a serialized predictor")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported predictor format version {doc.get('version')!r}")
    try:
        cls = _KINDS[doc["kind"]]
    except KeyError:
        raise ValueError(f"unknown predictor kind {doc.get('kind')!r}") from None
    return cls._from_params(doc["feature_count"], doc["hyperparameters"], doc["seed"], doc["parameters"])


def save_predictor(model: Predictor, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model.to_dict()), encoding="utf-8")
    return path


def load_predictor(path) -> Predictor:
    return predictor_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
