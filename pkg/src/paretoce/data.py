"""Datasets: synthetic generators, CSV ingestion, repeated splits, summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

CONTINUOUS = "continuous"
BINARY01 = "binary01"
FEATURE_KINDS = (CONTINUOUS, BINARY01)


class DataError(ValueError):
    """Raised on malformed or insufficient data."""


class CSVParseError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.target, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        n, r = X.shape
        if n == 0 or r == 0:
            raise DataError("dataset must have at least one row and one feature")
        if y.shape[0] != n:
            raise DataError(f"target length {y.shape[0]} != row count {n}")
        names = tuple(str(s) for s in self.feature_names)
        kinds = tuple(self.feature_kinds)
        if len(names) != r or len(set(names)) != r:
            raise DataError("feature_names must hold exactly r unique entries")
        if len(kinds) != r or any(k not in FEATURE_KINDS for k in kinds):
            raise DataError(f"feature_kinds must hold r entries from {FEATURE_KINDS}")
        for j, k in enumerate(kinds):
            if k == BINARY01 and (X[:, j].min() < 0 or X[:, j].max() > 1):
                raise DataError(f"binary01 column {names[j]!r} has values outside [0, 1]")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_kinds", kinds)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def r(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.features[rows], self.target[rows], self.feature_names, self.feature_kinds)


@dataclass(frozen=True)
class SplitPlan:
    n_repeats: int = 20
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if int(self.n_repeats) < 1:
            raise DataError("n_repeats must be >= 1")
        if not 0.0 < float(self.train_fraction) < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")
        if int(self.seed) < 0 or int(self.seed) >= 2**64:
            raise DataError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class DescriptiveStats:
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    max: np.ndarray
    target_mean: float
    target_std: float

    def rows(self) -> list[tuple[str, float, float, float, float]]:
        return [
            (name, float(a), float(b), float(c), float(d))
            for name, a, b, c, d in zip(self.names, self.mean, self.std, self.min, self.max)
        ]


# ---------------------------------------------------------------------------
# synthetic generators


def case1_truth(X: np.ndarray) -> np.ndarray:
    """Noise-free structural function of simulation case 1."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x1, x2, x3, x4, x5 = X.T
    step = np.where(x1 > 0, 5.0, -5.0)
    return 2 * x1 - 3 * x2 + 0.5 * x3 + 1.5 * x1 * x2 - 2 * x3 * x4 + np.sin(x4) * x5 + step


def case2_truth(X: np.ndarray) -> np.ndarray:
    """Noise-free structural function of simulation case 2."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x1, x2, x3, x4, x5 = X.T
    return (
        np.sin(np.pi * x1 * x2)
        + np.sin(np.pi * x3 * x4)
        + x5**2
        - 0.5 * x1 * x3**2
        + 0.7 * x2 * x4 * x5
    )


TRUTH_FUNCTIONS = {"case1": case1_truth, "case2": case2_truth}


def _check_n(n) -> int:
    if int(n) != n or int(n) < 1:
        raise DataError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _simulate(truth, n, seed, noise):
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    X = rng.uniform(-10.0, 10.0, size=(n, 5))
    eps = rng.standard_normal(n)
    y = truth(X) + (eps if noise else 0.0)
    names = tuple(f"x{i}" for i in range(1, 6))
    return Dataset(X, y, names, (CONTINUOUS,) * 5)


def generate_case1(n: int, seed: int, noise: bool = True) -> Dataset:
    """Sample case 1: five U[-10, 10] features, interactions, a step and N(0, 1) noise.

    ``noise=False`` zeroes the noise term while drawing the same features.
    """
    return _simulate(case1_truth, n, seed, noise)


def generate_case2(n: int, seed: int, noise: bool = True) -> Dataset:
    """Sample case 2: sinusoidal interactions, a quadratic and a 3-way product."""
    return _simulate(case2_truth, n, seed, noise)


# Planted model of the survey surrogate. These numbers are invented for the
# surrogate only; they describe nothing about any real survey.
SURVEY_INTERVENTIONS = tuple(f"T{i}" for i in range(1, 20))
SURVEY_FEATURES = ("sex", "age") + SURVEY_INTERVENTIONS
SURVEY_UPTAKE = 0.35
SURVEY_COEFS = {
    "sex": 0.8,
    "age": -0.3,
    "T1": 1.2, "T2": 0.6, "T3": 1.0, "T4": 0.5, "T5": 0.9,
    "T6": 0.3, "T7": 0.4, "T8": 2.0, "T9": 0.2, "T10": -0.2,
    "T11": 0.8, "T12": 0.6, "T13": 0.9, "T14": 2.2, "T15": 0.1,
    "T16": -0.1, "T17": 1.8, "T18": 2.4, "T19": 0.3,
}
SURVEY_INTERACTIONS = {("T8", "T14"): 1.0, ("T17", "T18"): -1.2, ("T1", "T3"): 0.7}
SURVEY_NOISE_SD = 2.0


def survey_raw_score(X: np.ndarray) -> np.ndarray:
    """Noise-free planted score of the surrogate, before deviation scaling."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    col = {name: j for j, name in enumerate(SURVEY_FEATURES)}
    s = np.zeros(X.shape[0])
    for name, c in SURVEY_COEFS.items():
        s += c * X[:, col[name]]
    for (a, b), c in SURVEY_INTERACTIONS.items():
        s += c * X[:, col[a]] * X[:, col[b]]
    return s


def generate_survey_surrogate(n: int, seed: int) -> Dataset:
    """Schema-compatible stand-in for the private student survey.

    Columns are sex (0/1), age (15-18), T1..T19 (0/1). The target is a
    deviation value: the planted score rescaled in-sample to mean 50, sd 10.
    """
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    sex = rng.integers(0, 2, size=n).astype(float)
    age = rng.integers(15, 19, size=n).astype(float)
    T = (rng.random((n, len(SURVEY_INTERVENTIONS))) < SURVEY_UPTAKE).astype(float)
    X = np.column_stack([sex, age, T])
    raw = survey_raw_score(X) + SURVEY_NOISE_SD * rng.standard_normal(n)
    sd = raw.std(ddof=1) if n > 1 else 0.0
    y = 50.0 + (10.0 * (raw - raw.mean()) / sd if sd > 0 else 0.0 * raw)
    kinds = (BINARY01, CONTINUOUS) + (BINARY01,) * len(SURVEY_INTERVENTIONS)
    return Dataset(X, y, SURVEY_FEATURES, kinds)


# ---------------------------------------------------------------------------
# CSV


def ingest_csv(path, target_column: str, kind_overrides: Mapping[str, str] | None = None) -> Dataset:
    """Read a comma-separated file with a header row into a Dataset.

    Every non-target column becomes a feature, in header order. A column
    holding only 0 and 1 is tagged binary01 unless overridden.
    """
    path = Path(path)
    if not path.is_file():
        raise CSVParseError(f"file not found: {path}")
    kind_overrides = dict(kind_overrides or {})
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError("empty file: no header row", row=1) from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise CSVParseError(f"target column {target_column!r} not in header", row=1)
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise CSVParseError(f"expected {len(header)} cells, found {len(raw)}", row=lineno)
            vals = []
            for name, cell in zip(header, raw):
                try:
                    v = float(cell)
                except ValueError:
                    raise CSVParseError(f"non-numeric cell {cell!r}", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise CSVParseError(f"non-finite cell {cell!r}", row=lineno, column=name)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise CSVParseError("no data rows", row=2)
    table = np.array(rows, dtype=float)
    t = header.index(target_column)
    names = [h for h in header if h != target_column]
    X = np.delete(table, t, axis=1)
    unknown = set(kind_overrides) - set(names)
    if unknown:
        raise CSVParseError(f"kind overrides for unknown columns {sorted(unknown)}")
    kinds = []
    for j, name in enumerate(names):
        if name in kind_overrides:
            kinds.append(kind_overrides[name])
        elif np.isin(X[:, j], (0.0, 1.0)).all():
            kinds.append(BINARY01)
        else:
            kinds.append(CONTINUOUS)
    return Dataset(X, table[:, t], tuple(names), tuple(kinds))


def export_csv(d: Dataset, path, target_column: str = "y") -> Path:
    path = Path(path)
    if target_column in d.feature_names:
        raise DataError(f"target column name {target_column!r} clashes with a feature")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(d.feature_names) + [target_column])
        for x, y in zip(d.features, d.target):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])
    return path


# ---------------------------------------------------------------------------
# splits and summaries


def split_indices(n: int, plan: SplitPlan) -> list[tuple[np.ndarray, np.ndarray]]:
    """Index pairs for ``plan.n_repeats`` random train/test partitions of ``range(n)``."""
    if n < 10:
        raise DataError(f"need at least 10 rows to split, got {n}")
    n_train = int(round(plan.train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise DataError(f"train fraction {plan.train_fraction} leaves an empty side for n={n}")
    rng = np.random.default_rng(plan.seed)
    out = []
    for _ in range(plan.n_repeats):
        perm = rng.permutation(n)
        out.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    return out


def repeated_splits(d: Dataset, plan: SplitPlan) -> Iterator[tuple[Dataset, Dataset]]:
    for tr, te in split_indices(d.n, plan):
        yield d.subset(tr), d.subset(te)


def describe(d: Dataset) -> DescriptiveStats:
    if d.n < 2:
        raise DataError("describe needs at least 2 rows")
    X = d.features
    return DescriptiveStats(
        names=d.feature_names,
        mean=X.mean(axis=0),
        std=X.std(axis=0, ddof=1),
        min=X.min(axis=0),
        max=X.max(axis=0),
        target_mean=float(d.target.mean()),
        target_std=float(d.target.std(ddof=1)),
    )


def write_describe_csv(stats: DescriptiveStats, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "mean", "std", "min", "max"])
        for row in stats.rows():
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
    return path
