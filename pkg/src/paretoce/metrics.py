"""Evaluation metrics for CE sets and their aggregation over base cases."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .recourse import CESet

RATIO_EPS = 1e-12
TIR_TRUTH_VS_BASE = "truth_vs_base"
TIR_PREDICTION_VS_TRUTH = "prediction_vs_truth"


class UnsupportedContextError(RuntimeError):
    """A metric was requested where its inputs cannot exist (e.g. TIR on real data)."""


def _model_index(ces: CESet, j) -> int:
    if isinstance(j, str):
        try:
            return ces.model_names.index(j)
        except ValueError:
            raise IndexError(f"unknown model {j!r}; have {ces.model_names}") from None
    j = int(j)
    if not 0 <= j < len(ces.model_names):
        raise IndexError(f"model index {j} out of range for {len(ces.model_names)} models")
    return j


def _nonempty(ces: CESet):
    if ces.S < 1:
        raise ValueError("metrics need at least one explanation")


def validity(ces: CESet, model_index) -> float:
    """Mean prediction when maximising; mean absolute distance to the target otherwise."""
    _nonempty(ces)
    p = ces.predictions[:, _model_index(ces, model_index)]
    if ces.problem.maximize:
        return float(p.mean())
    return float(np.mean(np.abs(float(ces.problem.target) - p)))


def dissimilarity(ces: CESet) -> float:
    _nonempty(ces)
    d = ces.explanations - ces.problem.base
    return float(np.mean(np.sum(d * d, axis=1)))


def nearest_sq_distances(X: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Squared distance from each row of X to its nearest row of ``rows``."""
    D = ((X[:, None, :] - rows[None, :, :]) ** 2).sum(axis=2)
    return D.min(axis=1)


def plausibility(ces: CESet, train) -> float:
    _nonempty(ces)
    rows = train.features if hasattr(train, "features") else np.asarray(train, dtype=float)
    if rows.shape[0] == 0:
        raise ValueError("plausibility needs a non-empty training set")
    return float(nearest_sq_distances(ces.explanations, rows).mean())


def true_improvement_ratio(
    ces: CESet,
    truth: Optional[Callable[[np.ndarray], np.ndarray]],
    base=None,
    mode: str = TIR_TRUTH_VS_BASE,
    model_index=None,
) -> float:
    """Share of explanations whose noise-free outcome beats the base's.

    ``mode="prediction_vs_truth"`` instead counts explanations whose model
    prediction exceeds the true value at the same point.
    """
    if truth is None:
        raise UnsupportedContextError("the true improvement ratio needs a known true function")
    _nonempty(ces)
    t_cf = np.asarray(truth(ces.explanations), dtype=float)
    if mode == TIR_TRUTH_VS_BASE:
        b = ces.problem.base if base is None else np.asarray(base, dtype=float)
        t_b = float(np.asarray(truth(b[None, :]), dtype=float)[0])
        return float(np.mean(t_cf - t_b > 0))
    if mode == TIR_PREDICTION_VS_TRUTH:
        j = ces.used[0] if model_index is None else _model_index(ces, model_index)
        return float(np.mean(ces.predictions[:, j] - t_cf > 0))
    raise ValueError(f"unknown TIR mode {mode!r}")


def _ratio(num, den) -> Optional[float]:
    if num is None or den is None or abs(den) < RATIO_EPS:
        return None
    return float(num / den)


@dataclass
class MetricsReport:
    val: dict  # model name -> validity
    dissim: float
    plaus: float
    tir: Optional[float]
    ave_val: float
    S_effective: int
    label: str = ""
    method: str = ""

    @property
    def ratio_val_dissim(self) -> Optional[float]:
        return _ratio(self.ave_val, self.dissim)

    @property
    def ratio_val_plaus(self) -> Optional[float]:
        return _ratio(self.ave_val, self.plaus)


def evaluate_ces(ces: CESet, train, truth=None, label: str = "", tir_mode: str = TIR_TRUTH_VS_BASE) -> MetricsReport:
    """All metrics of one CE set; ``ave_val`` averages over the models that drove the search."""
    val = {name: validity(ces, j) for j, name in enumerate(ces.model_names)}
    used = [ces.model_names[j] for j in ces.used]
    return MetricsReport(
        val=val,
        dissim=dissimilarity(ces),
        plaus=plausibility(ces, train),
        tir=None if truth is None else true_improvement_ratio(ces, truth, mode=tir_mode),
        ave_val=float(np.mean([val[n] for n in used])),
        S_effective=ces.S,
        label=label,
        method=ces.method,
    )


# ---------------------------------------------------------------------------
# aggregation

LOWER_IS_BETTER = ("dissim", "plaus")
HIGHER_IS_BETTER = ("tir", "ratio_val_dissim", "ratio_val_plaus")


@dataclass
class AggregateRow:
    label: str
    method: str
    val: dict
    ave_val: float
    dissim: float
    plaus: float
    tir: Optional[float]
    n_bases: int
    S_effective: float
    top3: dict = field(default_factory=dict)

    @property
    def ratio_val_dissim(self):
        return _ratio(self.ave_val, self.dissim)

    @property
    def ratio_val_plaus(self):
        return _ratio(self.ave_val, self.plaus)


@dataclass
class AggregateReport:
    rows: list
    model_names: tuple

    @property
    def B(self) -> dict:
        return {row.label: row.n_bases for row in self.rows}

    def row(self, label: str) -> AggregateRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def columns(self) -> list[str]:
        return (
            ["label", "method"]
            + [f"val_{n}" for n in self.model_names]
            + ["ave_val", "dissim", "plaus", "tir", "fir", "ratio_val_dissim", "ratio_val_plaus",
               "n_bases", "S_effective"]
            + [f"top3_{c}" for c in LOWER_IS_BETTER + HIGHER_IS_BETTER]
        )

    def records(self) -> list[list]:
        out = []
        for row in self.rows:
            out.append(
                [row.label, row.method]
                + [_fmt(row.val.get(n)) for n in self.model_names]
                + [_fmt(row.ave_val), _fmt(row.dissim), _fmt(row.plaus), _fmt(row.tir), _fmt(row.tir),
                   _fmt(row.ratio_val_dissim), _fmt(row.ratio_val_plaus), row.n_bases, _fmt(row.S_effective)]
                + [int(row.top3.get(c, False)) for c in LOWER_IS_BETTER + HIGHER_IS_BETTER]
            )
        return out

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            w.writerows(self.records())
        return path

    def to_markdown(self, digits: int = 3) -> str:
        head = (["method"] + [f"val {n}" for n in self.model_names]
                + ["ave val", "dissim", "plaus", "TIR", "val/dissim", "val/plaus"])
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for row in self.rows:
            cells = [row.label] + [_num(row.val.get(n), digits) for n in self.model_names]
            cells.append(_num(row.ave_val, digits))
            for c in ("dissim", "plaus", "tir", "ratio_val_dissim", "ratio_val_plaus"):
                s = _num(getattr(row, c), digits)
                cells.append(f"**{s}**" if row.top3.get(c) else s)
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _num(v, digits):
    return "-" if v is None else f"{v:.{digits}f}"


def aggregate(reports: Sequence[MetricsReport], labels: Sequence[str] | None = None) -> AggregateReport:
    """Per-label means over base cases plus top-3 markers per column.

    ``labels`` defaults to each report's own label; rows keep first-seen
    order. Ratio columns are ratios of the aggregated means.
    """
    if not reports:
        raise ValueError("nothing to aggregate")
    labels = [r.label for r in reports] if labels is None else list(labels)
    if len(labels) != len(reports):
        raise ValueError("one label per report is required")
    cells: dict[str, list[MetricsReport]] = {}
    for lab, rep in zip(labels, reports):
        cells.setdefault(lab, []).append(rep)
    model_names: list[str] = []
    for rep in reports:
        for n in rep.val:
            if n not in model_names:
                model_names.append(n)
    rows = []
    for lab, reps in cells.items():
        if not reps:
            raise ValueError(f"empty cell {lab!r}")
        tirs = [r.tir for r in reps]
        rows.append(AggregateRow(
            label=lab,
            method=reps[0].method,
            val={n: float(np.mean([r.val[n] for r in reps])) for n in model_names if all(n in r.val for r in reps)},
            ave_val=float(np.mean([r.ave_val for r in reps])),
            dissim=float(np.mean([r.dissim for r in reps])),
            plaus=float(np.mean([r.plaus for r in reps])),
            tir=None if any(t is None for t in tirs) else float(np.mean(tirs)),
            n_bases=len(reps),
            S_effective=float(np.mean([r.S_effective for r in reps])),
        ))
    _annotate_top3(rows)
    return AggregateReport(rows, tuple(model_names))


def _annotate_top3(rows):
    for col in LOWER_IS_BETTER + HIGHER_IS_BETTER:
        vals = [(getattr(r, col), i) for i, r in enumerate(rows) if getattr(r, col) is not None]
        sign = 1.0 if col in LOWER_IS_BETTER else -1.0
        vals.sort(key=lambda t: (sign * t[0], t[1]))
        best = {i for _, i in vals[:3]}
        for i, r in enumerate(rows):
            r.top3[col] = i in best
