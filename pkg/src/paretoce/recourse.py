"""Counterfactual explanation problems and their generators.

Three generators share one problem definition:

* ``method1_generate``: multi-start COBYLA on a single model, trading the
  prediction against ``lam`` times the distance to the base point.
* ``method2_generate``: the same procedure on a stacking model.
* ``method3_generate``: NSGA-II over all selected models at once, keeping
  only points that Pareto-improve on the base point's predictions.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import Bounds, minimize

from .data import BINARY01, Dataset
from .models.base import Predictor, as_int_seed
from .moo import MooConfig, MooProblem, evolve, select_diverse_subset

log = logging.getLogger(__name__)

EUCLIDEAN = "euclidean"
SQUARED_EUCLIDEAN = "squared_euclidean"
DISTANCE_KINDS = (EUCLIDEAN, SQUARED_EUCLIDEAN)

FREE = "free"
FIXED = "fixed"
NONINCREASING_IF_ONE = "nonincreasing_if_one"
NONDECREASING_IF_ZERO = "nondecreasing_if_zero"
RULES = (FREE, FIXED, NONINCREASING_IF_ONE, NONDECREASING_IF_ZERO)
# preset: every binary01 feature may only move away from its current value
BINARY_DIRECTION = "binary_direction"

MAXIMIZE = "maximize"
FEAS_TOL = 1e-9
EQ_TOL = 1e-6
COBYLA_MAXITER = 500
COBYLA_TOL = 1e-6


class InfeasibleError(RuntimeError):
    def __init__(self, message, best_violation=None):
        super().__init__(message)
        self.best_violation = best_violation


def distance(a, b, kind: str = EUCLIDEAN, scale=None):
    """Euclidean distance or its square; rows of 2-d input are handled separately."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    diff = a - b
    if scale is not None:
        diff = diff / np.asarray(scale, dtype=float)
    sq = np.sum(diff * diff, axis=-1)
    if kind == SQUARED_EUCLIDEAN:
        return sq
    if kind == EUCLIDEAN:
        return np.sqrt(sq)
    raise ValueError(f"unknown distance kind {kind!r}")


@dataclass(frozen=True, eq=False)
class CEProblem:
    base: np.ndarray
    C: float
    lam: float = 2.0
    target: object = MAXIMIZE  # "maximize" or a real target value
    distance_kind: str = EUCLIDEAN
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    rules: tuple = ()
    feature_names: tuple = ()
    feature_kinds: tuple = ()
    equalities: tuple = ()  # callables h(X: (n, r)) -> (n,), required == 0
    scale: Optional[np.ndarray] = None  # per-feature divisor inside the distance

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).ravel()
        r = base.size
        lower = np.full(r, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        upper = np.full(r, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        rules = tuple(self.rules) or (FREE,) * r
        if not self.C > 0:
            raise ValueError("distance bound C must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.distance_kind not in DISTANCE_KINDS:
            raise ValueError(f"distance_kind must be one of {DISTANCE_KINDS}")
        if self.target != MAXIMIZE and not isinstance(self.target, (int, float)):
            raise ValueError("target must be 'maximize' or a real number")
        if lower.shape != (r,) or upper.shape != (r,) or len(rules) != r:
            raise ValueError("bounds and rules must match the base dimension")
        if np.any(base < lower) or np.any(base > upper):
            raise ValueError("base lies outside the box bounds")
        if any(rule not in RULES for rule in rules):
            raise ValueError(f"rules must come from {RULES}")
        names = tuple(self.feature_names) or tuple(f"x{i + 1}" for i in range(r))
        kinds = tuple(self.feature_kinds) or ("continuous",) * r
        for k, v in (("base", base), ("lower", lower), ("upper", upper)):
            v.setflags(write=False)
            object.__setattr__(self, k, v)
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_kinds", kinds)
        object.__setattr__(self, "equalities", tuple(self.equalities))
        if self.scale is not None:
            object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))

    @property
    def r(self) -> int:
        return self.base.size

    @property
    def maximize(self) -> bool:
        return self.target == MAXIMIZE

    def effective_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box bounds intersected with the direction rules."""
        lo, hi = self.lower.copy(), self.upper.copy()
        b = self.base
        for j, rule in enumerate(self.rules):
            if rule == FIXED:
                lo[j] = hi[j] = b[j]
            elif rule == NONINCREASING_IF_ONE and b[j] == 1.0:
                hi[j] = b[j]
            elif rule == NONDECREASING_IF_ZERO and b[j] == 0.0:
                lo[j] = b[j]
        return lo, hi

    def active(self) -> np.ndarray:
        lo, hi = self.effective_bounds()
        return lo < hi

    def embed(self, Z: np.ndarray) -> np.ndarray:
        """Place active-coordinate vectors back into full feature vectors."""
        Z = np.atleast_2d(Z)
        X = np.repeat(self.base[None, :], Z.shape[0], axis=0)
        X[:, self.active()] = Z
        return X

    def dist(self, X) -> np.ndarray:
        return distance(np.atleast_2d(X), self.base, self.distance_kind, self.scale)

    def ball_radius(self) -> np.ndarray:
        """Half-widths of the axis box enclosing the distance ball."""
        rad = self.C if self.distance_kind == EUCLIDEAN else np.sqrt(self.C)
        s = np.ones(self.r) if self.scale is None else self.scale
        return rad * s

    def loss(self, pred: np.ndarray) -> np.ndarray:
        if self.maximize:
            return -pred
        return (float(self.target) - pred) ** 2

    def violations(self, X) -> np.ndarray:
        """Per-row violation magnitudes: ball, box/direction, equalities."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = self.effective_bounds()
        cols = [
            np.maximum(self.dist(X) - self.C, 0.0),
            np.maximum(lo - X, 0.0).sum(axis=1) + np.maximum(X - hi, 0.0).sum(axis=1),
        ]
        for h in self.equalities:
            cols.append(np.maximum(np.abs(np.asarray(h(X), dtype=float)) - EQ_TOL, 0.0))
        return np.column_stack(cols)

    def is_feasible(self, X, tol: float = FEAS_TOL) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = self.effective_bounds()
        ok = self.dist(X) <= self.C + tol
        ok &= np.all(X >= lo - tol, axis=1) & np.all(X <= hi + tol, axis=1)
        for h in self.equalities:
            ok &= np.abs(np.asarray(h(X), dtype=float)) <= EQ_TOL + tol
        return ok

    def repair(self, X) -> np.ndarray:
        """Clip into the effective box, then pull back onto the ball along the ray to the base."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = self.effective_bounds()
        X = np.clip(X, lo, hi)
        d = self.dist(X)
        over = d > self.C
        if over.any():
            if self.distance_kind == EUCLIDEAN:
                f = self.C / d[over]
            else:
                f = np.sqrt(self.C / d[over])
            X[over] = self.base + (X[over] - self.base) * (f[:, None] * (1 - 1e-12))
        return X

    def echo(self) -> dict:
        return {
            "base": self.base.tolist(),
            "C": self.C,
            "lambda": self.lam,
            "target": self.target,
            "distance_kind": self.distance_kind,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "rules": list(self.rules),
            "feature_names": list(self.feature_names),
            "feature_kinds": list(self.feature_kinds),
            "n_equalities": len(self.equalities),
            "scale": None if self.scale is None else self.scale.tolist(),
        }

    @classmethod
    def from_echo(cls, doc: dict) -> "CEProblem":
        if doc.get("n_equalities"):
            raise ValueError("equality constraints cannot be restored from a problem echo")
        return cls(
            base=doc["base"], C=doc["C"], lam=doc["lambda"], target=doc["target"],
            distance_kind=doc["distance_kind"], lower=doc["lower"], upper=doc["upper"],
            rules=tuple(doc["rules"]), feature_names=tuple(doc["feature_names"]),
            feature_kinds=tuple(doc["feature_kinds"]), scale=doc.get("scale"),
        )


def build_problem(
    base,
    dataset: Dataset,
    C: float,
    lam: float = 2.0,
    rules=None,
    fixed: Sequence[str] = (),
    target=MAXIMIZE,
    distance_kind: str = EUCLIDEAN,
    z_scored: bool = False,
) -> CEProblem:
    """CE problem whose box is the per-feature range observed in ``dataset``.

    ``rules`` is ``None`` (all free), a sequence of per-feature rules, a
    mapping from feature name to rule, or ``"binary_direction"``: binary01
    features at 1 may only decrease and those at 0 only increase.
    ``fixed`` names features that must keep their base value.
    """
    base = np.asarray(base, dtype=float).ravel()
    if base.size != dataset.r:
        raise ValueError(f"base has {base.size} features, dataset has {dataset.r}")
    lower = dataset.features.min(axis=0)
    upper = dataset.features.max(axis=0)
    outside = (base < lower) | (base > upper)
    if outside.any():
        names = [dataset.feature_names[j] for j in np.flatnonzero(outside)]
        warnings.warn(f"base lies outside the data range for {names}; bounds extended", stacklevel=2)
        lower = np.minimum(lower, base)
        upper = np.maximum(upper, base)
    if rules is None:
        rule_list = [FREE] * dataset.r
    elif isinstance(rules, str):
        if rules != BINARY_DIRECTION:
            raise ValueError(f"unknown rule preset {rules!r}")
        rule_list = [
            (NONINCREASING_IF_ONE if base[j] >= 0.5 else NONDECREASING_IF_ZERO) if k == BINARY01 else FREE
            for j, k in enumerate(dataset.feature_kinds)
        ]
    elif isinstance(rules, Mapping):
        unknown = set(rules) - set(dataset.feature_names)
        if unknown:
            raise ValueError(f"rules for unknown features {sorted(unknown)}")
        rule_list = [rules.get(name, FREE) for name in dataset.feature_names]
    else:
        rule_list = list(rules)
    for name in fixed:
        rule_list[dataset.feature_names.index(name)] = FIXED
    scale = None
    if z_scored:
        sd = dataset.features.std(axis=0, ddof=1)
        scale = np.where(sd > 0, sd, 1.0)
    return CEProblem(
        base=base, C=C, lam=lam, target=target, distance_kind=distance_kind,
        lower=lower, upper=upper, rules=tuple(rule_list),
        feature_names=dataset.feature_names, feature_kinds=dataset.feature_kinds, scale=scale,
    )


# ---------------------------------------------------------------------------
# CE sets


def predict_matrix(models: Sequence[Predictor], X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not len(models):
        return np.zeros((X.shape[0], 0))
    return np.column_stack([m.predict(X) for m in models])


@dataclass(eq=False)
class CESet:
    problem: CEProblem
    explanations: np.ndarray  # (S, r)
    predictions: np.ndarray  # (S, len(model_names))
    model_names: tuple
    method: str
    used: tuple  # indices into model_names that drove the optimisation
    info: dict = field(default_factory=dict)

    @property
    def S(self) -> int:
        return self.explanations.shape[0]

    def deltas(self) -> np.ndarray:
        return self.explanations - self.problem.base

    def to_dict(self) -> dict:
        return {
            "format": "paretoce.ceset",
            "version": 1,
            "method": self.method,
            "model_names": list(self.model_names),
            "used_models": list(self.used),
            "problem": self.problem.echo(),
            "explanations": self.explanations.tolist(),
            "predictions": self.predictions.tolist(),
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CESet":
        if doc.get("format") != "paretoce.ceset" or doc.get("version") != 1:
            raise ValueError("not a version-1 CE set document")
        r = len(doc["problem"]["base"])
        return cls(
            problem=CEProblem.from_echo(doc["problem"]),
            explanations=np.asarray(doc["explanations"], dtype=float).reshape(-1, r),
            predictions=np.asarray(doc["predictions"], dtype=float).reshape(-1, len(doc["model_names"])),
            model_names=tuple(doc["model_names"]),
            method=doc["method"],
            used=tuple(doc["used_models"]),
            info=doc.get("info", {}),
        )

    def save_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()), encoding="utf-8")
        return path

    @classmethod
    def load_json(cls, path) -> "CESet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ["s"]
                + [f"delta_{n}" for n in self.problem.feature_names]
                + [f"pred_{n}" for n in self.model_names]
            )
            for s, (d, p) in enumerate(zip(self.deltas(), self.predictions)):
                w.writerow([s] + [repr(float(v)) for v in d] + [repr(float(v)) for v in p])
        return path


def _report_columns(models_used: Mapping[str, Predictor], report_models: Mapping[str, Predictor] | None):
    cols = dict(report_models or {})
    for name, m in models_used.items():
        cols.setdefault(name, m)
    names = tuple(cols)
    used = tuple(names.index(n) for n in models_used)
    return names, [cols[n] for n in names], used


def _as_named(models, prefix="model") -> dict[str, Predictor]:
    if isinstance(models, Mapping):
        return dict(models)
    if isinstance(models, Predictor):
        return {getattr(models, "kind", prefix): models}
    return {f"{getattr(m, 'kind', prefix)}_{i}": m for i, m in enumerate(models)}


# ---------------------------------------------------------------------------
# Methods 1 and 2


def _random_start(problem: CEProblem, rng: np.random.Generator) -> np.ndarray:
    act = problem.active()
    k = int(act.sum())
    direction = rng.standard_normal(k)
    direction /= np.linalg.norm(direction) or 1.0
    radius = problem.C if problem.distance_kind == EUCLIDEAN else np.sqrt(problem.C)
    step = direction * radius * rng.random() ** (1.0 / k)
    if problem.scale is not None:
        step = step * problem.scale[act]
    x = problem.base.copy()
    x[act] += step
    return problem.repair(x)[0]


def _local_search(problem, model, rng, maxiter, tol):
    act = problem.active()
    lo, hi = problem.effective_bounds()

    def full(z):
        x = problem.base.copy()
        x[act] = z
        return x

    def objective(z):
        x = full(z)
        return float(problem.loss(np.atleast_1d(model.predict(x)))[0] + problem.lam * problem.dist(x)[0])

    cons = [{"type": "ineq", "fun": lambda z: problem.C - problem.dist(full(z))[0]}]
    for h in problem.equalities:
        cons.append({"type": "ineq", "fun": lambda z, h=h: EQ_TOL - abs(float(np.asarray(h(full(z)[None, :]))[0]))})
    z0 = _random_start(problem, rng)[act]
    res = minimize(
        objective, z0, method="COBYLA", constraints=cons,
        bounds=Bounds(lo[act], hi[act]), tol=tol,
        options={"maxiter": maxiter, "rhobeg": max(problem.C / 4.0, 1e-3)},
    )
    x = full(np.asarray(res.x, dtype=float))
    if not np.all(np.isfinite(x)) or not np.isfinite(res.fun):
        raise FloatingPointError("optimizer returned non-finite values")
    return problem.repair(x)[0], int(res.nfev)


def _multistart(problem, model, S, seed, method, report_models, used_models, maxiter, tol):
    if S < 1:
        raise ValueError("S must be >= 1")
    if not problem.active().any():
        raise InfeasibleError("every feature is fixed; nothing to optimise")
    rng = np.random.default_rng(as_int_seed(seed))
    points, dropped, nfev = [], 0, 0
    for s in range(S):
        for attempt in range(2):
            try:
                x, k = _local_search(problem, model, rng, maxiter, tol)
            except (FloatingPointError, ValueError, ArithmeticError) as exc:
                log.warning("%s start %d attempt %d failed: %s", method, s, attempt, exc)
                continue
            points.append(x)
            nfev += k
            break
        else:
            dropped += 1
    if not points:
        raise InfeasibleError(f"{method}: every start failed")
    X = np.vstack(points)
    names, cols, used = _report_columns(used_models, report_models)
    info = {"requested": S, "dropped_starts": dropped, "evaluations": nfev, "seed": int(seed),
            "base_predictions": predict_matrix(cols, problem.base)[0].tolist()}
    return CESet(problem, X, predict_matrix(cols, X), names, method, used, info)


def method1_generate(
    problem: CEProblem,
    model: Predictor,
    S: int = 20,
    seed: int = 0,
    report_models: Mapping[str, Predictor] | None = None,
    name: str | None = None,
    maxiter: int = COBYLA_MAXITER,
    tol: float = COBYLA_TOL,
) -> CESet:
    """S COBYLA runs from random points inside the ball, one model, distance-penalised.

    ``report_models`` adds prediction columns (e.g. the whole zoo) without
    affecting the search.
    """
    name = name or model.kind
    return _multistart(problem, model, S, seed, "method1", report_models, {name: model}, maxiter, tol)


def method2_generate(
    problem: CEProblem,
    stacked: Predictor,
    S: int = 20,
    seed: int = 0,
    report_models: Mapping[str, Predictor] | None = None,
    name: str = "stacking",
    maxiter: int = COBYLA_MAXITER,
    tol: float = COBYLA_TOL,
) -> CESet:
    if stacked.kind != "stacking":
        raise ValueError(f"method 2 needs a stacking model, got {stacked.kind!r}")
    if report_models is None:
        report_models = {f"{b.kind}_{i}": b for i, b in enumerate(getattr(stacked, "bases", []))}
    return _multistart(problem, stacked, S, seed, "method2", report_models, {name: stacked}, maxiter, tol)


# ---------------------------------------------------------------------------
# Method 3


def method3_generate(
    problem: CEProblem,
    models,
    S: int = 20,
    moo_config: MooConfig = MooConfig(),
    report_models: Mapping[str, Predictor] | None = None,
    require_improvement: bool = True,
    snap_binary: bool = False,
) -> CESet:
    """Pareto-improving explanations for several models via NSGA-II.

    Objective ``l`` is the loss of model ``l`` (its negated prediction when
    maximising). Feasible points lie in the distance ball and the effective
    box, and, with ``require_improvement``, no model's loss may exceed its
    value at the base point. Up to ``S`` members of the final front are
    returned, chosen by crowding distance.
    """
    named = _as_named(models)
    m = len(named)
    if m < 1:
        raise ValueError("method 3 needs at least one model")
    if S < 1:
        raise ValueError("S must be >= 1")
    mlist = list(named.values())
    act = problem.active()
    if not act.any():
        raise InfeasibleError("every feature is fixed; nothing to optimise")
    lo, hi = problem.effective_bounds()
    R = problem.ball_radius()
    glo = np.maximum(lo, problem.base - R)[act]
    ghi = np.minimum(hi, problem.base + R)[act]
    base_loss = problem.loss(predict_matrix(mlist, problem.base))[0]

    def objectives(Z):
        return problem.loss(predict_matrix(mlist, problem.embed(Z)))

    def constraints(Z):
        X = problem.embed(Z)
        cols = [np.maximum(problem.dist(X) - problem.C, 0.0)]
        for h in problem.equalities:
            cols.append(np.maximum(np.abs(np.asarray(h(X), dtype=float)) - EQ_TOL, 0.0))
        if require_improvement:
            L = problem.loss(predict_matrix(mlist, X))
            cols.append(np.maximum(L - base_loss, 0.0))
        return np.column_stack(cols)

    mp = MooProblem(glo, ghi, objectives, m, constraints, initial=problem.base[act][None, :])
    archive = evolve(mp, moo_config)
    feasible = [ind for ind in archive if ind.feasible]
    if not feasible:
        best = min(ind.total_violation for ind in archive)
        raise InfeasibleError(f"method 3 found no feasible explanation (best violation {best:.3g})", best)
    chosen = select_diverse_subset(feasible, S)
    X = problem.embed(np.vstack([ind.genome for ind in chosen]))
    info = {
        "requested": S,
        "front_size": len(feasible),
        "shortfall": max(0, S - len(chosen)),
        "require_improvement": require_improvement,
        "moo": {"population": moo_config.population, "generations": moo_config.generations, "seed": int(moo_config.seed)},
    }
    if snap_binary:
        X, n_kept = _snap_binary(problem, X)
        info["snap_rejected"] = n_kept
    names, cols, used = _report_columns(named, report_models)
    info["base_predictions"] = predict_matrix(cols, problem.base)[0].tolist()
    return CESet(problem, X, predict_matrix(cols, X), names, "method3", used, info)


def _snap_binary(problem: CEProblem, X: np.ndarray) -> tuple[np.ndarray, int]:
    binary = np.array([k == BINARY01 for k in problem.feature_kinds])
    if not binary.any():
        return X, 0
    Y = X.copy()
    Y[:, binary] = np.round(Y[:, binary])
    ok = problem.is_feasible(Y)
    Y[~ok] = X[~ok]
    return Y, int((~ok).sum())


# ---------------------------------------------------------------------------
# representatives


def _explanations(ces) -> np.ndarray:
    X = ces.explanations if isinstance(ces, CESet) else np.atleast_2d(np.asarray(ces, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty explanation set")
    return X


def select_medoid(ces) -> np.ndarray:
    """Member with the smallest summed Euclidean distance to all others."""
    X = _explanations(ces)
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
    return X[int(np.argmin(D.sum(axis=1)))].copy()


def select_closest_to_centroid(ces) -> np.ndarray:
    """Member nearest to the coordinate-wise mean."""
    X = _explanations(ces)
    d = np.sqrt(((X - X.mean(axis=0)) ** 2).sum(axis=1))
    return X[int(np.argmin(d))].copy()
