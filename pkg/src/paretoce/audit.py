"""Consistency audit of a finished run directory.

The checks deliberately avoid the metric and aggregation code paths: they
re-read the raw JSON CE files and ``train.csv`` with plain numpy and
compare against ``aggregate.csv``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import TRUTH_FUNCTIONS
from .experiments import _slug, method_labels, sha256

REL_TOL = 1e-9
BALL_TOL = 1e-6


@dataclass
class AuditResult:
    checked_files: int = 0
    checked_cells: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=REL_TOL, abs_tol=1e-12)


def _load_matrix(path: Path, drop: str) -> np.ndarray:
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    keep = [i for i, h in enumerate(rows[0]) if h != drop]
    return np.array([[float(r[i]) for i in keep] for r in rows[1:]])


def audit_run(run_dir) -> AuditResult:
    run_dir = Path(run_dir)
    res = AuditResult()
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {run_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("status") != "complete":
        res.problems.append(f"run status is {manifest.get('status')!r} (failed stage {manifest.get('failed_stage')!r})")
    for entry in manifest["files"]:
        p = run_dir / entry["path"]
        if not p.exists():
            res.problems.append(f"listed file missing: {entry['path']}")
        elif sha256(p) != entry["sha256"]:
            res.problems.append(f"checksum mismatch: {entry['path']}")
        res.checked_files += 1

    cfg = manifest["config"]
    train = _load_matrix(run_dir / "train.csv", drop="y")
    truth = None
    if cfg.get("tir") and cfg["experiment"] != "exp2":
        truth = TRUTH_FUNCTIONS[cfg["experiment"].split("_")[1]]

    with (run_dir / "aggregate.csv").open(newline="", encoding="utf-8") as fh:
        table = {row["label"]: row for row in csv.DictReader(fh)}

    n_bases = cfg["n_bases"]
    known = set(method_labels(cfg))
    for label in table:
        if label not in known:
            res.problems.append(f"aggregate.csv has unexpected row {label}")
            continue
        sums: dict[str, list[float]] = {}
        for b in range(n_bases):
            path = run_dir / "ces" / f"base{b:03d}_{_slug(label)}.json"
            if not path.exists():
                res.problems.append(f"missing CE file {path.name}")
                continue
            doc = json.loads(path.read_text(encoding="utf-8"))
            _check_feasible(doc, path.name, res)
            for k, v in _cell_values(doc, train, truth).items():
                sums.setdefault(k, []).append(v)
        row = table[label]
        for k, vals in sums.items():
            if len(vals) != n_bases:
                continue
            want = sum(vals) / len(vals)
            got = row.get(k, "")
            if got == "" or not _close(float(got), want):
                res.problems.append(f"{label} {k}: table {got!r} vs recomputed {want!r}")
            res.checked_cells += 1
    return res


def _cell_values(doc: dict, train: np.ndarray, truth) -> dict[str, float]:
    X = np.asarray(doc["explanations"], dtype=float)
    P = np.asarray(doc["predictions"], dtype=float)
    base = np.asarray(doc["problem"]["base"], dtype=float)
    names = doc["model_names"]
    out = {f"val_{n}": float(P[:, j].mean()) for j, n in enumerate(names)}
    out["ave_val"] = float(np.mean([P[:, j].mean() for j in doc["used_models"]]))
    out["dissim"] = float(sum(float(((x - base) ** 2).sum()) for x in X) / len(X))
    out["plaus"] = float(sum(float(((train - x) ** 2).sum(axis=1).min()) for x in X) / len(X))
    if truth is not None:
        t_base = float(truth(base[None, :])[0])
        out["tir"] = float(np.mean(truth(X) > t_base))
    return out


def _check_feasible(doc: dict, name: str, res: AuditResult):
    pr = doc["problem"]
    X = np.asarray(doc["explanations"], dtype=float)
    base = np.asarray(pr["base"], dtype=float)
    scale = np.asarray(pr["scale"], dtype=float) if pr.get("scale") is not None else np.ones_like(base)
    d = np.sqrt((((X - base) / scale) ** 2).sum(axis=1))
    if pr["distance_kind"] == "squared_euclidean":
        d = d**2
    if np.any(d > pr["C"] + BALL_TOL):
        res.problems.append(f"{name}: explanation outside the distance ball")
    lo, hi = np.asarray(pr["lower"], dtype=float), np.asarray(pr["upper"], dtype=float)
    if np.any(X < lo - 1e-9) or np.any(X > hi + 1e-9):
        res.problems.append(f"{name}: explanation outside the box")
    for j, rule in enumerate(pr["rules"]):
        col = X[:, j]
        bad = (
            (rule == "fixed" and np.any(col != base[j]))
            or (rule == "nonincreasing_if_one" and base[j] == 1 and np.any(col > base[j] + 1e-9))
            or (rule == "nondecreasing_if_zero" and base[j] == 0 and np.any(col < base[j] - 1e-9))
        )
        if bad:
            res.problems.append(f"{name}: direction rule {rule!r} broken on feature {j}")
