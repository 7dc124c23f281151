"""End-to-end runs of the simulation (exp1) and survey-style (exp2) studies.

Each run writes CSV tables, one JSON file per (base case, method) CE set,
and a ``manifest.json`` listing every file with its SHA-256 digest. All
randomness derives from the configured seed, so identical configs give
byte-identical CSV output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    TRUTH_FUNCTIONS,
    Dataset,
    SplitPlan,
    describe,
    export_csv,
    generate_case1,
    generate_case2,
    generate_survey_surrogate,
    ingest_csv,
    split_indices,
    write_describe_csv,
)
from .metrics import UnsupportedContextError, aggregate, evaluate_ces
from .models import BASE_MODELS, default_zoo, evaluate_models, fit_zoo, select_top_m
from .models.base import as_int_seed
from .moo import MooConfig
from .recourse import (
    build_problem,
    method1_generate,
    method2_generate,
    method3_generate,
    select_closest_to_centroid,
    select_medoid,
)

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Output directory bookkeeping: files, digests, stage timings."""

    def __init__(self, cfg: dict, out_dir=None):
        self.cfg = cfg
        self.dir = Path(out_dir or cfg["out_dir"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        self.status = "running"
        self.failed_stage = None

    def path(self, rel: str) -> Path:
        p = self.dir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.files:
            self.files.append(rel)
        return p

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        except Exception as exc:
            self.status = "failed"
            self.failed_stage = name
            self.timings[name] = time.perf_counter() - t0
            self.write_manifest()
            raise StageError(name, exc) from exc
        self.timings[name] = time.perf_counter() - t0

    def write_manifest(self) -> dict:
        if self.status == "running":
            self.status = "complete"
        doc = {
            "library": "paretoce",
            "version": __version__,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "config": self.cfg,
            "files": [{"path": f, "sha256": sha256(self.dir / f)} for f in self.files if (self.dir / f).exists()],
            "timings_seconds": self.timings,
        }
        (self.dir / "manifest.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
        return doc


# ---------------------------------------------------------------------------
# building blocks shared by the CLI subcommands


def load_dataset(cfg: dict) -> Dataset:
    exp, seed, d = cfg["experiment"], cfg["seed"], cfg["data"]
    if d["source"] == "csv":
        return ingest_csv(d["csv_path"], d["target_column"])
    if exp == "exp1_case1":
        return generate_case1(d["n_samples"], seed)
    if exp == "exp1_case2":
        return generate_case2(d["n_samples"], seed)
    return generate_survey_surrogate(d["n_samples"], seed)


def truth_for(cfg: dict):
    if cfg["experiment"] == "exp2":
        return None
    return TRUTH_FUNCTIONS[cfg["experiment"].split("_")[1]]


def zoo_for(cfg: dict):
    m = cfg["models"]
    mlp = {
        "epochs": m["mlp_epochs"], "batch_size": m["mlp_batch_size"], "learning_rate": m["mlp_learning_rate"],
        "patience": m["mlp_patience"], "validation_fraction": m["mlp_validation_fraction"],
    }
    return default_zoo(n_trees=m["n_trees"], n_rounds=m["n_rounds"], hidden=m["hidden"], mlp_options=mlp)


def split_plan(cfg: dict) -> SplitPlan:
    return SplitPlan(cfg["split"]["n_repeats"], cfg["split"]["train_fraction"], cfg["seed"])


def moo_config(cfg: dict, seed: int) -> MooConfig:
    m = cfg["moo"]
    return MooConfig(
        population=m["population"], generations=m["generations"], crossover_prob=m["crossover_prob"],
        sbx_eta=m["sbx_eta"], mutation_prob=m["mutation_prob"], mutation_eta=m["mutation_eta"], seed=seed,
    )


def prepare(cfg: dict, data: Dataset):
    """First split, the zoo fitted on its training part, and the sampled base rows."""
    tr, te = split_indices(data.n, split_plan(cfg))[0]
    train = data.subset(tr)
    fitted = fit_zoo(zoo_for(cfg), train, cfg["seed"], split=0)
    if cfg["n_bases"] > len(te):
        raise ValueError(f"n_bases={cfg['n_bases']} exceeds the {len(te)} test rows")
    rng = np.random.default_rng(as_int_seed(cfg["seed"], 0xBA5E))
    bases = np.sort(rng.choice(te, size=cfg["n_bases"], replace=False))
    return train, fitted, bases


def method_labels(cfg: dict) -> list[str]:
    return [f"method1[{n}]" for n in BASE_MODELS] + ["method2[stacking]"] + [f"method3[m={m}]" for m in cfg["m_values"]]


def make_problem(cfg, data, base):
    fixed = [f for f in cfg["fixed_features"] if f in data.feature_names]
    return build_problem(
        base, data, C=cfg["C"], lam=cfg["lambda"], rules=cfg["rules"], fixed=fixed,
        distance_kind=cfg["distance_kind"], z_scored=cfg["z_scored_distance"],
    )


def generate_for_base(cfg, data, fitted, ranking_names, base_row, b, labels=None):
    """Every requested CE set for one base row, as (label, CESet) pairs."""
    problem = make_problem(cfg, data, data.features[base_row])
    seed = cfg["seed"]
    S = cfg["S"]
    cob = cfg["cobyla"]
    out = []
    labels = labels or method_labels(cfg)
    for k, name in enumerate(BASE_MODELS):
        lab = f"method1[{name}]"
        if lab in labels:
            out.append((lab, method1_generate(
                problem, fitted[name], S, as_int_seed(seed, b, 1, k), report_models=fitted, name=name,
                maxiter=cob["maxiter"], tol=cob["tol"])))
    if "method2[stacking]" in labels:
        out.append(("method2[stacking]", method2_generate(
            problem, fitted["stacking"], S, as_int_seed(seed, b, 2), report_models=fitted,
            maxiter=cob["maxiter"], tol=cob["tol"])))
    for m in cfg["m_values"]:
        lab = f"method3[m={m}]"
        if lab not in labels:
            continue
        chosen = {n: fitted[n] for n in ranking_names[:m]}
        out.append((lab, method3_generate(
            problem, chosen, S, moo_config(cfg, as_int_seed(seed, b, 3, m)), report_models=fitted,
            require_improvement=cfg["require_improvement"], snap_binary=cfg["snap_binary"])))
    return out


def _base_task(args):
    return generate_for_base(*args)


def _generate_all(cfg, data, fitted, ranking_names, bases, labels=None):
    tasks = [(cfg, data, fitted, ranking_names, int(row), b, labels) for b, row in enumerate(bases)]
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            return list(pool.map(_base_task, tasks))
    return [_base_task(t) for t in tasks]


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# full runs


def _run_common(cfg, out_dir):
    run = Run(cfg, out_dir)
    with run.stage("data"):
        data = load_dataset(cfg)
        export_csv(data, run.path("data.csv"))
    with run.stage("bench_models"):
        report = evaluate_models(zoo_for(cfg), data, split_plan(cfg))
        report.to_csv(run.path("accuracy.csv"))
    with run.stage("fit"):
        train, fitted, bases = prepare(cfg, data)
        export_csv(train, run.path("train.csv"))
        _write_rows(run.path("bases.csv"), ["base", "row"], [[b, int(r)] for b, r in enumerate(bases)])
        top = select_top_m(report, max(cfg["m_values"]), candidates=BASE_MODELS)
        ranking_names = [report.names[i] for i in top]
        _write_rows(run.path("selection.csv"), ["rank", "model"], [[i + 1, n] for i, n in enumerate(ranking_names)])
    return run, data, report, train, fitted, bases, ranking_names


def _ces_and_metrics(run, cfg, data, train, fitted, bases, ranking_names, truth, labels=None):
    with run.stage("generate_ce"):
        per_base = _generate_all(cfg, data, fitted, ranking_names, bases, labels)
        for b, sets in enumerate(per_base):
            for lab, ces in sets:
                ces.save_json(run.path(f"ces/base{b:03d}_{_slug(lab)}.json"))
    with run.stage("metrics"):
        reports = [
            evaluate_ces(ces, train, truth=truth, label=lab, tir_mode=cfg["tir_mode"])
            for sets in per_base for lab, ces in sets
        ]
        agg = aggregate(reports)
        agg.to_csv(run.path("aggregate.csv"))
        run.path("aggregate.md").write_text(agg.to_markdown(), encoding="utf-8")
    return per_base, agg


def _slug(label: str) -> str:
    return label.replace("[", "_").replace("]", "").replace("=", "")


def run_gen_data(cfg: dict, out_dir=None) -> dict:
    """Write the configured dataset and its descriptive statistics."""
    run = Run(cfg, out_dir)
    with run.stage("data"):
        data = load_dataset(cfg)
        export_csv(data, run.path("data.csv"))
        write_describe_csv(describe(data), run.path("describe.csv"))
    return run.write_manifest()


def run_bench_models(cfg: dict, out_dir=None) -> dict:
    """Accuracy of the model zoo over the configured repeated splits."""
    run = Run(cfg, out_dir)
    with run.stage("data"):
        data = load_dataset(cfg)
    with run.stage("bench_models"):
        evaluate_models(zoo_for(cfg), data, split_plan(cfg)).to_csv(run.path("accuracy.csv"))
    return run.write_manifest()


def run_generate_ce(cfg: dict, out_dir=None, labels=None) -> dict:
    """CE sets and metrics for the sampled bases, optionally for a subset of method labels."""
    if labels:
        unknown = sorted(set(labels) - set(method_labels(cfg)))
        if unknown:
            raise ValueError(f"unknown method labels {unknown}; choose from {method_labels(cfg)}")
    run, data, report, train, fitted, bases, ranking = _run_common(cfg, out_dir)
    truth = truth_for(cfg) if cfg["tir"] else None
    _ces_and_metrics(run, cfg, data, train, fitted, bases, ranking, truth, labels)
    return run.write_manifest()


def run_experiment1(cfg: dict, out_dir=None) -> dict:
    """Simulation study: accuracy table, Methods 1-3 on sampled bases, metrics with TIR."""
    if cfg["experiment"] not in ("exp1_case1", "exp1_case2"):
        raise ValueError("run_experiment1 needs experiment exp1_case1 or exp1_case2")
    run, data, report, train, fitted, bases, ranking = _run_common(cfg, out_dir)
    truth = truth_for(cfg) if cfg["tir"] else None
    _ces_and_metrics(run, cfg, data, train, fitted, bases, ranking, truth)
    return run.write_manifest()


def run_experiment2(cfg: dict, out_dir=None) -> dict:
    """Survey-style study: direction rules, top-3 selection, figure and table data."""
    if cfg["experiment"] != "exp2":
        raise ValueError("run_experiment2 needs experiment exp2")
    if cfg["tir"]:
        raise UnsupportedContextError("TIR needs a known true function; it is unavailable for exp2 data")
    run, data, report, train, fitted, bases, ranking = _run_common(cfg, out_dir)
    per_base, _ = _ces_and_metrics(run, cfg, data, train, fitted, bases, ranking, None)
    with run.stage("figure_data"):
        m = max(cfg["m_values"])
        lab = f"method3[m={m}]"
        sets = [dict(s)[lab] for s in per_base]
        write_figure_data(run, sets, data.feature_names)
    return run.write_manifest()


def write_figure_data(run: Run, sets, feature_names):
    means = np.vstack([c.explanations.mean(axis=0) for c in sets])
    deltas = np.vstack([c.deltas().mean(axis=0) for c in sets])
    ddof = 1 if len(sets) > 1 else 0
    for rel, M in (("ce_average_with_base.csv", means), ("ce_average_delta.csv", deltas)):
        _write_rows(
            run.path(rel), ["feature", "mean", "std"],
            [[n, repr(float(a)), repr(float(s))] for n, a, s in zip(feature_names, M.mean(axis=0), M.std(axis=0, ddof=ddof))],
        )
    case = sets[0]
    used = [case.model_names[j] for j in case.used]
    base_pred = case.info["base_predictions"]
    rows = [[repr(float(case.predictions[s, j])) for j in case.used] + [0] for s in range(case.S)]
    rows.append([repr(float(base_pred[j])) for j in case.used] + [1])
    _write_rows(run.path("pareto_front.csv"), [f"obj_{n}" for n in used] + ["is_base"], rows)
    reps = [
        ("base", case.problem.base),
        ("medoid", select_medoid(case)),
        ("closest_to_centroid", select_closest_to_centroid(case)),
        ("average", case.explanations.mean(axis=0)),
    ]
    _write_rows(
        run.path("representatives.csv"), ["kind", *feature_names],
        [[k, *[repr(float(v)) for v in x]] for k, x in reps],
    )
