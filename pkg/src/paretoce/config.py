"""Experiment configuration: one JSON document, every default materialised."""

from __future__ import annotations

import copy
import json
from pathlib import Path

EXPERIMENTS = ("exp1_case1", "exp1_case2", "exp2")
PRESETS = ("desk", "paper")


class ConfigError(ValueError):
    pass


def default_config(experiment: str = "exp1_case1", preset: str = "desk") -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    if preset not in PRESETS:
        raise ConfigError(f"preset must be one of {PRESETS}, got {preset!r}")
    exp2 = experiment == "exp2"
    desk = preset == "desk"
    return {
        "experiment": experiment,
        "preset": preset,
        "seed": 0,
        "out_dir": f"runs/{experiment}",
        "data": {
            "source": "generator",  # or "csv"
            "n_samples": 500 if exp2 else 1000,
            "csv_path": None,
            "target_column": None,
        },
        "split": {"n_repeats": 20, "train_fraction": 0.7},
        "models": {"n_trees": 100, "n_rounds": 100, "hidden": 100, "mlp_epochs": 300, "mlp_batch_size": 32,
                   "mlp_learning_rate": 0.001, "mlp_patience": 20, "mlp_validation_fraction": 0.1},
        "n_bases": 10 if desk else 50,
        "S": 20,
        "C": 5.0 if exp2 else 3.0,
        "lambda": 2.0,
        "m_values": [3] if exp2 else [2, 3, 4],
        "distance_kind": "euclidean",
        "z_scored_distance": False,
        "rules": "binary_direction" if exp2 else None,
        "fixed_features": ["sex", "age"] if exp2 else [],
        "require_improvement": True,
        "snap_binary": False,
        "tir": not exp2,
        "tir_mode": "truth_vs_base",
        "moo": {
            "population": 60 if desk else 100,
            "generations": 60 if desk else 100,
            "crossover_prob": 0.9,
            "sbx_eta": 15.0,
            "mutation_prob": None,
            "mutation_eta": 20.0,
        },
        "cobyla": {"maxiter": 500, "tol": 1e-6},
        "workers": 1,
    }


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}{k}"
        if k not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v, key + ".")
        elif isinstance(out[k], dict):
            raise ConfigError(f"config key {key!r} must be an object")
        else:
            out[k] = v
    return out


def build_config(doc: dict | None = None, overrides: dict | None = None) -> dict:
    """Materialise a full config from a partial document plus flat overrides.

    ``overrides`` maps dotted keys (``"moo.population"``) to values.
    """
    doc = dict(doc or {})
    ov = dict(overrides or {})
    experiment = ov.get("experiment", doc.get("experiment", "exp1_case1"))
    preset = ov.get("preset", doc.get("preset", "desk"))
    cfg = _merge(default_config(experiment, preset), doc)
    for dotted, value in ov.items():
        nested: dict = {}
        cur = nested
        parts = dotted.split(".")
        for p in parts[:-1]:
            cur = cur.setdefault(p, {})
        cur[parts[-1]] = value
        cfg = _merge(cfg, nested)
    validate(cfg)
    return cfg


def load_config(path, overrides: dict | None = None) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return build_config(doc, overrides)


def validate(cfg: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg["experiment"] in EXPERIMENTS, f"experiment must be one of {EXPERIMENTS}")
    need(isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2**64, "seed must be an unsigned 64-bit integer")
    need(isinstance(cfg["n_bases"], int) and cfg["n_bases"] >= 1, "n_bases must be >= 1")
    need(isinstance(cfg["S"], int) and cfg["S"] >= 1, "S must be >= 1")
    need(cfg["C"] > 0, "C must be > 0")
    need(cfg["lambda"] >= 0, "lambda must be >= 0")
    need(cfg["distance_kind"] in ("euclidean", "squared_euclidean"), "unknown distance_kind")
    need(isinstance(cfg["m_values"], list) and cfg["m_values"], "m_values must be a non-empty list")
    need(all(isinstance(m, int) and 2 <= m <= 4 for m in cfg["m_values"]), "each m must lie in [2, 4]")
    need(cfg["data"]["source"] in ("generator", "csv"), "data.source must be 'generator' or 'csv'")
    if cfg["data"]["source"] == "csv":
        need(cfg["data"]["csv_path"] and cfg["data"]["target_column"], "csv source needs csv_path and target_column")
        need(cfg["experiment"] == "exp2", "csv data is only supported for exp2")
    need(cfg["split"]["n_repeats"] >= 1, "split.n_repeats must be >= 1")
    need(0 < cfg["split"]["train_fraction"] < 1, "split.train_fraction must lie in (0, 1)")
    need(cfg["moo"]["population"] >= 4 and cfg["moo"]["population"] % 2 == 0, "moo.population must be even and >= 4")
    need(cfg["moo"]["generations"] >= 1, "moo.generations must be >= 1")
    need(isinstance(cfg["workers"], int) and cfg["workers"] >= 1, "workers must be >= 1")
    need(cfg["tir_mode"] in ("truth_vs_base", "prediction_vs_truth"), "unknown tir_mode")
