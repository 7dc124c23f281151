"""Command-line runner. Exit codes: 0 success, 2 configuration error, 3 runtime failure."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import EXPERIMENTS, PRESETS, ConfigError, build_config, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("paretoce")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _config_from(args) -> dict:
    ov = _parse_set(args.set)
    if args.experiment:
        ov["experiment"] = args.experiment
    if args.preset:
        ov["preset"] = args.preset
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.out_dir:
        ov["out_dir"] = args.out_dir
    if args.workers is not None:
        ov["workers"] = args.workers
    if args.config:
        return load_config(args.config, ov)
    return build_config(None, ov)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="paretoce", description="Pareto-improving counterfactual explanation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_parser(name, help_, experiment=True):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config document")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir")
        sp.add_argument("--preset", choices=PRESETS)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (dotted path, JSON value); repeatable")
        if experiment:
            sp.add_argument("--experiment", choices=EXPERIMENTS)
        else:
            sp.set_defaults(experiment=None)
        return sp

    run_parser("gen-data", "write the dataset and its descriptive statistics")
    run_parser("bench-models", "accuracy of the model zoo over repeated splits")
    sp = run_parser("gen-ce", "CE sets and metrics for sampled base rows")
    sp.add_argument("--method", action="append", help="restrict to a method label, e.g. 'method3[m=3]'")
    run_parser("exp1", "simulation study (use --experiment exp1_case2 for case 2)")
    run_parser("exp2", "survey-style study with figure data", experiment=False)

    sp = sub.add_parser("plot", help="render SVG figures from a run directory")
    sp.add_argument("run_dir")
    sp.add_argument("--out-dir")
    sp = sub.add_parser("audit", help="verify checksums and recompute aggregate tables")
    sp.add_argument("run_dir")
    return p


def _dispatch(args) -> int:
    from . import experiments as ex

    if args.command == "plot":
        from .plots import emit_plots

        for path in emit_plots(args.run_dir, args.out_dir):
            print(path)
        return EXIT_OK
    if args.command == "audit":
        from .audit import audit_run

        res = audit_run(args.run_dir)
        for msg in res.problems:
            print(f"FAIL {msg}")
        print(f"audit: {res.checked_files} files, {res.checked_cells} table cells, "
              f"{len(res.problems)} problems")
        return EXIT_OK if res.ok else EXIT_RUNTIME

    if args.command == "exp2":
        args.experiment = "exp2"
    cfg = _config_from(args)
    if args.command == "exp1" and cfg["experiment"] == "exp2":
        raise ConfigError("exp1 needs experiment exp1_case1 or exp1_case2")
    if args.command == "exp2" and cfg["tir"]:
        raise ConfigError("tir cannot be enabled for exp2: no true function is known")
    runner = {
        "gen-data": ex.run_gen_data,
        "bench-models": ex.run_bench_models,
        "exp1": ex.run_experiment1,
        "exp2": ex.run_experiment2,
    }.get(args.command)
    if args.command == "gen-ce":
        manifest = ex.run_generate_ce(cfg, labels=args.method)
    else:
        manifest = runner(cfg)
    print(f"{args.command}: {len(manifest['files'])} files written to {cfg['out_dir']}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # every other failure is a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
