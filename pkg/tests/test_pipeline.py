"""Small end-to-end runs through the CLI and the run directory contracts."""

import csv
import json
import shutil
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from paretoce.audit import audit_run
from paretoce.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from paretoce.config import ConfigError, build_config, default_config, load_config
from paretoce.experiments import run_experiment2
from paretoce.metrics import UnsupportedContextError
from paretoce.plots import PlotInputError, bar_chart, emit_plots, front_scatter
from paretoce.recourse import CESet

TINY = [
    "--set", "data.n_samples=120", "--set", "n_bases=2", "--set", "S=4",
    "--set", "split.n_repeats=2", "--set", "models.n_trees=5", "--set", "models.n_rounds=5",
    "--set", "models.mlp_epochs=5", "--set", "moo.population=12", "--set", "moo.generations=5",
]


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def exp1_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp1")
    assert main(["exp1", "--experiment", "exp1_case2", "--out-dir", str(out), "--seed", "3", *TINY]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def exp2_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp2")
    assert main(["exp2", "--out-dir", str(out), *TINY]) == EXIT_OK
    return out


class TestConfig:
    def test_defaults_materialized(self):
        cfg = default_config("exp1_case1", "paper")
        assert (cfg["n_bases"], cfg["S"], cfg["C"], cfg["lambda"]) == (50, 20, 3.0, 2.0)
        assert cfg["moo"]["population"] == 100
        e2 = default_config("exp2")
        assert (e2["C"], e2["m_values"], e2["tir"]) == (5.0, [3], False)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            build_config({"bogus": 1})
        with pytest.raises(ConfigError):
            build_config(None, {"moo.bogus": 1})

    @pytest.mark.parametrize("over", [{"n_bases": 0}, {"S": 0}, {"C": 0}, {"m_values": [5]},
                                      {"moo.population": 7}, {"split.train_fraction": 1.0}])
    def test_invalid_values(self, over):
        with pytest.raises(ConfigError):
            build_config(None, over)

    def test_load(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"experiment": "exp2", "S": 7}))
        cfg = load_config(p, {"seed": 4})
        assert (cfg["experiment"], cfg["S"], cfg["seed"], cfg["C"]) == ("exp2", 7, 4, 5.0)
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(p)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")


class TestCLI:
    def test_config_error_exit_code(self, tmp_path):
        assert main(["exp1", "--set", "bogus=1", "--out-dir", str(tmp_path)]) == EXIT_CONFIG
        assert main(["exp1", "--preset", "huge"]) == EXIT_CONFIG
        assert main(["exp1", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG
        assert main(["exp2", "--set", "tir=true"]) == EXIT_CONFIG

    def test_runtime_error_exit_code(self, tmp_path):
        assert main(["plot", str(tmp_path)]) == EXIT_RUNTIME
        assert main(["audit", str(tmp_path)]) == EXIT_RUNTIME

    def test_gen_data(self, tmp_path):
        assert main(["gen-data", "--experiment", "exp2", "--out-dir", str(tmp_path), "--set", "data.n_samples=50"]) == 0
        rows = _csv(tmp_path / "data.csv")
        assert len(rows) == 51 and len(rows[0]) == 22
        assert len(_csv(tmp_path / "describe.csv")) == 22

    def test_bench_models(self, tmp_path):
        assert main(["bench-models", "--out-dir", str(tmp_path), *TINY]) == 0
        rows = _csv(tmp_path / "accuracy.csv")
        assert [r[0] for r in rows[1:]] == ["linear", "random_forest", "gbt", "mlp", "stacking"]

    def test_gen_ce_subset(self, tmp_path):
        assert main(["gen-ce", "--out-dir", str(tmp_path), "--method", "method1[linear]", *TINY]) == 0
        assert sorted(p.name for p in (tmp_path / "ces").iterdir()) == [
            "base000_method1_linear.json", "base001_method1_linear.json"]
        assert audit_run(tmp_path).ok
        assert main(["gen-ce", "--out-dir", str(tmp_path), "--method", "method9", *TINY]) == EXIT_RUNTIME


class TestExperiment1:
    def test_file_counting_contract(self, exp1_dir):
        manifest = json.loads((exp1_dir / "manifest.json").read_text())
        files = [f["path"] for f in manifest["files"]]
        ces = [f for f in files if f.startswith("ces/")]
        assert len(ces) == 2 * (4 + 1 + 3)
        assert files.count("aggregate.csv") == 1
        assert manifest["status"] == "complete" and manifest["version"]
        assert set(manifest["timings_seconds"]) >= {"data", "bench_models", "generate_ce", "metrics"}

    def test_config_echo_recreates_run(self, exp1_dir, tmp_path):
        cfg = json.loads((exp1_dir / "manifest.json").read_text())["config"]
        p = tmp_path / "echo.json"
        p.write_text(json.dumps(dict(cfg, out_dir=str(tmp_path / "again"))))
        assert main(["exp1", "--config", str(p)]) == 0
        for name in ("aggregate.csv", "accuracy.csv", "bases.csv", "data.csv"):
            assert (tmp_path / "again" / name).read_bytes() == (exp1_dir / name).read_bytes()

    def test_aggregate_rows_and_tir(self, exp1_dir):
        rows = {r[0]: r for r in _csv(exp1_dir / "aggregate.csv")[1:]}
        assert list(rows) == ["method1[linear]", "method1[random_forest]", "method1[gbt]", "method1[mlp]",
                              "method2[stacking]", "method3[m=2]", "method3[m=3]", "method3[m=4]"]
        head = _csv(exp1_dir / "aggregate.csv")[0]
        tir = head.index("tir")
        assert all(0 <= float(r[tir]) <= 1 for r in rows.values())

    def test_audit_passes_and_detects_tampering(self, exp1_dir, tmp_path):
        res = audit_run(exp1_dir)
        assert res.ok, res.problems
        assert res.checked_cells > 0
        bad = tmp_path / "bad"
        shutil.copytree(exp1_dir, bad)
        text = (bad / "aggregate.csv").read_text().splitlines()
        cells = text[1].split(",")
        cells[7] = repr(float(cells[7]) + 1.0)  # ave_val
        text[1] = ",".join(cells)
        (bad / "aggregate.csv").write_text("\n".join(text) + "\n")
        res = audit_run(bad)
        assert not res.ok
        assert any("checksum" in p for p in res.problems) and any("ave_val" in p for p in res.problems)

    def test_ces_files_feasible(self, exp1_dir):
        for path in (exp1_dir / "ces").glob("*.json"):
            ces = CESet.load_json(path)
            assert np.all(ces.problem.dist(ces.explanations) <= ces.problem.C + 1e-6)


class TestExperiment2:
    def test_tir_rejected(self):
        cfg = build_config({"experiment": "exp2", "tir": True})
        with pytest.raises(UnsupportedContextError):
            run_experiment2(cfg)

    def test_figure_data_formats(self, exp2_dir):
        for name in ("ce_average_with_base.csv", "ce_average_delta.csv"):
            rows = _csv(exp2_dir / name)
            assert rows[0] == ["feature", "mean", "std"] and len(rows) == 22
        front = _csv(exp2_dir / "pareto_front.csv")
        assert len(front[0]) == 4 and front[0][-1] == "is_base"
        assert sum(r[-1] == "1" for r in front[1:]) == 1
        sel = [r[1] for r in _csv(exp2_dir / "selection.csv")[1:]]
        assert len(sel) == 3

    def test_representatives_are_members_and_feasible(self, exp2_dir):
        rows = _csv(exp2_dir / "representatives.csv")
        ces = CESet.load_json(exp2_dir / "ces" / "base000_method3_m3.json")
        reps = {r[0]: np.array([float(v) for v in r[1:]]) for r in rows[1:]}
        for kind in ("medoid", "closest_to_centroid"):
            assert any(np.array_equal(reps[kind], x) for x in ces.explanations)
            assert ces.problem.dist(reps[kind])[0] <= ces.problem.C + 1e-9
        np.testing.assert_array_equal(reps["base"], ces.problem.base)

    def test_fixed_features_unchanged(self, exp2_dir):
        for path in (exp2_dir / "ces").glob("*.json"):
            ces = CESet.load_json(path)
            assert np.all(ces.explanations[:, :2] == ces.problem.base[:2])

    def test_audit(self, exp2_dir):
        assert audit_run(exp2_dir).ok


class TestPlots:
    def test_emit(self, exp2_dir, tmp_path):
        paths = emit_plots(exp2_dir, tmp_path)
        assert sorted(p.name for p in paths) == ["ce_average_delta.svg", "ce_average_with_base.svg", "pareto_front.svg"]
        svg = (tmp_path / "ce_average_delta.svg").read_text()
        assert sum(f'id="bar_{i}"' in svg for i in range(21)) == 21
        assert sum(f'id="whisker_{i}"' in svg for i in range(21)) == 21
        again = emit_plots(exp2_dir, tmp_path / "b")
        assert all(a.read_bytes() == b.read_bytes() for a, b in zip(paths, again))

    def test_bar_count(self, tmp_path):
        src = tmp_path / "bars.csv"
        src.write_text("feature,mean,std\n" + "".join(f"f{i},{i},{0.5}\n" for i in range(21)))
        svg = bar_chart(src, tmp_path / "b.svg").read_text()
        assert svg.count('id="bar_') == 21 and svg.count('id="whisker_') == 21

    def test_scatter_panels(self, tmp_path):
        rng = np.random.default_rng(0)
        src = tmp_path / "front.csv"
        lines = ["obj_a,obj_b,obj_c,is_base"] + [",".join(f"{v}" for v in rng.normal(size=3)) + ",0" for _ in range(20)]
        lines.append("0,0,0,1")
        src.write_text("\n".join(lines) + "\n")
        svg = front_scatter(src, tmp_path / "f.svg").read_text()
        root = ET.fromstring(svg)
        groups = {g.get("id"): g for g in root.iter("{http://www.w3.org/2000/svg}g")}

        def marks(gid):
            return sum(1 for _ in groups[gid].iter("{http://www.w3.org/2000/svg}use"))

        for p in range(3):
            assert marks(f"ce_{p}") == 20 and marks(f"base_{p}") == 1
        assert "ce_3" not in groups

    def test_missing_and_empty(self, tmp_path, exp2_dir):
        with pytest.raises(PlotInputError, match="ce_average_with_base.csv"):
            emit_plots(tmp_path)
        d = tmp_path / "run"
        shutil.copytree(exp2_dir, d)
        (d / "pareto_front.csv").write_text("obj_a,obj_b,is_base\n1,1,1\n")
        for svg in d.glob("*.svg"):
            svg.unlink()
        with pytest.raises(PlotInputError, match="no CE rows"):
            emit_plots(d)
        assert not list(d.glob("*.svg"))
