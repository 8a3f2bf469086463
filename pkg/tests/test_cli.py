"""End-to-end CLI tests: the whole artifact pipeline in a temp dir.

Exit codes: 0 ok, 2 validation, 3 numerical, 4 resource limit.
"""
import json

import numpy as np
import pytest

from nortagrid import cli
from nortagrid.errors import NumericalError
from nortagrid.grid import load_grid, load_scenarios
from nortagrid.norta import sample
from nortagrid.twostage import STAT_ROWS

SPEC = {
    "n_substations": 4,
    "n_flooded": 3,
    "buses_per_substation": 1,
    "topology": "ring",
    "n_scenarios": 8,
    "max_height": 3,
    "budget": 6.0,
    "seed": 5,
}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One full pipeline run; tests below only read the artifacts."""
    d = tmp_path_factory.mktemp("pipeline")
    (d / "spec.json").write_text(json.dumps(SPEC))
    steps = [
        ("make-instance", "--spec", d / "spec.json",
         "--out", d / "grid.json", d / "scen.csv", "--quiet"),
        ("fit", d / "scen.csv", "--out", d / "model.json", "--quiet"),
        ("generate", d / "model.json", "--count", 30,
         "--out", d / "synth.csv", "--quiet"),
        ("validate", d / "scen.csv", d / "synth.csv",
         "--out", d / "val.json", "--quiet"),
        ("solve", d / "grid.json", d / "scen.csv", "--budgets", "0,4",
         "--out", d / "plans.json", "--quiet"),
        ("evaluate", d / "grid.json", d / "plans.json", d / "synth.csv",
         "--out", d / "report.json", d / "report.csv", "--quiet"),
        ("sweep", d / "grid.json", d / "scen.csv", d / "synth.csv",
         "--budgets", "0,4", "--out", d / "sweep.json", "--quiet"),
    ]
    for step in steps:
        assert run(*step) == 0, step[0]
    return d


class TestPipelineArtifacts:
    def test_model_file_schema(self, workdir):
        data = json.loads((workdir / "model.json").read_text())
        assert data["format"] == "nortagrid-model"
        assert len(data["marginals"]) == 3
        for key in ("sigma_x", "sigma_z", "y", "chol"):
            assert np.asarray(data[key]).shape == (3, 3)
        assert data["columns"] == [0, 1, 2]
        assert len(data["fit_report"]["pairs"]) == 3

    def test_manifest_embedded_in_artifacts(self, workdir):
        data = json.loads((workdir / "model.json").read_text())
        man = data["manifest"]
        assert man["command"] == "fit"
        assert len(man["inputs"]) == 1
        assert len(man["inputs"][0]["sha256"]) == 64
        assert set(man["tolerances"]) == {"match_tol", "bisect_max_iter",
                                          "gh_degree", "psd_tol"}

    def test_every_artifact_has_a_sidecar(self, workdir):
        for name in ("grid.json", "scen.csv", "model.json", "synth.csv",
                     "val.json", "plans.json", "report.json", "report.csv",
                     "sweep.json"):
            side = workdir / f"{name}.manifest.json"
            assert side.exists(), name
            meta = json.loads(side.read_text())
            assert meta["artifact"].endswith(name)
            assert "created_utc" in meta and "version" in meta

    def test_synthetic_scenarios_stay_on_training_support(self, workdir):
        train = load_scenarios(workdir / "scen.csv")
        synth = load_scenarios(workdir / "synth.csv")
        assert synth.scenarios.shape == (30, 3)
        assert synth.columns == train.columns
        for j in range(3):
            assert set(synth.scenarios[:, j]) <= set(train.scenarios[:, j])

    def test_generate_matches_library_sampling(self, workdir):
        model = cli.load_model(workdir / "model.json")
        expect = sample(model, 30, 0)  # CLI default seed is 0
        synth = load_scenarios(workdir / "synth.csv")
        assert np.array_equal(synth.scenarios, expect.scenarios)

    def test_validation_report_schema(self, workdir):
        data = json.loads((workdir / "val.json").read_text())
        assert data["format"] == "nortagrid-validation"
        assert len(data["emd"]["per_dimension"]) == 3
        assert len(data["correlation_error"]["pairs"]) == 3
        for summary in (data["emd"]["summary"], data["correlation_error"]["summary"]):
            assert set(summary) == {"mean", "std", "min", "25%", "50%", "75%", "max"}

    def test_plan_file_schema(self, workdir):
        grid = load_grid(workdir / "grid.json")
        data = json.loads((workdir / "plans.json").read_text())
        assert data["format"] == "nortagrid-plan"
        assert data["flooded_ids"] == [0, 1, 2]
        assert [p["budget"] for p in data["plans"]] == [0.0, 4.0]
        for p in data["plans"]:
            assert set(p["heights"]) == {"0", "1", "2"}
            assert p["cost"] <= p["budget"] + 1e-9
        so = [p["so_estimate"] for p in data["plans"]]
        assert so[0] >= so[1] - 1e-9

    def test_load_plans_roundtrip(self, workdir):
        grid = load_grid(workdir / "grid.json")
        entries = cli.load_plans(workdir / "plans.json", grid)
        raw = json.loads((workdir / "plans.json").read_text())["plans"]
        assert len(entries) == 2
        for (budget, plan, so), entry in zip(entries, raw):
            assert budget == entry["budget"]
            assert so == entry["so_estimate"]
            assert [int(v) for v in plan.heights] == [
                entry["heights"][str(s)] for s in grid.flooded_ids]

    def test_report_csv_layout(self, workdir):
        lines = (workdir / "report.csv").read_text().splitlines()
        assert lines[0] == "statistic,0.0,4.0"
        assert [ln.split(",")[0] for ln in lines[1:]] == list(STAT_ROWS)
        assert lines[1].startswith("SO estimate,")

    def test_report_json_table(self, workdir):
        data = json.loads((workdir / "report.json").read_text())
        assert data["format"] == "nortagrid-report"
        assert data["budgets"] == [0.0, 4.0]
        assert data["quantile_method"] == "linear"
        assert data["std_denominator"] == "M-1"
        assert list(data["table"]) == list(STAT_ROWS)
        assert data["m"] == 30
        plans = json.loads((workdir / "plans.json").read_text())["plans"]
        assert data["table"]["SO estimate"] == [p["so_estimate"] for p in plans]

    def test_sweep_agrees_with_solve_then_evaluate(self, workdir):
        sweep = json.loads((workdir / "sweep.json").read_text())
        report = json.loads((workdir / "report.json").read_text())
        assert sweep["table"]["SO estimate"] == report["table"]["SO estimate"]
        assert sweep["table"]["mean"] == pytest.approx(report["table"]["mean"])

    def test_validate_identity_is_all_zero(self, workdir):
        out = workdir / "self_val.json"
        assert run("validate", workdir / "scen.csv", workdir / "scen.csv",
                   "--out", out, "--quiet") == 0
        data = json.loads(out.read_text())
        assert data["emd"]["summary"]["max"] == 0.0
        assert data["correlation_error"]["summary"]["max"] == 0.0

    def test_rerun_artifacts_are_byte_identical(self, workdir, monkeypatch):
        monkeypatch.chdir(workdir)
        assert run("fit", "scen.csv", "--out", "model_b.json", "--quiet") == 0
        assert run("generate", "model_b.json", "--count", 30,
                   "--out", "synth_b.csv", "--quiet") == 0
        # embedded manifests record inputs, not outputs, so bytes match
        first_model = (workdir / "model.json").read_bytes()
        rerun_model = (workdir / "model_b.json").read_bytes()
        assert first_model != rerun_model  # input path differs (abs vs rel)
        assert run("fit", "scen.csv", "--out", "model_c.json", "--quiet") == 0
        assert (workdir / "model_c.json").read_bytes() == rerun_model
        assert (workdir / "synth_b.csv").read_bytes() == (workdir / "synth.csv").read_bytes()


class TestCliErrors:
    def test_missing_input_file(self, tmp_path):
        assert run("fit", tmp_path / "nope.csv", "--out", tmp_path / "m.json") == 2

    def test_single_row_training_set(self, tmp_path):
        p = tmp_path / "one.csv"
        p.write_text("0,1\n2,3\n")  # header + one scenario
        assert run("fit", p, "--out", tmp_path / "m.json") == 2

    def test_generate_count_must_be_positive(self, workdir, tmp_path):
        assert run("generate", workdir / "model.json", "--count", 0,
                   "--out", tmp_path / "s.csv") == 2

    def test_validate_dimension_mismatch(self, workdir, tmp_path):
        p = tmp_path / "narrow.csv"
        p.write_text("0\n1\n2\n")
        assert run("validate", workdir / "scen.csv", p,
                   "--out", tmp_path / "v.json") == 2

    def test_negative_budget(self, workdir, tmp_path):
        assert run("solve", workdir / "grid.json", workdir / "scen.csv",
                   "--budget", -3, "--out", tmp_path / "p.json") == 2

    def test_node_budget_exhaustion(self, workdir, tmp_path, capsys):
        code = run("solve", workdir / "grid.json", workdir / "scen.csv",
                   "--budget", 4, "--node-budget", 1,
                   "--out", tmp_path / "p.json")
        assert code == 4
        assert "greedy" in capsys.readouterr().err

    def test_numerical_error_exit_code(self, workdir, tmp_path, monkeypatch, capsys):
        def boom(*a, **k):
            raise NumericalError("synthetic blow-up")

        monkeypatch.setattr(cli.norta, "fit", boom)
        code = run("fit", workdir / "scen.csv", "--out", tmp_path / "m.json")
        assert code == 3
        assert "synthetic blow-up" in capsys.readouterr().err

    def test_report_extension_checked(self, workdir, tmp_path):
        assert run("evaluate", workdir / "grid.json", workdir / "plans.json",
                   workdir / "synth.csv", "--out", tmp_path / "rep.txt") == 2

    def test_plan_missing_substation_height(self, workdir, tmp_path):
        p = tmp_path / "bad_plans.json"
        p.write_text(json.dumps({"plans": [{"budget": 1.0, "heights": {"0": 1}}]}))
        assert run("evaluate", workdir / "grid.json", p, workdir / "synth.csv",
                   "--out", tmp_path / "rep.json") == 2

    def test_malformed_model_file(self, tmp_path):
        p = tmp_path / "model.json"
        p.write_text(json.dumps({"format": "nortagrid-model", "marginals": [[1.0]]}))
        assert run("generate", p, "--count", 5, "--out", tmp_path / "s.csv") == 2

    def test_bad_instance_spec(self, tmp_path):
        p = tmp_path / "spec.json"
        p.write_text(json.dumps({"n_substations": 0, "n_flooded": 0}))
        assert run("make-instance", "--spec", p,
                   "--out", tmp_path / "g.json", tmp_path / "s.csv") == 2


class TestCliBehaviour:
    def test_quiet_silences_stdout(self, workdir, tmp_path, capsys):
        run("validate", workdir / "scen.csv", workdir / "scen.csv",
            "--out", tmp_path / "v.json", "--quiet")
        assert capsys.readouterr().out == ""

    def test_progress_lines_by_default(self, workdir, tmp_path, capsys):
        run("validate", workdir / "scen.csv", workdir / "scen.csv",
            "--out", tmp_path / "v.json")
        assert "validate:" in capsys.readouterr().out

    def test_make_instance_seed_override(self, workdir, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(SPEC))
        assert run("make-instance", "--spec", spec, "--seed", 99,
                   "--out", tmp_path / "g.json", tmp_path / "s.csv", "--quiet") == 0
        base = load_scenarios(workdir / "scen.csv")
        other = load_scenarios(tmp_path / "s.csv")
        assert not np.array_equal(base.scenarios, other.scenarios)
        meta = json.loads((tmp_path / "g.json.manifest.json").read_text())
        assert meta["seed"] == 99

    def test_generate_seed_changes_output(self, workdir, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("generate", workdir / "model.json", "--count", 25, "--out", a, "--quiet")
        run("generate", workdir / "model.json", "--count", 25, "--seed", 7,
            "--out", b, "--quiet")
        assert not np.array_equal(load_scenarios(a).scenarios,
                                  load_scenarios(b).scenarios)

    def test_solve_greedy_method(self, workdir, tmp_path):
        out = tmp_path / "greedy.json"
        assert run("solve", workdir / "grid.json", workdir / "scen.csv",
                   "--budget", 4, "--method", "greedy", "--out", out,
                   "--quiet") == 0
        data = json.loads(out.read_text())
        assert data["method"] == "greedy"
        exact = json.loads((workdir / "plans.json").read_text())["plans"][1]
        assert data["plans"][0]["so_estimate"] >= exact["so_estimate"] - 1e-9

    def test_solve_defaults_to_grid_budget(self, workdir, tmp_path):
        out = tmp_path / "default_budget.json"
        assert run("solve", workdir / "grid.json", workdir / "scen.csv",
                   "--out", out, "--quiet") == 0
        data = json.loads(out.read_text())
        assert data["plans"][0]["budget"] == SPEC["budget"]

    def test_parser_defaults(self):
        p = cli.build_parser()
        g = p.parse_args(["generate", "m.json", "--out", "s.csv"])
        assert g.count == 800 and g.seed is None and g.threads == 1
        f = p.parse_args(["fit", "s.csv", "--out", "m.json"])
        assert f.degree == 64 and f.match_tol == 1e-4 and f.bisect_max_iter == 200
        s = p.parse_args(["solve", "g.json", "s.csv", "--out", "p.json"])
        assert s.node_budget == 10 ** 6 and s.method == "exact"

    def test_fit_threads_do_not_change_the_artifact(self, workdir, tmp_path, monkeypatch):
        monkeypatch.chdir(workdir)
        assert run("fit", "scen.csv", "--threads", 4,
                   "--out", "model_t.json", "--quiet") == 0
        one = json.loads((workdir / "model_t.json").read_text())
        ref = json.loads((workdir / "model.json").read_text())
        assert one["sigma_z"] == ref["sigma_z"]
        assert one["chol"] == ref["chol"]
