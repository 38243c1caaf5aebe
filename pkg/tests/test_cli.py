import json
import subprocess
import sys

import numpy as np
import pytest

from pubrules import cli
from pubrules import gaussian_kernel as gk


def run(argv, capsys):
    code = cli.dispatch(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestCommands:
    def test_rule_publish_everything(self, capsys):
        code, out, _ = run(["rule", "--eta2", "1", "--s2", "0", "--cost", "1", "--ca", "0.5"], capsys)
        doc = json.loads(out)
        assert code == 0
        assert doc["results"]["cutoff"] == 0.0
        assert doc["params"]["eta2"] == 1.0 and doc["params"]["command"] == "rule"

    def test_optimize(self, capsys):
        code, out, _ = run(["optimize", "--eta2", "1.94", "--s2", "1", "--cm", "0.98",
                            "--cutoff-target", "1.96"], capsys)
        res = json.loads(out)["results"]
        assert code == 0
        assert res["x_star"] == pytest.approx(2.64, abs=0.03)
        assert res["gamma_star"] == pytest.approx(1.96, abs=1e-12)

    def test_compare_with_sweep(self, capsys):
        code, out, _ = run(["compare", "--eta2", "1", "--ca", "1", "--s2-e", "0", "--cost-e", "0.7",
                            "--s2-o", "1", "--sweep", "0.5", "1.5", "0.5"], capsys)
        res = json.loads(out)["results"]
        assert code == 0
        assert res["comparison"]["preference"] == "planner_prefers_e"
        assert res["indifference"]["s2_o"] == [0.5, 1.0, 1.5]

    def test_simulate(self, capsys):
        code, out, _ = run(["simulate", "--eta2", "1.94", "--cm", "0.98", "--cutoff-target", "1.96",
                            "--rule", "naive", "--n", "200000", "--seed", "3"], capsys)
        res = json.loads(out)["results"]
        assert code == 0
        assert res["monte_carlo"]["pct_published"] == pytest.approx(0.58, abs=0.01)
        assert res["rng"] == "Philox4x64-10"

    def test_table2_small(self, capsys):
        code, out, _ = run(["table2", "--calibration", "one_pct", "--n", "100000", "--seed", "2"], capsys)
        doc = json.loads(out)
        assert code == 0
        tab = doc["results"]["tables"][0]
        assert tab["calibration"] == "one_pct"
        assert [r["row"] for r in tab["rows"]] == [
            "truthful_threshold", "best_respond_threshold", "best_respond_optimal"]
        assert doc["params"]["seed"] == 2 and doc["params"]["n"] == 100000

    @pytest.mark.parametrize("fig", ["fig2", "fig4"])
    def test_figure_data_deterministic_series(self, fig, capsys):
        code, out, _ = run(["figure-data", fig], capsys)
        assert code == 0
        res = json.loads(out)["results"]
        if fig == "fig4":
            assert len(res["cost_e"]) == 61 and res["cost_e"][-1] == 0.6
            assert 0.25 <= res["crossover_cost"] <= 0.35
        else:
            assert [c["ca"] for c in res["curves"]] == [0.5, 1.0]

    def test_figure_data_histograms(self, capsys):
        code, out, _ = run(["figure-data", "fig3", "--n", "300000", "--seed", "1"], capsys)
        res = json.loads(out)["results"]
        assert code == 0
        atoms = {p["regime"]: p["atoms"] for p in res["panels"]}
        assert atoms["truthful"] == []
        assert atoms["optimal_rule"][0]["mass"] < atoms["naive_cutoff"][0]["mass"]

    def test_calibrate(self, tmp_path, capsys):
        t = np.linspace(0.01, 5.0, 5000)
        f = tmp_path / "p.csv"
        f.write_text("p_value\n" + "\n".join(f"{p:.17g}" for p in 2 * gk.sf(t)) + "\nbad\n")
        code, out, _ = run(["calibrate", "--input", str(f), "--raw-share", "0.18"], capsys)
        rep = json.loads(out)["results"]
        assert code == 0
        assert rep["n_rejected"] == 1 and rep["n_used"] == 5000
        assert rep["adjusted_b"] == pytest.approx(0.18 * 0.64 / 0.73, rel=1e-11)

    def test_csv_output(self, capsys):
        code, out, _ = run(["rule", "--eta2", "1", "--s2", "0", "--ca", "1", "--format", "csv"], capsys)
        lines = out.splitlines()
        assert code == 0
        assert lines[0].startswith("# params ") and lines[1] == "key,value"
        assert "cutoff,1.0" in lines

    def test_out_file(self, tmp_path, capsys):
        path = tmp_path / "rule.json"
        code, out, _ = run(["rule", "--eta2", "1", "--s2", "0", "--ca", "1", "--out", str(path)], capsys)
        assert code == 0 and out == ""
        assert json.loads(path.read_text())["results"]["cutoff"] == 1.0


class TestFormatting:
    def test_twelve_significant_digits(self):
        assert cli._clean(1 / 3) == 0.333333333333
        assert cli._clean(float("nan")) is None
        assert cli._clean(np.float64(2.0)) == 2.0

    def test_byte_identical_reruns(self, tmp_path):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for p in paths:
            assert cli.dispatch(["table2", "--n", "50000", "--seed", "9", "--out", str(p)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestErrors:
    @pytest.mark.parametrize("argv", [
        ["rule", "--eta2", "-1", "--s2", "0", "--ca", "1"],
        ["rule", "--eta2", "1", "--s2", "0", "--ca", "1", "--cost", "2"],
        ["rule", "--eta2", "nan", "--s2", "0", "--ca", "1"],
        ["optimize", "--eta2", "1", "--cm", "1"],
        ["table2", "--n", "0"],
        ["frobnicate"],
        ["rule", "--bogus"],
        ["compare", "--eta2", "1", "--ca", "1", "--s2-e", "0"],
        ["simulate", "--eta2", "1", "--cm", "1", "--ca", "1", "--rule", "threshold"],
        ["optimize", "--eta2", "1", "--cm", "1", "--ca", "1", "--c0", "1"],
    ])
    def test_validation_exit_code(self, argv, capsys):
        code, out, err = run(argv, capsys)
        assert code == 2 and out == ""
        assert len(err.strip().splitlines()) == 1
        assert json.loads(err)["error"] in ("validation", "io")

    def test_missing_file(self, capsys):
        code, _, err = run(["calibrate", "--input", "/nonexistent/p.csv"], capsys)
        assert code == 2 and json.loads(err)["error"] == "io"

    def test_numerical_failure(self, monkeypatch, capsys):
        from pubrules._errors import NumericalError

        def boom(_env, **_kw):
            raise NumericalError("quadrature did not converge")

        monkeypatch.setattr(cli.mr, "optimize_rule", boom)
        code, _, err = run(["optimize", "--eta2", "1", "--cm", "1", "--ca", "1"], capsys)
        assert code == 3 and json.loads(err)["error"] == "numerical"

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "pubrules", "rule", "--eta2", "0"],
                              capture_output=True, text=True)
        assert proc.returncode == 2
        assert proc.stdout == ""
