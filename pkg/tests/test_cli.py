import json
import subprocess
import sys
from pathlib import Path

import pytest

from dualcv import cli
from dualcv.errors import ConvergenceError
from dualcv.simulate import survey_profile

GOLDEN = Path(__file__).parent / "golden"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["simulate", "--reps", "1", "--n", "400", "--seed", "5", "--write-data", str(d / "data"), "--out", str(d / "mc.json")]) == 0
    spec = d / "spec.json"
    spec.write_text(json.dumps(survey_profile().spec().to_dict()))
    fit = d / "fit.json"
    base = ["--data", d / "data" / "rep_0000.csv", "--schema", d / "data" / "schema.json"]
    assert cli.main([str(a) for a in ["fit", *base, "--spec", spec, "--out", fit]]) == 0
    return {"dir": d, "base": base, "spec": spec, "fit": fit}


class TestFit:
    def test_biprobit_json(self, files):
        out = json.loads(files["fit"].read_text())
        assert out["model"] == "biprobit" and out["converged"] is True
        assert {"est", "se"} <= set(out["fit"]["athrho"]) and "est" in out["fit"]["rho"]
        lr = out["lr_test_rho"]
        assert lr["df"] == 1 and 0 <= lr["p_value"] <= 1
        assert out["exogeneity"]["variable"] == "y1"
        assert out["univariate"]["eq2"]["spec"]["outcome"] == "y2"
        assert [r["variable"] for r in out["ame"]["eq2"]][0] == "y1"

    def test_text_table_matches_golden_layout(self, files, capsys):
        code, out, _ = run(["fit", *files["base"], "--spec", files["spec"], "--format", "text"], capsys)
        assert code == 0
        assert out == (GOLDEN / "fit_table.txt").read_text()

    def test_probit_csv(self, files, capsys):
        code, out, _ = run(["fit", "--model", "probit", *files["base"], "--spec", files["spec"], "--format", "csv"], capsys)
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "equation,parameter,estimate,se,t"
        assert len(lines) == 1 + 7 + 9

    def test_missing_spec(self, files, capsys):
        code, out, err = run(["fit", *files["base"]], capsys)
        assert code == 1 and out == ""
        assert err.strip() == "error: spec: required"

    def test_bad_input_is_one_line(self, files, capsys):
        bad = files["dir"] / "bad.csv"
        bad.write_text("id,y1\n1,1\n")
        code, _, err = run(["fit", "--data", bad, "--schema", files["base"][3], "--spec", files["spec"]], capsys)
        assert code == 1 and err.count("\n") == 1 and err.startswith("error: ")

    def test_unknown_format(self, files, capsys):
        code, _, err = run(["report", *files["base"], "--format", "xml"], capsys)
        assert code == 1 and err.startswith("error: ")

    def test_non_convergence_still_writes(self, files, capsys, monkeypatch, caplog):
        real = cli.fit_biprobit

        def fake(spec, ds):
            fit = real(spec, ds)
            fit.converged = False
            raise ConvergenceError("bivariate probit did not converge: iteration limit reached", result=fit)

        monkeypatch.setattr(cli, "fit_biprobit", fake)
        code, out, _ = run(["fit", *files["base"], "--spec", files["spec"]], capsys)
        assert code == 2
        assert json.loads(out)["converged"] is False
        assert "did not converge" in caplog.text


class TestOtherCommands:
    def test_welfare_rows(self, files, capsys):
        code, out, _ = run(["welfare", "--fit", files["fit"], *files["base"], "--format", "text"], capsys)
        assert code == 0
        for row in ("Slack agricultural season WTC", "Peak agricultural season WTC", "Average WTC (ETB/Year)"):
            assert row in out
        code, out, _ = run(["welfare", "--fit", files["fit"], *files["base"]], capsys)
        rep = json.loads(out)
        assert rep["shadow_ratio"] == 0.3863 and rep["wage_mode"] == "respondent"

    def test_welfare_simulation_is_seeded(self, files, capsys):
        args = ["welfare", "--fit", files["fit"], *files["base"], "--sim-draws", "40"]
        a = run(args, capsys)[1]
        b = run(args, capsys)[1]
        c = run([*args, "--seed", "1"], capsys)[1]
        assert a == b and a != c

    def test_welfare_needs_fit(self, files, capsys):
        code, _, err = run(["welfare", *files["base"]], capsys)
        assert code == 1 and err.strip() == "error: fit: required"

    def test_diagnose_shares(self, files, capsys):
        code, out, _ = run(["diagnose", *files["base"]], capsys)
        assert code == 0
        shares = json.loads(out)["response_pattern_shares"]
        assert sum(shares.values()) == pytest.approx(1.0, abs=1e-15)

    def test_diagnose_csv(self, files, capsys):
        code, out, _ = run(["diagnose", *files["base"], "--format", "csv"], capsys)
        assert code == 0 and out.startswith("vehicle,response,grouped_by,level")

    def test_report_with_exclusions(self, files, capsys):
        ex = files["dir"] / "ex.jsonl"
        code, out, _ = run(["report", *files["base"], "--filter", "--exclusions", ex], capsys)
        assert code == 0
        rep = json.loads(out)
        assert rep["excluded"] == 0 and ex.exists()
        assert {r["variable"] for r in rep["summary"]} >= {"bid_cash", "y1"}

    def test_simulate_deterministic(self, files, capsys):
        d = files["dir"]
        for name, threads in (("a.json", 1), ("b.json", 1), ("c.json", 2)):
            assert cli.main(["simulate", "--reps", "4", "--n", "150", "--seed", "7", "--threads", str(threads), "--out", str(d / name)]) == 0
        a, b, c = ((d / n).read_bytes() for n in ("a.json", "b.json", "c.json"))
        assert a == b == c

    def test_simulate_config_file(self, files, capsys):
        cfg = files["dir"] / "dgp.json"
        cfg.write_text(json.dumps(survey_profile(n=120).to_dict()))
        code, out, _ = run(["simulate", "--config", cfg, "--reps", "2", "--format", "csv"], capsys)
        assert code == 0 and out.startswith("parameter,truth,mean,bias,rmse,ci_coverage")

    def test_no_command(self, capsys):
        code, _, err = run([], capsys)
        assert code == 1 and "command" in err

    def test_console_script(self, files):
        proc = subprocess.run([sys.executable, "-m", "dualcv.cli", "report", *map(str, files["base"]), "--format", "text"], capture_output=True, text=True)
        assert proc.returncode == 0 and "bid_cash" in proc.stdout
