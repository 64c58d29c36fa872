import json

import pytest

from ldbranch.cli import main
from ldbranch.ratefn import recurrence_rate
from ldbranch.params import build_from_settings

FIG1_FLAGS = ["--r0", "0", "--d0", "2", "--r1", "5", "--d1", "3", "--mu", "0.1"]


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestValidateCommand:
    def test_defaults_pass_and_manifest_lists_reports(self, tmp_path, capsys):
        out = tmp_path / "v"
        assert main(["validate", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        names = {a["name"] for a in manifest["artifacts"]}
        assert {"report.json", "report.txt"} <= names
        assert manifest["command"] == "validate"

    def test_unknown_config_key_exits_one_naming_it(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("nu = 3\n")
        code = main(["validate", "--config", str(cfg), "--out",
                     str(tmp_path / "o")])
        assert code == 1
        payload = json.loads(capsys.readouterr().out.strip())
        assert any("nu" in f for f in payload["failures"])


class TestRateCurveCommand:
    def test_fig1_sweep_monotone_increasing(self, tmp_path, capsys):
        for case in (1, 3):
            out = tmp_path / f"case{case}"
            assert main([
                "rate-curve", *FIG1_FLAGS, "--case", str(case),
                "--sweep", "y", "--start", "0.1", "--stop", "2.0",
                "--step", "0.1", "--out", str(out),
            ]) == 0
            header, rows = read_csv(out / "rate-curve.csv")
            assert header == ["sweep_value", "rate", "theta_star"]
            rates = [float(r[1]) for r in rows]
            assert all(a < b for a, b in zip(rates, rates[1:]))

    def test_fig3_r1_sweep_monotone_decreasing(self, tmp_path, capsys):
        out = tmp_path / "fig3"
        assert main([
            "rate-curve", "--case", "1", "--sweep", "r1",
            "--mu", "0.01", "--y", "1",
            "--start", "0.25", "--stop", "2.0", "--step", "0.25",
            "--out", str(out),
        ]) == 0
        _, rows = read_csv(out / "rate-curve.csv")
        rates = [float(r[1]) for r in rows]
        assert all(a > b for a, b in zip(rates, rates[1:]))

    def test_single_point_sweep_gives_one_row(self, tmp_path, capsys):
        out = tmp_path / "single"
        assert main([
            "rate-curve", "--sweep", "y", "--start", "1.0", "--stop", "1.0",
            "--step", "0.5", "--out", str(out),
        ]) == 0
        _, rows = read_csv(out / "rate-curve.csv")
        assert len(rows) == 1

    def test_twelve_significant_digit_serialization(self, tmp_path, capsys):
        out = tmp_path / "digits"
        assert main([
            "rate-curve", "--sweep", "y", "--start", "0.7", "--stop", "0.7",
            "--step", "1.0", "--out", str(out),
        ]) == 0
        _, rows = read_csv(out / "rate-curve.csv")
        params, scenario, _ = build_from_settings({})
        expected = recurrence_rate(1, 0.7, params)
        assert float(rows[0][1]) == pytest.approx(expected.value, rel=1e-11)
        assert float(rows[0][2]) == pytest.approx(expected.theta_star, rel=1e-11)

    def test_illegal_sweep_bounds_rejected_before_computation(
        self, tmp_path, capsys
    ):
        out = tmp_path / "bad-sweep"
        code = main([
            "rate-curve", "--sweep", "y", "--start", "2.0", "--stop", "1.0",
            "--step", "0.1", "--out", str(out),
        ])
        assert code == 1
        assert not (out / "rate-curve.csv").exists()

    def test_conditioned_quantity_uses_clone_factor(self, tmp_path, capsys):
        out = tmp_path / "cond"
        assert main([
            "rate-curve", "--quantity", "conditioned", "--sweep", "y",
            "--start", "0.5", "--stop", "1.0", "--step", "0.5",
            "--clone-factor", "1.0", "--out", str(out),
        ]) == 0
        _, rows = read_csv(out / "rate-curve.csv")
        assert all(float(r[1]) > 0 for r in rows)


class TestRatioCurveCommand:
    def test_rows_cover_grid_and_betas(self, tmp_path, capsys):
        out = tmp_path / "ratio"
        assert main([
            "ratio-curve", *FIG1_FLAGS, "--n", "100",
            "--betas", "0.2,0.4", "--y-start", "0.5", "--y-stop", "1.0",
            "--y-step", "0.5", "--out", str(out),
        ]) == 0
        header, rows = read_csv(out / "ratio-curve.csv")
        assert header == ["y", "beta", "ratio"]
        assert len(rows) == 4
        assert all(float(r[2]) > 0 for r in rows)


class TestCloneOptimumCommand:
    def test_fig4_columns_and_monotone_a(self, tmp_path, capsys):
        out = tmp_path / "opt"
        assert main([
            "clone-optimum", "--y-start", "0.5", "--y-stop", "3.0",
            "--y-step", "0.5", "--out", str(out),
        ]) == 0
        header, rows = read_csv(out / "clone-optimum.csv")
        assert header == ["y", "a_star_star", "theta1", "theta2"]
        a_col = [float(r[1]) for r in rows]
        assert all(x < y for x, y in zip(a_col, a_col[1:]))
        by_y = {float(r[0]): r for r in rows}
        assert float(by_y[1.0][1]) == pytest.approx(1.0773709711821284, abs=1e-9)
        assert all(float(r[3]) < float(r[2]) for r in rows)


class TestSimulateCommand:
    def test_passage_csv_written(self, tmp_path, capsys):
        out = tmp_path / "sim"
        assert main([
            "simulate", "--n", "300", "--replicates", "10", "--seed", "9",
            "--out", str(out),
        ]) == 0
        header, rows = read_csv(out / "passages.csv")
        assert header == ["replicate", "gamma", "tau", "censored_gamma",
                          "censored_tau", "S", "E"]
        assert len(rows) == 10

    def test_event_log_requires_ledger(self, tmp_path, capsys):
        code = main([
            "simulate", "--n", "300", "--event-log",
            "--out", str(tmp_path / "x"),
        ])
        assert code == 1

    def test_manifest_verifies_artifact_integrity(self, tmp_path, capsys):
        import hashlib

        out = tmp_path / "verify"
        assert main([
            "simulate", "--n", "300", "--replicates", "5", "--seed", "2",
            "--out", str(out),
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["artifacts"]
        for entry in manifest["artifacts"]:
            payload = (out / entry["name"]).read_bytes()
            assert hashlib.sha256(payload).hexdigest() == entry["sha256"]
            assert len(payload) == entry["bytes"]

    def test_repeat_run_manifests_byte_identical(self, tmp_path, capsys):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main([
                "simulate", "--n", "300", "--replicates", "15", "--seed", "4",
                "--out", str(out),
            ]) == 0
        assert (out1 / "manifest.json").read_bytes() == (
            out2 / "manifest.json"
        ).read_bytes()
        assert (out1 / "passages.csv").read_bytes() == (
            out2 / "passages.csv"
        ).read_bytes()


class TestExperimentCommand:
    def test_moments_report_written_and_passes(self, tmp_path, capsys):
        out = tmp_path / "exp"
        code = main([
            "experiment", "--name", "moments", "--replicates", "500",
            "--n", "500", "--checkpoints", "1,2", "--seed", "6",
            "--out", str(out),
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["experiment"] == "moments"
        assert report["passed"] is True
        assert "result: PASS" in capsys.readouterr().out

    def test_raw_flag_dumps_per_replicate_csv(self, tmp_path, capsys):
        # n >= 1000 keeps the no-surviving-clone atom well below the 1%
        # censoring budget
        out = tmp_path / "raw"
        assert main([
            "experiment", "--name", "convergence", "--replicates", "40",
            "--n-grid", "1000,2000", "--seed", "6", "--raw", "--out", str(out),
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        names = {a["name"] for a in manifest["artifacts"]}
        assert "passages-n1000.csv" in names

    def test_environment_override_reaches_settings(self, tmp_path, capsys,
                                                   monkeypatch):
        monkeypatch.setenv("LDBRANCH_MU", "0.25")
        out = tmp_path / "env"
        assert main([
            "experiment", "--name", "moments", "--replicates", "200",
            "--n", "300", "--checkpoints", "1", "--seed", "6",
            "--out", str(out),
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["settings"]["mu"] == 0.25

    def test_cli_flag_beats_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "model.cfg"
        cfg.write_text("mu = 0.05\nn = 400\n")
        out = tmp_path / "prec"
        assert main([
            "experiment", "--name", "moments", "--replicates", "200",
            "--checkpoints", "1", "--seed", "6", "--config", str(cfg),
            "--mu", "0.2", "--out", str(out),
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["settings"]["mu"] == 0.2
        assert manifest["settings"]["n"] == 400
