import json
import subprocess
import sys

import pytest

from stein_expo.experiments import ConfigError, ExperimentConfig, run, schema_for


def _cli(*args, **kwargs):
    return subprocess.run(
        [sys.executable, "-m", "stein_expo.cli", *args],
        capture_output=True, text=True, **kwargs,
    )


def test_config_validation_messages():
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig.from_dict({"kind": "gw-bound", "law": "binary(0.5)", "n": 3}).validate()
    with pytest.raises(ConfigError, match="law"):
        ExperimentConfig.from_dict({"kind": "gw-dw", "seed": 1, "n": 3}).validate()
    with pytest.raises(ConfigError, match="n_grid"):
        ExperimentConfig.from_dict(
            {"kind": "gw-bound", "law": "binary(0.5)", "seed": 1, "n_grid": [5, 5]}
        ).validate()
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"kind": "verify", "seed": 1, "bogus": 2})
    with pytest.raises(ConfigError, match="kind"):
        ExperimentConfig.from_dict({"kind": "nope", "seed": 1}).validate()


def test_report_echo_excludes_execution_details():
    cfg = ExperimentConfig.from_dict(
        {"kind": "gw-bound", "law": "binary(0.5)", "n": 3, "seed": 1, "threads": 4,
         "out_csv": "x.csv", "out_json": "x.json"}
    )
    report = run(cfg)
    assert "threads" not in report.config
    assert "out_csv" not in report.config and "out_json" not in report.config
    assert report.config["law"] == "binary(0.5)"


def test_run_deterministic_across_threads():
    base = {"kind": "occupation", "seed": 5, "n": 12, "reps": 5000,
            "chain": {"states": ["a", "b", "c"],
                      "matrix": [[0.2, 0.5, 0.3], [0.4, 0.2, 0.4], [0.5, 0.25, 0.25]],
                      "start": 0}}
    a = run(ExperimentConfig.from_dict({**base, "threads": 1}))
    b = run(ExperimentConfig.from_dict({**base, "threads": 3}))
    assert a.to_json_bytes() == b.to_json_bytes()
    assert a.to_csv_bytes() == b.to_csv_bytes()


def test_csv_shape_and_quoting():
    cfg = ExperimentConfig.from_dict(
        {"kind": "gw-couple", "law": "pmf:[0:0.5,2:0.5]", "n": 3, "reps": 500, "seed": 2}
    )
    report = run(cfg)
    text = report.to_csv_bytes().decode()
    lines = text.split("\r\n")
    assert lines[0] == "law,m,n,reps,dw_hat,se,bound,gap_hat,gap_se"
    assert lines[1].startswith('"pmf:[0:0.5,2:0.5]"')  # comma inside field stays quoted


def test_bounds_sweep_run():
    cfg = ExperimentConfig.from_dict(
        {"kind": "bounds-sweep", "family": "geometric", "m_grid": [0.8, 0.9, 1.1],
         "n_grid": [2, 8, 32], "seed": 1}
    )
    report = run(cfg)
    assert len(report.rows) == 9
    assert report.verdicts[0]["name"] == "eta_le_eta_upper"
    assert report.verdicts[0]["status"] == "pass"


def test_walk2d_return_prob_schema():
    assert schema_for("walk2d", "return-prob") == ["walk", "n", "reps", "p_hat", "se", "n_p_hat"]
    cfg = ExperimentConfig.from_dict(
        {"kind": "walk2d", "walk": "lazy(0.2)", "mode": "return-prob",
         "n_grid": [8, 16], "reps": 2000, "seed": 3}
    )
    report = run(cfg)
    assert {row["n"] for row in report.rows} == {8, 16}


def test_cli_gw_bound_stdout(tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"law": "geometric(0.9)", "n": 10}))
    proc = _cli("gw-bound", "--config", str(config), "--seed", "3")
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["rows"][0]["n"] == 10
    assert payload["version"] == "0.1.0"


def test_cli_output_files(tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps(
        {"kind": "gw-couple", "law": "binary(0.5)", "n": 4, "reps": 2000}))
    out_csv = tmp_path / "rows.csv"
    out_json = tmp_path / "report.json"
    proc = _cli("gw-couple", "--config", str(config), "--seed", "9",
                "--out-csv", str(out_csv), "--out-json", str(out_json))
    assert proc.returncode == 0, proc.stderr
    assert out_csv.read_text().startswith("law,m,n")
    assert json.loads(out_json.read_text())["verdicts"][0]["status"] == "pass"


def test_cli_schema_flag():
    proc = _cli("occupation", "--schema")
    assert proc.returncode == 0
    assert proc.stdout.startswith("chain:")


def test_every_schema_column_documented():
    from stein_expo.experiments import SCHEMAS, SCHEMA_NOTES

    for columns in SCHEMAS.values():
        for col in columns:
            assert SCHEMA_NOTES.get(col), f"undocumented column {col}"


def test_walk2d_grid_run_has_shape_verdicts():
    cfg = ExperimentConfig.from_dict(
        {"kind": "walk2d", "walk": "simple", "n_grid": [200, 400], "reps": 1000, "seed": 4}
    )
    report = run(cfg)
    assert len(report.rows) == 2
    names = [v["name"] for v in report.verdicts]
    assert any(name.startswith("dk_decreasing") for name in names)
    assert "dw_log_n_band_factor_3" in names


def test_cli_config_errors(tmp_path):
    proc = _cli("gw-dw", "--seed", "1")
    assert proc.returncode == 2  # no law given
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"kind": "walk2d", "walk": "simple", "n": 10}))
    proc = _cli("gw-bound", "--config", str(config), "--seed", "1")
    assert proc.returncode == 2  # kind mismatch
    config.write_text("{not json")
    proc = _cli("gw-bound", "--config", str(config), "--seed", "1")
    assert proc.returncode == 2
