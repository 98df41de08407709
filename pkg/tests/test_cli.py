import json
import subprocess
import sys

import pytest

from gaussfi.cli import main


def run_json(tmp_path, *argv):
    out = tmp_path / "out.json"
    code = main([*argv, "--output", str(out), "--format", "json"])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["schema_version"] == 1
    return data


def test_fi_squeezing_heterodyne(tmp_path):
    data = run_json(tmp_path, "fi", "--model", "squeeze-coherent", "--alpha", "1.4142", "--meas", "heterodyne")
    assert data["f_d"] == pytest.approx(4.0, rel=1e-4)
    assert data["f_sigma"] == pytest.approx(1.0, rel=1e-12)
    assert data["total"] == pytest.approx(5.0, rel=1e-4)


def test_fi_loss_homodyne_q(tmp_path):
    data = run_json(tmp_path, "fi", "--model", "loss-thermal", "--meas", "homodyne:q")
    assert data["f_sigma"] == pytest.approx(0.125, abs=1e-12)


def test_fi_zero_derivative_model(tmp_path):
    cfg = tmp_path / "flat.json"
    cfg.write_text(
        json.dumps(
            {
                "model": "custom",
                "params": {
                    "d": [0, 0],
                    "sigma": [[1, 0], [0, 1]],
                    "d_dot": [0, 0],
                    "sigma_dot": [[0, 0], [0, 0]],
                },
            }
        )
    )
    data = run_json(tmp_path, "fi", "--model", str(cfg))
    assert data["total"] == 0.0


def test_qfi_loss_reports_both_values(tmp_path, capsys):
    data = run_json(tmp_path, "qfi", "--model", "loss-thermal")
    assert data["covariance"] == pytest.approx(1 / 6, abs=1e-11)
    assert data["displacement"] == pytest.approx(0.5, abs=1e-11)
    assert data["reference_values"]["fi_d_opt"] == 0.25
    assert "published reference values" in capsys.readouterr().out


def test_optimize_squeezing(tmp_path):
    data = run_json(tmp_path, "optimize")
    assert data["total"] == pytest.approx(8.0, rel=1e-6)
    assert data["xi"] == pytest.approx(1.5707963, abs=1e-4)


def test_optimize_isothermal(tmp_path):
    cfg = tmp_path / "iso.json"
    cfg.write_text(
        json.dumps(
            {
                "model": "custom",
                "params": {"d": [0, 0], "sigma": [[3, 0], [0, 3]], "d_dot": [0, 0], "sigma_dot": [[3, 0], [0, -3]]},
            }
        )
    )
    data = run_json(tmp_path, "optimize", "--model", str(cfg), "--term", "isothermal")
    assert data["z_star"] == [1.0]


def test_strategy_m2(tmp_path):
    data = run_json(tmp_path, "strategy", "--m", "2")
    row = data["rows"][0]
    assert row["local"] == pytest.approx(16, abs=1e-8)
    assert row["global_lon"] == pytest.approx(18, abs=1e-8)
    assert row["qfi"] == pytest.approx(20, abs=1e-8)


def test_strategy_m1_and_m10(tmp_path):
    data = run_json(tmp_path, "strategy", "--m", "1")
    assert data["rows"][0]["local"] == pytest.approx(data["rows"][0]["global_lon"], abs=1e-9)
    data = run_json(tmp_path, "strategy", "--m", "10")
    assert data["rows"][0]["per_copy"]["global_lon"] == pytest.approx(9.8, abs=1e-9)


def test_strategy_range_csv(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["strategy", "--m", "2:4", "--output", str(out), "--format", "csv"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "m,local,global_lon,bound,qfi"
    assert len(lines) == 4
    assert lines[2].split(",")[2] == "28"


def test_mle_smoke_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["mle", "--trials", "1", "--nu", "3", "--seed", "5", "--output", str(path), "--format", "csv"]) == 0
    assert a.read_bytes() == b.read_bytes()
    summary = json.loads((tmp_path / "a.summary.json").read_text())
    assert summary["schema_version"] == 1
    assert summary["theta_true"] == 0.1
    run = summary["runs"][0]
    assert run["m"] == 2 and run["nu"] == 3 and run["strategy"] == "global"


def test_mle_defaults():
    from gaussfi.cli import build_parser

    args = build_parser().parse_args(["mle"])
    assert args.m == "2" and args.trials == 10_000 and args.model == "squeeze-coherent"


def test_mle_multiple_runs(tmp_path):
    out = tmp_path / "runs.csv"
    assert main(["mle", "--trials", "3", "--nu", "3,4", "--strategy", "both", "--output", str(out), "--format", "csv"]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "runs-global-nu3.csv" in names and "runs-local-nu4.csv" in names and "runs.summary.json" in names


@pytest.mark.parametrize(
    "argv",
    [
        ["fi", "--model", "squeeze-coherent", "--bogus", "1"],
        ["fi", "--model", "no-such-model"],
        ["fi", "--meas", "nonsense"],
        ["fi", "--meas", "squeezed:1"],
        ["fi", "--model", "loss-thermal", "--tau0", "1.5"],
        ["strategy", "--m", "0"],
        ["fi", "--alpha", "abc"],
        ["mle", "--trials", "0"],
    ],
)
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_numerical_error_exit_3(tmp_path):
    cfg = tmp_path / "pure.json"
    cfg.write_text(
        json.dumps(
            {
                "model": "custom",
                "params": {"d": [0, 0], "sigma": [[1, 0], [0, 1]], "d_dot": [0, 0], "sigma_dot": [[1, 0], [0, 1]]},
            }
        )
    )
    assert main(["qfi", "--model", str(cfg)]) == 3


def test_unknown_json_key_rejected(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"model": "loss-thermal", "colour": "blue"}))
    assert main(["qfi", "--model", str(cfg)]) == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "gaussfi", "strategy", "--m", "2"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert "18" in proc.stdout
