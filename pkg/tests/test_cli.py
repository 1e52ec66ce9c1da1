import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mtm.cli import main
from mtm.experiments import escape_time

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


RUN = {"sampler": {"variant": "rw-mtm", "proposals": [{"kind": "random-walk", "sigma": 1.0}], "tries": 5},
       "chain_length": 10, "seed": 3}


def test_run_writes_trace_and_manifest(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["run", "--config", str(write(tmp_path, "c.json", RUN)), "--output", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["iteration", "x1", "x2", "n_used", "alpha", "accepted"]
    assert len(rows) == 11 and rows[0]["iteration"] == "0" and rows[0]["alpha"] == ""
    assert float(rows[0]["x1"]) == -6.0
    manifest = json.loads((tmp_path / "trace.csv.manifest.json").read_text())
    assert manifest["command"] == "run" and manifest["config"]["seed"] == 3
    assert manifest["config"]["target"]["noise_variance"] == 5.0
    for key in ("version", "duration_seconds", "master_seed"):
        assert key in manifest


def test_run_is_byte_identical_and_replayable_from_manifest(tmp_path):
    cfg = write(tmp_path, "c.json", RUN)
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    main(["run", "--config", str(cfg), "--output", str(a)])
    main(["run", "--config", str(cfg), "--output", str(b)])
    main(["run", "--config", str(tmp_path / "a.csv.manifest.json"), "--output", str(c)])
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    main(["run", "--config", str(cfg), "--output", str(b), "--seed", "4"])
    assert a.read_bytes() != b.read_bytes()


def test_trace_values_round_trip(tmp_path):
    out = tmp_path / "t.csv"
    main(["run", "--config", str(CONFIGS / "run_sensor_rw.json"), "--output", str(out)])
    rows = read_csv(out)
    states = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
    tau = escape_time(states, [-6.0, -6.0], [-0.753, -0.037])
    assert 1 <= tau <= 2000
    alphas = np.array([float(r["alpha"]) for r in rows[1:]])
    assert np.all((alphas >= 0) & (alphas <= 1))


@pytest.mark.parametrize("text,line", [
    ('{\n  "sampler": {"variant": "rw-mtm",\n   "proposals": [{"kind": "random-walk", "sigma": 1.0}],\n   "trys": 5}\n}', 4),
    ('{\n  "sampler": {"variant": "rw-mtm", "proposals": [{"kind": "random-walk", "sigma": 1.0}]},\n  "chain_lenght": 3\n}', 3),
    ('{\n  "sampler": {\n', 3),
])
def test_bad_config_exits_2_with_line(tmp_path, capsys, text, line):
    code = main(["run", "--config", str(write(tmp_path, "bad.json", text)), "--output", str(tmp_path / "o.csv")])
    assert code == 2
    assert f"line {line}" in capsys.readouterr().err


def test_invalid_values_exit_2(tmp_path):
    bad = dict(RUN, sampler={"variant": "rw-mtm", "proposals": [{"kind": "random-walk", "sigma": 1.0}], "tries": 0})
    assert main(["run", "--config", str(write(tmp_path, "b.json", bad)), "--output", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--output", str(tmp_path / "o")]) == 2


def test_runtime_failure_exits_1(tmp_path):
    # generic weights from a point where the target vanishes (an anchor)
    cfg = {"sampler": {"scheme": "imtm-dm", "sigma": 1.3, "n_tilde": 2}, "x0": [0.0, 0.0], "chain_length": 5}
    assert main(["run", "--config", str(write(tmp_path, "r.json", cfg)), "--output", str(tmp_path / "o.csv")]) == 1


def test_experiment_one_cell(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["experiment", "--config", str(CONFIGS / "experiment_smoke.json"), "--output", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 1
    assert list(rows[0]) == ["scheme", "sigma", "n_tilde", "runs", "mean_tau", "tau_se", "mse", "mse_se"]
    assert rows[0]["runs"] == "2" and rows[0]["mse"] == ""


def test_experiment_permuted_grid_gives_same_cells(tmp_path):
    base = {"schemes": ["rw-standard", "rw-variable-n"], "sigma_grid": [0.8, 1.0], "n_grid": [5, 10],
            "runs": 2, "chain_length": 100}
    perm = dict(base, schemes=["rw-variable-n", "rw-standard"], sigma_grid=[1.0, 0.8], n_grid=[10, 5])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["experiment", "--config", str(write(tmp_path, "a.json", base)), "--output", str(a)])
    main(["experiment", "--config", str(write(tmp_path, "b.json", perm)), "--output", str(b), "--threads", "2"])
    key = lambda r: (r["scheme"], r["sigma"], r["n_tilde"])
    assert sorted(read_csv(a), key=key) == sorted(read_csv(b), key=key)


def test_experiment_uniform_start_reports_mse(tmp_path):
    cfg = {"schemes": ["imtm-standard"], "sigma_grid": [1.3], "n_grid": [2], "runs": 2, "chain_length": 50,
           "x0": "uniform", "proposal_means": [[-6, -6], [-1, -2]]}
    out = tmp_path / "m.csv"
    assert main(["experiment", "--config", str(write(tmp_path, "m.json", cfg)), "--output", str(out)]) == 0
    assert float(read_csv(out)[0]["mse"]) >= 0


@pytest.mark.parametrize("name,code", [
    ("oracle_rw_n2", 0), ("oracle_imtm_dm", 0), ("oracle_imtm_liu", 0),
    ("oracle_kernel_mixture", 0), ("oracle_negative_control", 1),
])
def test_bundled_oracle_configs(name, code, capsys):
    assert main(["oracle-check", "--config", str(CONFIGS / f"{name}.json")]) == code
    out = capsys.readouterr().out
    assert "stationarity" in out and "detailed balance" in out


def test_oracle_residual_report(tmp_path):
    out = tmp_path / "r.json"
    assert main(["oracle-check", "--config", str(CONFIGS / "oracle_rw_n2.json"), "--output", str(out)]) == 0
    assert json.loads(out.read_text())["l1_residual"] < 1e-12


def test_oracle_guard_exits_2(tmp_path):
    cfg = {"space": {"n": 9}, "variant": "rw-mtm", "tries": 8}
    assert main(["oracle-check", "--config", str(write(tmp_path, "g.json", cfg))]) == 2


def test_grid_mean_default_and_gaussian(tmp_path, capsys):
    assert main(["grid-mean", "--config", str(CONFIGS / "grid_mean.json")]) == 0
    assert "within 0.05 per coordinate: yes" in capsys.readouterr().out
    cfg = {"target": {"kind": "gaussian", "mean": [1.0, 2.0], "covariance": [[1, 0], [0, 1]]},
           "box": [[-4, 6], [-3, 7]], "resolution": 100, "reference": [1.0, 2.0], "tolerance": 1e-9}
    out = tmp_path / "g.json"
    assert main(["grid-mean", "--config", str(write(tmp_path, "c.json", cfg)), "--output", str(out)]) == 0
    assert json.loads(out.read_text())["within_tolerance"]


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "mtm.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "oracle-check" in r.stdout
