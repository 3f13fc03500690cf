import csv
import json
import subprocess
import sys

import pytest

from thermolen import cli
from thermolen.errors import ConfigError, ConvergenceError


def _run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_metric_sweep_writes_tables_and_manifest(tmp_path):
    assert _run(tmp_path, "metric", "--model", "bosonic_qubit", "--r", "0.1:2:5", "--theta", "1.0",
                "--alpha", "0.5,2", "--gnuplot") == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest) >= {"config_sha256", "versions", "wall_time_s", "files", "config"}
    assert manifest["config"]["model"]["alpha"] == [0.5, 2.0]
    for name in manifest["files"]:
        assert (tmp_path / name).exists()
    tables = [f for f in manifest["files"] if f.endswith(".csv")]
    assert tables and any(f.endswith(".gp") for f in manifest["files"])
    rows = _read_csv(tmp_path / tables[0])
    assert rows and all("[" in h for h in rows[0])  # unit-annotated headers


def test_outputs_are_deterministic(tmp_path):
    args = ("geodesic", "--model", "ising", "--beta", "1", "--start", "0", "--end", "2", "--n-knots", "21")
    assert _run(tmp_path / "a", *args) == 0
    assert _run(tmp_path / "b", *args) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["files"] == mb["files"]
    for name in ma["files"]:
        if name != "manifest.json":
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # the config hash ignores the output directory only through its value, so compare the rest
    ca, cb = ma["config"], mb["config"]
    ca["output"].pop("dir"), cb["output"].pop("dir")
    assert ca == cb


def test_config_file_layering(tmp_path):
    cfg = {"command": "christoffel", "model": {"name": "ising", "beta": [2.0]}, "grid": {"g": [0.5, 1.5]}}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    assert _run(tmp_path / "out", "christoffel", "--config", str(path), "--beta", "3") == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["model"]["beta"] == [3.0]
    assert manifest["config"]["grid"]["g"] == [0.5, 1.5]


@pytest.mark.parametrize("cfg", [
    {"model": {"name": "ising", "colour": "red"}},
    {"model": {"name": "harmonic"}},
    {"grid": {"g": "0:5"}},
    {"tolerances": {"rtol": -1.0}},
    {"unknown": 1},
])
def test_schema_rejects_bad_config(tmp_path, cfg, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert _run(tmp_path / "out", "metric", "--config", str(path)) == 2
    assert "cli.config" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert _run(tmp_path, "metric", "--config", str(broken)) == 2
    assert _run(tmp_path, "metric", "--config", str(tmp_path / "missing.json")) == 2
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"command": "geodesic"}))
    assert _run(tmp_path, "metric", "--config", str(other)) == 2
    assert _run(tmp_path, "simulate", "--model", "ising") == 2
    assert cli.main([]) == 2


def test_domain_error_exits_3(tmp_path, capsys):
    assert _run(tmp_path, "metric", "--model", "bosonic_qubit", "--r", "0:1:3") == 3
    assert "metric" in capsys.readouterr().err


def test_convergence_error_exits_4(tmp_path, monkeypatch):
    def fail(config, out):
        raise ConvergenceError("geodesic.geodesic_bvp: shooting did not converge")

    monkeypatch.setitem(cli.HANDLERS, "metric", fail)
    assert _run(tmp_path, "metric") == 4


def test_jobs_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("THERMOLEN_JOBS", "3")
    args = cli.build_parser().parse_args(["metric"])
    assert cli.resolve_config("metric", args)["jobs"] == 3
    args = cli.build_parser().parse_args(["metric", "--jobs", "2"])
    assert cli.resolve_config("metric", args)["jobs"] == 2
    monkeypatch.setenv("THERMOLEN_JOBS", "many")
    with pytest.raises(ConfigError):
        cli.resolve_config("metric", cli.build_parser().parse_args(["metric"]))


def test_parallel_matches_serial(tmp_path):
    args = ("metric", "--model", "bosonic_qubit", "--alpha", "0.5,1,2", "--r", "0.2:1:4")
    assert _run(tmp_path / "serial", *args, "--jobs", "1") == 0
    assert _run(tmp_path / "pool", *args, "--jobs", "2") == 0
    for name in json.loads((tmp_path / "serial" / "manifest.json").read_text())["files"]:
        if name.endswith(".csv"):
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pool" / name).read_bytes()


def test_simulate_summary(tmp_path):
    assert _run(tmp_path, "simulate", "--T", "20", "--protocol", "linear", "--n-knots", "41") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    run = summary["runs"][0]
    assert {"W", "W_diss", "prediction", "relative_error"} <= set(run)
    assert abs(run["identity_residual"]) < 1e-7


def test_axis_parsing():
    assert list(cli.parse_axis("0:1:3")) == [0.0, 0.5, 1.0]
    assert list(cli.parse_axis([2, 3])) == [2.0, 3.0]
    with pytest.raises(ConfigError):
        cli.parse_axis("1:0:x")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "thermolen.cli", "--print-schema"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["additionalProperties"] is False


def test_geodesic_jobs_survive_process_pool(tmp_path):
    args = ("ising-fig2", "--beta", "0.5,1", "--g", "0:2:11")
    assert _run(tmp_path / "serial", *args, "--jobs", "1") == 0
    assert _run(tmp_path / "pool", *args, "--jobs", "2") == 0
    for name in json.loads((tmp_path / "serial" / "manifest.json").read_text())["files"]:
        if name != "manifest.json":
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pool" / name).read_bytes()
