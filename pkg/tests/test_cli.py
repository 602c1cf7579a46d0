import json
import math
import subprocess
import sys

import numpy as np
import pytest

from searetro import fileio
from searetro.cli import EXIT_CONFIG, EXIT_EMPTY_BODE, EXIT_OK, EXIT_SIMULATION, main
from searetro.sysid import BodePlot


def _config(tmp_path, **over):
    doc = {
        "schema_version": 1,
        "configurations": ["original_motor", "passive_sea", "closed_loop_sea",
                           "closed_loop_rigid_sensor"],
        "torque_amplitudes_nm": [0.1, 1.0, 2.0],
        "chirp": {"start_frequency_hz": 0.1, "end_frequency_hz": 60.0, "duration_s": 20.0},
        "random_seed": 3,
    }
    doc.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_simulate_writes_files_and_manifest(tmp_path):
    cfg = _config(tmp_path, configurations=["passive_sea"])
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--amplitude", "1.0",
                 "--plot"]) == EXIT_OK
    for name in ("passive_sea_timeseries.csv", "passive_sea_bode.csv",
                 "passive_sea_bandwidth.json", "passive_sea_bode.svg", "manifest.json"):
        assert (out / name).is_file()
    assert fileio.verify_manifest(out)
    summary = json.loads((out / "passive_sea_bandwidth.json").read_text(encoding="utf-8"))
    assert summary["amplitude_nm"] == 1.0 and summary["bandwidth_hz"] > 0
    assert set(summary) >= {"bandwidth_hz", "crossover_hz", "dc_gain_db", "method"}


def test_simulate_overload_exits_3(tmp_path, capsys):
    cfg = _config(tmp_path, configurations=["passive_sea"])
    code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--amplitude", "100"])
    assert code == EXIT_SIMULATION
    err = capsys.readouterr().err
    assert "SpringOverload" in err and err.count("SpringOverload") == 1


def test_missing_or_invalid_config_exits_2(tmp_path):
    out = str(tmp_path / "o")
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", out]) == EXIT_CONFIG
    cfg = _config(tmp_path, schema_version=9)
    assert main(["sweep", "--config", str(cfg), "--out", out]) == EXIT_CONFIG


def test_sweep_outputs_and_determinism(tmp_path):
    cfg = _config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", str(cfg), "--out", str(a), "--jobs", "1", "--plot"]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(b), "--jobs", "2"]) == 0
    for name in ("sweep.csv", "summary.csv", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    curves = fileio.read_sweep(a / "sweep.csv")
    assert len(curves) == 4 and all(len(c.records) == 3 for c in curves)
    table = (a / "summary.txt").read_text(encoding="utf-8")
    assert table.count("original_motor") == 2  # simulated row and hardware reference row
    assert (a / "bandwidth_vs_amplitude.svg").read_bytes().startswith(b"<?xml")
    assert fileio.verify_manifest(a)


def test_sweep_single_configuration(tmp_path):
    cfg = _config(tmp_path, configurations=["closed_loop_sea"], torque_amplitudes_nm=[1.0])
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "4"]) == 0
    curves = fileio.read_sweep(tmp_path / "o" / "sweep.csv")
    assert [c.configuration.value for c in curves] == ["closed_loop_sea"]


def test_svg_is_reproducible(tmp_path):
    cfg = _config(tmp_path, configurations=["passive_sea"], torque_amplitudes_nm=[1.0, 2.0])
    for d in ("a", "b"):
        main(["sweep", "--config", str(cfg), "--out", str(tmp_path / d), "--plot", "--jobs", "1"])
    svg = "bandwidth_vs_amplitude.svg"
    assert (tmp_path / "a" / svg).read_bytes() == (tmp_path / "b" / svg).read_bytes()


def _write_second_order(path):
    f = np.arange(0.05, 40.0, 0.05)
    s = 2j * np.pi * f
    wn = 2 * np.pi * 10.0
    fileio.write_bode(path, BodePlot.from_complex(f, wn**2 / (s**2 + 1.414 * wn * s + wn**2)))


def test_bandwidth_second_order(tmp_path, capsys):
    _write_second_order(tmp_path / "b.csv")
    assert main(["bandwidth", str(tmp_path / "b.csv")]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert abs(result["bandwidth_hz"] - 10.0) <= 0.05 + 1e-9
    assert result["method"] == "classic_minus3db_fallback"


def test_bandwidth_flat(tmp_path, capsys):
    f = np.linspace(1, 50, 50)
    fileio.write_bode(tmp_path / "b.csv", BodePlot(f, np.zeros(50), np.zeros(50)))
    assert main(["bandwidth", str(tmp_path / "b.csv")]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["method"] == "full_band" and result["bandwidth_hz"] == 50.0
    assert result["crossover_hz"] is None


def test_bandwidth_bad_inputs(tmp_path):
    (tmp_path / "empty.csv").write_text("", encoding="utf-8")
    assert main(["bandwidth", str(tmp_path / "empty.csv")]) == EXIT_CONFIG
    (tmp_path / "head.csv").write_text("frequency_hz,magnitude_db,phase_deg\n", encoding="utf-8")
    assert main(["bandwidth", str(tmp_path / "head.csv")]) == EXIT_EMPTY_BODE


def test_console_script_separates_streams(tmp_path):
    _write_second_order(tmp_path / "b.csv")
    ok = subprocess.run([sys.executable, "-m", "searetro.cli", "-v", "bandwidth",
                         str(tmp_path / "b.csv")], capture_output=True, text=True)
    assert ok.returncode == 0
    assert json.loads(ok.stdout)["method"] == "classic_minus3db_fallback"
    bad = subprocess.run([sys.executable, "-m", "searetro.cli", "bandwidth",
                          str(tmp_path / "missing.csv")], capture_output=True, text=True)
    assert bad.returncode == EXIT_CONFIG and bad.stdout == "" and "error:" in bad.stderr
