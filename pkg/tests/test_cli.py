import json
import subprocess
import sys

import pytest

from fracsphere.cli import COMMANDS, main


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def read_csv_meta(path):
    first = path.read_text().splitlines()[0]
    assert first.startswith("# ")
    return json.loads(first[2:])


@pytest.mark.parametrize("command", [c for c in COMMANDS if c != "chebyshev"])
def test_every_command_default_config(tmp_path, command):
    code, out = run(tmp_path, command)
    assert code == 0
    assert any(out.iterdir())


def test_chebyshev_command(tmp_path):
    code, out = run(tmp_path, "chebyshev", "--replicates", "512")
    assert code == 0
    rep = json.loads((out / "chebyshev.json").read_text())["report"]
    assert rep["n_mc"] == 512 and rep["L_prime"] == 32 and rep["L"] == 64
    assert rep["passed"]


def test_csv_header_metadata(tmp_path):
    code, out = run(tmp_path, "combined", "--seed", "11", "--t", "0.7")
    assert code == 0
    meta = read_csv_meta(out / "combined.csv")
    assert meta["program"] == "fracsphere" and meta["command"] == "combined"
    assert meta["seed"] == 11 and meta["config"]["t"] == 0.7
    assert meta["config"]["alpha"] == 1.0
    lines = (out / "combined.csv").read_text().splitlines()
    assert lines[1] == "theta,phi,re_x,im_x,re_y,im_y,re_z,im_z"


def test_json_output_metadata(tmp_path):
    code, out = run(tmp_path, "cauchy", "--format", "json", "--seed", "3")
    assert code == 0
    body = json.loads((out / "cauchy.json").read_text())
    assert body["metadata"]["seed"] == 3
    assert body["L"] == 16 and body["coefficients"]


@pytest.mark.parametrize("command", ["sample", "combined"])
def test_repeated_runs_byte_identical(tmp_path, command):
    _, a = run(tmp_path, command, "--seed", "7", "--L", "6", name="a")
    _, b = run(tmp_path, command, "--seed", "7", "--L", "6", name="b")
    _, c = run(tmp_path, command, "--seed", "7", "--L", "6", "--workers", "3", name="c")
    fa = (a / f"{command}.csv").read_bytes()
    assert fa == (b / f"{command}.csv").read_bytes()
    assert fa == (c / f"{command}.csv").read_bytes()
    _, d = run(tmp_path, command, "--seed", "8", "--L", "6", name="d")
    assert fa != (d / f"{command}.csv").read_bytes()


def test_truncation_study_slope(tmp_path):
    code, out = run(tmp_path, "truncation-study", "--nu", "4")
    assert code == 0
    s = json.loads((out / "truncation_summary.json").read_text())["summary"]
    assert abs(s["slope"] + 1.0) <= 0.15 and s["matches_bound_rate"]
    rows = (out / "truncation.csv").read_text().splitlines()
    assert rows[1] == "L,tail_norm" and len(rows) == 7


def test_increment_study_output(tmp_path):
    code, out = run(tmp_path, "increment-study", "--format", "json")
    assert code == 0
    s = json.loads((out / "increment_summary.json").read_text())["summary"]
    assert s["passed"] and len(s["table"]) == 3


def test_ml_command_values(tmp_path):
    code, out = run(tmp_path, "ml", "--a", "1", "--b", "1", "--z", "0,1,-2", "--format", "json")
    assert code == 0
    vals = json.loads((out / "ml.json").read_text())["values"]
    assert [v["value"] for v in vals] == pytest.approx([1.0, 2.718281828459045, 0.1353352832366127])


def test_exit_code_config(tmp_path):
    assert run(tmp_path, "combined", "--config", str(tmp_path / "missing.json"))[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"alpha": 3.0, "gamma": 0.0, "beta": 0.8, "hurst": 0.7, "L": 4,
                               "spectra": {"family": "power", "c": 1.0, "nu": 4.0}}))
    assert run(tmp_path, "combined", "--config", str(bad))[0] == 2
    assert run(tmp_path, "combined", "--t", "-1")[0] == 2


def test_exit_code_admissibility(tmp_path):
    cfg = tmp_path / "div.json"
    cfg.write_text(json.dumps({"alpha": 1.0, "gamma": 0.0, "beta": 0.4, "hurst": 0.55, "L": 4,
                               "spectra": {"family": "power", "c": 1.0, "nu": 4.0}}))
    assert run(tmp_path, "combined", "--config", str(cfg))[0] == 3
    assert run(tmp_path, "truncation-study", "--nu", "1.5")[0] == 3


def test_exit_code_numerical(tmp_path):
    assert run(tmp_path, "ml", "--a", "0.05", "--b", "1", "--z", "5")[0] == 4


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "fracsphere", "ml", "--z", "0", "--out", str(tmp_path)],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert res.stdout.strip().endswith("ml.csv")
