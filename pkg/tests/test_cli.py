import json
import os

import numpy as np
import pytest

from rydnept.cli import EXIT_CONFIG, main
from rydnept.storage import read_trace, validate_manifest, write_trace
from rydnept.trace import Trace

from conftest import logistic

SMALL = """
sweep:
  start: -20.0
  stop: 20.0
  rate: 1.0
  t_int: 0.5
detector:
  sigma0: 0.002
"""


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def manifest(out):
    doc = json.loads((out / "manifest.json").read_text())
    validate_manifest(doc)
    return doc


def test_simulate_spectrum_defaults(tmp_path):
    code, out = run(["simulate-spectrum"], tmp_path)
    assert code == 0
    doc = manifest(out)
    csvs = [f for f in doc["files"] if f.endswith(".csv")]
    assert csvs == ["spectrum_free_space.csv"]
    assert sorted(os.listdir(out)) == sorted(doc["files"] + ["manifest.json"])
    assert len(read_trace(out / csvs[0])) == 1000


def test_sensitivity_report_fields(tmp_path):
    code, out = run(["sensitivity", "--config", "sensing-demo", "--mode", "cavity"], tmp_path)
    assert code == 0
    rep = json.loads((out / "sensitivity.json").read_text())
    assert rep["schema_version"] == "1.0"
    for key in ("k", "var", "delta_e", "S"):
        assert np.isfinite(rep["cavity"][key])


def test_analyze_logistic_csv(tmp_path):
    x = np.linspace(-10, 10, 2001)
    path = tmp_path / "edge.csv"
    write_trace(path, Trace(x, logistic(x, 1.5, 0.5)))
    code, out = run(["analyze", str(path)], tmp_path)
    assert code == 0
    rep = json.loads((out / "analysis.json").read_text())["edge.csv"]
    assert rep["k"] == pytest.approx(1 / (4 * 0.5), rel=1e-3)
    assert rep["x_c"] == pytest.approx(1.5, abs=0.01)


def test_fit_shift_from_data(tmp_path):
    from rydnept.metrology import ShiftModel, predict_shift
    E = np.linspace(0, 15.2, 8)
    d = predict_shift(E, ShiftModel(-200.0, 5.25e-4))
    path = tmp_path / "shifts.csv"
    np.savetxt(path, np.column_stack([E, d]), delimiter=",", header="E,shift")
    code, out = run(["fit-shift", "--data", str(path)], tmp_path)
    assert code == 0
    rep = json.loads((out / "fit_shift.json").read_text())
    assert rep["eta"] == pytest.approx(5.25e-4, rel=1e-6)


def test_config_error_exit_code_and_json(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("physics:\n  omega_q: 1\n")
    code, _ = run(["simulate-spectrum", "--config", str(cfg)], tmp_path)
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "SchemaError"
    assert err["error"]["path"] == "physics.omega_q" and err["error"]["line"] == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    path = tmp_path / "broken.csv"
    path.write_text("x,y\n0,1\n")
    code, _ = run(["analyze", str(path)], tmp_path)
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"]["type"] == "FormatError"


def test_outputs_are_byte_identical_across_runs_and_threads(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL)
    base = ["grid", "--config", str(cfg), "--seed", "5", "--set", "omega_p=4.0,6.0,8.0"]
    _, a = run(base, tmp_path, "a")
    _, b = run(base, tmp_path, "b")
    _, c = run(base + ["--threads", "3"], tmp_path, "c")
    files = manifest(a)["files"]
    assert manifest(c)["files"] == files
    for f in files:
        if f == "config.yaml":  # records the output directory
            continue
        assert (a / f).read_bytes() == (b / f).read_bytes() == (c / f).read_bytes()


def test_json_trace_format(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL)
    code, out = run(["simulate-spectrum", "--config", str(cfg), "--format", "json"], tmp_path)
    assert code == 0
    doc = json.loads((out / "spectrum_free_space.json").read_text())
    assert doc["kind"] == "trace" and len(doc["x"]) == len(doc["y"]) == 80
