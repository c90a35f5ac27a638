from __future__ import annotations

import json

import pytest
import yaml

from cgmlab.cli import RunConfig, main, parse_config
from cgmlab.errors import ConfigError


def _write(tmp_path, payload):
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(payload))
    return str(p)


def test_energy_command(tmp_path, capsys):
    cfg = _write(tmp_path, {"fixture": "clifford_torus", "grid": {"n_t": 64, "n_theta": 64}})
    assert main(["energy", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    rep = json.loads((tmp_path / "out" / "energy.json").read_text())
    assert rep["identity_defect"] < 1e-5 and rep["chi"] == 0
    assert rep["A_Y"] == pytest.approx(rep["D_Y"], rel=1e-6)
    status = json.loads(capsys.readouterr().out)
    assert status["status"] == "ok"


def test_fixture_params_from_config(tmp_path):
    cfg = _write(tmp_path, {"fixture": {"name": "inverted_catenoid", "params": {"eps": 0.3, "t_range": [-1, 1]}},
                            "grid": {"n_t": 32}, "output": {"dir": str(tmp_path / "o")}})
    assert main(["energy", "--config", cfg]) == 0
    rep = json.loads((tmp_path / "o" / "energy.json").read_text())
    assert rep["identity_defect"] is None and rep["grid"] == [32, 32]


def test_neck_report_command(tmp_path):
    cfg = _write(tmp_path, {"family": [0.2, 0.1], "grid": {"n_t": 128, "n_theta": 32}})
    assert main(["neck-report", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "neck_report.csv").read_text().splitlines()
    assert lines[0] == "# schema=cgmlab.cylinder.v1"
    assert lines[1].split(",")[:3] == ["eps", "t", "alpha"]
    rep = json.loads((tmp_path / "neck_report.json").read_text())
    assert [m["eps"] for m in rep["members"]] == [0.2, 0.1]
    assert rep["trend"]["alpha_over_beta_decreasing"] is True


def test_index_bound_command_and_infeasible_exit(tmp_path):
    cfg = _write(tmp_path, {"neck": {"eps": 0.05}, "index": {"J": 3}, "grid": {"n_t": 256, "n_theta": 32}})
    assert main(["index-bound", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "index_bound.json").read_text())
    assert rep["J"] == 3 and len(rep["pieces"]) == 3 and len(rep["certificates"]) == 3
    cfg = _write(tmp_path, {"neck": {"eps": 0.05}, "index": {"J": 40}, "grid": {"n_t": 256, "n_theta": 32}})
    assert main(["index-bound", "--config", cfg, "--out", str(tmp_path)]) == 4
    rep = json.loads((tmp_path / "index_bound.json").read_text())
    assert 0 < rep["max_feasible_J"] < 40


@pytest.mark.parametrize("payload", [
    {"fixture": "klein_bottle"},
    {"grid": {"n_t": 4}},
    {"grid": {"n_t": "many"}},
    {"bogus": 1},
    {"index": {"J": 0}},
    {"tolerances": {"tau_null": -1}},
    {"command": "neck-report"},
])
def test_config_errors_exit_2(tmp_path, payload, capsys):
    assert main(["energy", "--config", _write(tmp_path, payload), "--out", str(tmp_path)]) == 2
    assert "error (code 2)" in capsys.readouterr().err


def test_bad_family_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"family": [0.1, 0.2]}, "neck-report")
    assert main(["energy", "--config", str(tmp_path / "missing.yaml")]) == 2
    p = tmp_path / "bad.yaml"
    p.write_text("grid: [unclosed")
    assert main(["energy", "--config", str(p)]) == 2


def test_parse_defaults():
    cfg = parse_config({}, "energy")
    assert isinstance(cfg, RunConfig) and cfg.fixture == "round_sphere" and cfg.n_t == cfg.n_theta == 128
