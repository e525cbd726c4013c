import csv
import json

import numpy as np
import pytest
import yaml

from wentzell.cli import main
from wentzell.config import ConfigError, load_config, parse_config
from wentzell.io import MissingColumnError, plot_trajectory, read_trajectory_csv


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data) if name.endswith(".yaml") else json.dumps(data))
    return p


BASE = {
    "equation": "schrodinger",
    "grid": [5, 6],
    "metric": {"name": "static-flat"},
    "initial": {"profile": "random", "scale": 1.0},
    "solver": {"dt": 0.01, "T": 0.2},
    "certificates": {"operator": True, "trajectory": True, "samples": 10},
    "seed": 3,
}


def test_parse_defaults():
    cfg = parse_config({})
    assert cfg.equation == "heat" and cfg.kappa == 1 and cfg.grid == (8, 8)


@pytest.mark.parametrize("bad", [
    {"equation": "wave"},
    {"grid": [2, 4]},
    {"grid": "8x8"},
    {"metric": {"name": "sphere"}},
    {"nonlinearity": {"kind": "custom", "name": "nope"}},
    {"nonlinearity": {"kind": "power", "alpha": 0.5}},
    {"initial": {"profile": "spiky"}},
    {"solver": {"dt": -1}},
    {"solver": {"tolerance": 1}},
    {"seed": -1},
    {"colour": "blue"},
    {"certificates": {"nonsense": True}},
])
def test_parse_rejects(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_json_and_yaml_agree(tmp_path):
    a = load_config(_write(tmp_path, BASE, "a.yaml"))
    b = load_config(_write(tmp_path, BASE, "b.json"))
    assert a.to_dict() == b.to_dict()


def test_initial_profiles(tmp_path):
    for init in ({"profile": "constant", "value": 2.0}, {"profile": "gaussian-bump", "width": 0.3},
                 {"profile": "random", "norm": 0.5}):
        cfg = parse_config({**BASE, "initial": init})
        X0 = cfg.initial_state(cfg.build_grid(), cfg.build_metric())
        assert X0.is_compatible() and X0.is_finite()


def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--config", str(_write(tmp_path, BASE)), "--out", str(out), "--quiet"])
    assert code == 0
    data = read_trajectory_csv(out / "trajectory.csv")
    assert len(data["t"]) == 21  # accepted steps + 1
    assert np.allclose(data["norm_inst"], data["norm_inst"][0], rtol=1e-10)
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] and report["metadata"]["seed"] == 3
    snap = np.load(out / "final_state.npz")
    assert snap["u"].shape == (5, 6)


def test_run_is_deterministic(tmp_path):
    p = _write(tmp_path, BASE)
    for d in ("a", "b"):
        assert main(["run", "--config", str(p), "--out", str(tmp_path / d), "--quiet"]) == 0
    assert (tmp_path / "a/trajectory.csv").read_bytes() == (tmp_path / "b/trajectory.csv").read_bytes()


def test_seed_flag_and_env(tmp_path, monkeypatch):
    p = _write(tmp_path, BASE)
    main(["run", "--config", str(p), "--out", str(tmp_path / "a"), "--seed", "11", "--quiet"])
    monkeypatch.setenv("WENTZELL_SEED", "11")
    main(["run", "--config", str(p), "--out", str(tmp_path / "b"), "--quiet"])
    ra = json.loads((tmp_path / "a/report.json").read_text())
    rb = json.loads((tmp_path / "b/report.json").read_text())
    assert ra["metadata"]["seed"] == rb["metadata"]["seed"] == 11


def test_env_config_and_out(tmp_path, monkeypatch):
    monkeypatch.setenv("WENTZELL_CONFIG", str(_write(tmp_path, BASE)))
    monkeypatch.setenv("WENTZELL_OUT", str(tmp_path / "envout"))
    assert main(["run", "--quiet"]) == 0
    assert (tmp_path / "envout/trajectory.csv").exists()


def test_blowup_config_exits_zero(tmp_path):
    cfg = {
        "equation": "heat", "grid": [3, 4],
        "nonlinearity": {"kind": "power", "alpha": 2, "P": 1.0},
        "initial": {"profile": "constant", "value": 10.0},
        "solver": {"dt": 0.001, "T": 0.2, "blowup_threshold": 1.0e4},
        "certificates": {"expected_blowup": 0.1, "samples": 10},
    }
    out = tmp_path / "b"
    assert main(["run", "--config", str(_write(tmp_path, cfg)), "--out", str(out), "--quiet"]) == 0
    assert json.loads((out / "report.json").read_text())["metadata"]["status"] == "blew-up"


def test_certificate_failure_exit_one(tmp_path):
    cfg = {**BASE, "equation": "heat", "grid": [3, 4],
           "nonlinearity": {"kind": "power", "alpha": 2, "P": 1.0},
           "initial": {"profile": "constant", "value": 10.0},
           "solver": {"dt": 0.001, "T": 0.2, "blowup_threshold": 1.0e4}}
    assert main(["run", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "o"), "--quiet"]) == 1


def test_simulation_failure_exit_three(tmp_path):
    cfg = {**BASE, "equation": "heat", "grid": [3, 4],
           "nonlinearity": {"kind": "power", "alpha": 2, "P": 1.0},
           "initial": {"profile": "constant", "value": 10.0},
           "solver": {"dt": 0.001, "T": 1.0, "blowup_threshold": 1.0e300, "dt_min": 1.0e-3}}
    assert main(["run", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "o"), "--quiet"]) == 3


def test_malformed_config_exit_two(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("grid: [2\n")
    assert main(["run", "--config", str(p)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_plot_outputs(tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", str(_write(tmp_path, {**BASE, "equation": "heat"})), "--out", str(out), "--quiet"])
    assert main(["plot", str(out / "trajectory.csv"), "--quiet"]) == 0
    assert (out / "norm.png").stat().st_size > 0 and (out / "graph_norm.png").stat().st_size > 0


def test_plot_missing_columns(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("")
    with pytest.raises(MissingColumnError):
        plot_trajectory(p)
    with p.open("w", newline="") as fh:
        csv.writer(fh).writerows([["t", "norm_ref"], ["0", "1"]])
    assert main(["plot", str(p)]) == 2


def test_certify_command(tmp_path):
    p = _write(tmp_path, {**BASE, "metric": {"name": "breathing", "amplitude": 0.3}})
    assert main(["certify", "--config", str(p), "--t", "0", "--t", "0.1", "--out", str(tmp_path), "--quiet"]) == 0
    rep = json.loads((tmp_path / "certificates.json").read_text())
    assert rep["passed"] and len(rep["checks"]) == 10


def test_sweep_run_mode(tmp_path):
    cfg = {**BASE, "equation": "heat", "nonlinearity": {"kind": "power", "alpha": 3, "P": -1.0},
           "initial": {"profile": "random", "scale": 0.3},
           "certificates": {"operator": False},
           "sweep": {"parameter": "alpha", "values": [2, 3]}}
    assert main(["sweep", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "s"),
                 "--jobs", "2", "--quiet"]) == 0
    rep = json.loads((tmp_path / "s/sweep_report.json").read_text())
    assert rep["passed"] and [p["value"] for p in rep["points"]] == [2, 3]
    assert (tmp_path / "s/point_001/trajectory.csv").exists()


def test_sweep_mms_dt(tmp_path):
    cfg = {"equation": "heat", "metric": {"name": "breathing", "amplitude": 0.2},
           "sweep": {"parameter": "dt", "mode": "mms", "values": [0.02, 0.01, 0.005], "n": 8, "T": 0.4}}
    assert main(["sweep", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "s"), "--quiet"]) == 0
    rep = json.loads((tmp_path / "s/sweep_report.json").read_text())
    assert abs(rep["order"] - 2) < 0.2


def test_sweep_empty_range(tmp_path):
    cfg = {"sweep": {"parameter": "dt", "values": []}}
    assert main(["sweep", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "s")]) == 2


def test_sweep_partial_failure_reported(tmp_path):
    cfg = {**BASE, "equation": "heat", "grid": [3, 4],
           "nonlinearity": {"kind": "power", "alpha": 2, "P": 1.0},
           "initial": {"profile": "constant", "value": 10.0},
           "solver": {"dt": 0.001, "T": 0.2, "blowup_threshold": 1.0e4},
           "certificates": {"operator": False},
           "sweep": {"parameter": "alpha", "values": [1, 2]}}
    assert main(["sweep", "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "s"), "--quiet"]) == 1
    rep = json.loads((tmp_path / "s/sweep_report.json").read_text())
    assert rep["failed_points"] == [2]
