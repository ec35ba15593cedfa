"""File format roundtrips and CLI behavior (exit codes, determinism)."""

import hashlib
import json
import os

import numpy as np
import pytest

from rangepose import cli, io as rio, sim
from rangepose.lie import Pose
from rangepose.range_model import ConfigurationError
from rangepose.sim import Scenario, TrajectorySpec, default_anchors, default_sensors
from rangepose.solver import Emitted

rng = np.random.default_rng(8)


def sha256(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def test_measurements_roundtrip(tmp_path):
    scn = Scenario(dim=2, trajectory=TrajectorySpec(duration=3.0, dim=2),
                   sigma=0.05, seed=3)
    _, meas = sim.simulate(scn)
    path = tmp_path / "m.jsonl"
    rio.write_measurements(str(path), meas)
    back = rio.read_measurements(str(path))
    assert len(back) == len(meas)
    for a, b in zip(meas, back):
        assert a.time == b.time and a.sensor_id == b.sensor_id
        assert a.anchor_id == b.anchor_id and a.range == b.range
        assert np.isclose(a.variance, b.variance)


def test_truth_roundtrip_2d_and_3d(tmp_path):
    for dim in (2, 3):
        scn = Scenario(dim=dim, trajectory=TrajectorySpec(
            kind="circle", duration=3.0, dim=dim), seed=1)
        truth, meas = sim.simulate(scn)
        times = np.array([m.time for m in meas])
        knots = truth.sample(times)
        path = tmp_path / f"t{dim}.jsonl"
        rio.write_truth(str(path), times, [k.pose for k in knots],
                        [k.twist for k in knots])
        t2, poses, twists = rio.read_truth(str(path))
        assert np.allclose(t2, times)
        for k, p in zip(knots, poses):
            assert np.allclose(k.pose.rotation, p.rotation, atol=1e-12)
            assert np.allclose(k.pose.position, p.position, atol=1e-12)


def test_results_roundtrip(tmp_path):
    d = 6
    emitted = [Emitted(0.1 * k, Pose.identity(2), rng.normal(size=3),
                       np.eye(d) * (1 + k)) for k in range(5)]
    path = tmp_path / "r.jsonl"
    rio.write_results(str(path), emitted)
    back = rio.read_results(str(path))
    assert len(back) == 5
    assert np.allclose(back[3].covariance, 4 * np.eye(d))


def test_wrong_stream_kind_rejected(tmp_path):
    path = tmp_path / "m.jsonl"
    rio.write_measurements(str(path), [])
    with pytest.raises(ConfigurationError):
        rio.read_truth(str(path))


def test_sweep_csv_roundtrip(tmp_path):
    rows = [{"lever_m": 0.1, "sigma_m": 0.05, "pos_rmse_mean": 0.02,
             "pos_rmse_std": 0.003, "ori_rmse_mean": 0.1, "ori_rmse_std": 0.01,
             "runs": 5, "notes": ""}]
    path = tmp_path / "g.csv"
    rio.write_sweep_csv(str(path), rows)
    back = rio.read_sweep_csv(str(path))
    assert back == rows


def test_atomic_write_leaves_no_temp(tmp_path):
    path = tmp_path / "x.txt"
    rio.atomic_write(str(path), "hello")
    assert path.read_text() == "hello"
    assert os.listdir(tmp_path) == ["x.txt"]


def write_scenario(tmp_path, **extra):
    obj = {"dim": 2, "anchors": "default", "sigma": 0.05, "seed": 4,
           "lever_length": 0.5,
           "trajectory": {"kind": "circle", "duration": 6.0, "speed": 0.4,
                          "radius": 2.0}}
    obj.update(extra)
    path = tmp_path / "scen.json"
    path.write_text(json.dumps(obj))
    return str(path)


def write_config(tmp_path, scen_path, **extra):
    scn = rio.scenario_from_dict(json.load(open(scen_path)))
    obj = rio.config_to_dict(sim.make_config(scn, qc=1e-2))
    obj["solver"] = {"init_policy": "windowed"}
    obj.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(obj))
    return str(path)


def test_cli_simulate_estimate_evaluate(tmp_path):
    scen = write_scenario(tmp_path)
    out = str(tmp_path / "data")
    assert cli.main(["simulate", "--config", scen, "--out", out]) == 0
    cfg = write_config(tmp_path, scen)
    res = str(tmp_path / "results.jsonl")
    assert cli.main(["estimate", "--config", cfg,
                     "--measurements", os.path.join(out, "measurements.jsonl"),
                     "--mode", "batch", "--out", res]) == 0
    rep = str(tmp_path / "report.json")
    assert cli.main(["evaluate", "--results", res,
                     "--truth", os.path.join(out, "truth.jsonl"),
                     "--out", rep]) == 0
    report = json.load(open(rep))
    assert report["pos_rmse_m"] < 0.1
    assert report["ori_rmse_rad"] < 0.2


def test_cli_missing_anchors_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"dim": 2, "sigma": 0.05}))
    code = cli.main(["simulate", "--config", str(path),
                     "--out", str(tmp_path / "d")])
    assert code == 2


def test_cli_unobservable_exit_3(tmp_path):
    scen = write_scenario(tmp_path)
    out = str(tmp_path / "data")
    cli.main(["simulate", "--config", scen, "--out", out])
    cfg_path = write_config(tmp_path, scen)
    obj = json.load(open(cfg_path))
    for k in obj["sensors"]["levers"]:
        obj["sensors"]["levers"][k] = [0.0, 0.0]
    open(cfg_path, "w").write(json.dumps(obj))
    code = cli.main(["estimate", "--config", cfg_path,
                     "--measurements", os.path.join(out, "measurements.jsonl"),
                     "--out", str(tmp_path / "r.jsonl")])
    assert code == 3


def test_cli_seed_determinism(tmp_path):
    scen = write_scenario(tmp_path)
    digests = []
    for sub in ("a", "b"):
        out = str(tmp_path / sub)
        assert cli.main(["simulate", "--config", scen, "--seed", "9",
                         "--out", out]) == 0
        digests.append((sha256(os.path.join(out, "measurements.jsonl")),
                        sha256(os.path.join(out, "truth.jsonl"))))
    assert digests[0] == digests[1]


def test_cli_sweep(tmp_path):
    obj = {"scenario": {"dim": 2, "anchors": "default", "seed": 2,
                        "trajectory": {"kind": "circle", "duration": 6.0,
                                       "speed": 0.4, "radius": 2.0}},
           "levers": [0.2, 1.0], "noises": [0.05], "runs": 1, "qc": 0.01}
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(obj))
    out = str(tmp_path / "grid.csv")
    assert cli.main(["sweep", "--config", str(path), "--out", out]) == 0
    rows = rio.read_sweep_csv(out)
    assert len(rows) == 2
