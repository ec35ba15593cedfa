"""Range measurement model, observability checks, and preprocessing."""

import numpy as np
import pytest

from rangepose import lie
from rangepose.lie import Pose
from rangepose.range_model import (ConfigurationError, PreprocessPolicy,
                                   RangeMeasurement, SensorConfig,
                                   check_anchor_map, check_observability,
                                   estimate_biases, load_bias_calibration,
                                   predict_range, preprocess, range_error,
                                   range_jacobian)

rng = np.random.default_rng(2)


def test_predict_range_pythagorean():
    pose = Pose(np.eye(2), np.array([0.0, 0.0]))
    lever = np.array([0.0, 3.0])
    anchor = np.array([4.0, 0.0])
    assert np.isclose(predict_range(pose, lever, anchor), 5.0)


def test_predict_range_uses_rotated_lever():
    th = 0.7
    c, s = np.cos(th), np.sin(th)
    pose = Pose(np.array([[c, -s], [s, c]]), np.array([1.0, 2.0]))
    lever = np.array([0.5, 0.0])
    anchor = np.array([-2.0, 1.0])
    sensor = pose.position + pose.rotation @ lever
    assert np.isclose(predict_range(pose, lever, anchor),
                      np.linalg.norm(anchor - sensor))


@pytest.mark.parametrize("dim", [2, 3])
def test_range_jacobian_matches_finite_differences(dim):
    d = lie.tangent_dim(dim)
    for _ in range(20):
        pose = lie.exp(rng.normal(size=d) * 0.6)
        lever = rng.normal(size=dim) * 0.4
        anchor = rng.normal(size=dim) * 3.0 + 5.0
        r = predict_range(pose, lever, anchor) + 0.1
        J = range_jacobian(pose, lever, anchor)
        eps = 1e-7
        for k in range(d):
            e = np.zeros(d)
            e[k] = eps
            ep = r - predict_range(lie.compose(pose, lie.exp(e)), lever, anchor)
            em = r - predict_range(lie.compose(pose, lie.exp(-e)), lever, anchor)
            assert np.isclose(J[k], (ep - em) / (2 * eps), atol=1e-5)


def test_range_jacobian_zero_lever_has_no_rotation_part():
    pose = lie.exp(rng.normal(size=6) * 0.5)
    J = range_jacobian(pose, np.zeros(3), np.array([5.0, 1.0, 2.0]))
    assert np.allclose(J[3:], 0.0)


def test_range_jacobian_sensor_at_anchor_is_zero():
    pose = Pose.identity(2)
    lever = np.array([1.0, 0.0])
    anchor = np.array([1.0, 0.0])
    assert np.allclose(range_jacobian(pose, lever, anchor), 0.0)


def test_anchor_map_validation():
    with pytest.raises(ConfigurationError):
        check_anchor_map({"a": [0, 0], "b": [1, 0]}, 2)
    with pytest.raises(ConfigurationError):
        check_anchor_map({"a": [0, 0], "b": [1e-9, 0], "c": [1, 1]}, 2)
    check_anchor_map({"a": [0, 0], "b": [1, 0], "c": [0, 1]}, 2)


def test_observability_flags():
    anchors3 = {f"a{i}": p for i, p in enumerate(
        [[0, 0, 0], [5, 0, 0], [0, 5, 0], [0, 0, 3]])}
    good = SensorConfig({"s0": [0.1, 0, 0], "s1": [0, 0.1, 0], "s2": [-0.1, 0, 0]},
                        {"s0": 0.1, "s1": 0.1, "s2": 0.1})
    assert check_observability(anchors3, good, 3).ok

    zero = SensorConfig({"s0": [0, 0, 0]}, {"s0": 0.1})
    rep = check_observability(anchors3, zero, 3)
    assert not rep.ok and any("lever" in w for w in rep.warnings)

    collinear = SensorConfig({"s0": [0.1, 0, 0], "s1": [0.2, 0, 0], "s2": [-0.1, 0, 0]},
                             {"s0": 0.1, "s1": 0.1, "s2": 0.1})
    rep = check_observability(anchors3, collinear, 3)
    assert not rep.ok


def test_bias_calibration_roundtrip(tmp_path):
    import json
    path = tmp_path / "cal.json"
    path.write_text(json.dumps({"s0:a1": 0.12, "s1:a0": -0.05}))
    cal = load_bias_calibration(str(path))
    assert cal[("s0", "a1")] == 0.12
    assert cal[("s1", "a0")] == -0.05
    path.write_text(json.dumps({"nocolon": 0.1}))
    with pytest.raises(ConfigurationError):
        load_bias_calibration(str(path))


def test_estimate_biases_recovers_injected_offsets():
    anchors = {"a0": np.array([0.0, 0.0]), "a1": np.array([7.0, 0.0]),
               "a2": np.array([0.0, 8.0])}
    sensors = SensorConfig({"s0": np.array([0.2, 0.0])}, {"s0": 0.05})
    true_bias = {("s0", "a0"): 0.3, ("s0", "a1"): -0.2, ("s0", "a2"): 0.0}
    poses, meas = [], []
    for k in range(60):
        pose = Pose(np.eye(2), np.array([2.0 + 0.05 * k, 3.0]))
        aid = f"a{k % 3}"
        r = predict_range(pose, sensors.levers["s0"], anchors[aid])
        r += true_bias[("s0", aid)] + 0.01 * rng.standard_normal()
        poses.append(pose)
        meas.append(RangeMeasurement(0.1 * k, "s0", aid, r, 0.05**2))
    est = estimate_biases(meas, poses, anchors, sensors)
    for key, b in true_bias.items():
        assert abs(est[key] - b) < 0.01


def _walk_measurements(n=300, sigma=0.05, seed=0):
    r = np.random.default_rng(seed)
    anchors = {"a0": np.array([0.0, 0.0]), "a1": np.array([7.0, 0.0]),
               "a2": np.array([0.0, 8.0]), "a3": np.array([7.0, 8.0])}
    meas = []
    for k in range(n):
        t = k / 17.0
        pos = np.array([3.5 + 1.5 * np.sin(0.2 * t), 4.0 + 1.5 * np.cos(0.2 * t)])
        aid = f"a{k % 4}"
        rr = np.linalg.norm(anchors[aid] - pos) + sigma * r.standard_normal()
        meas.append(RangeMeasurement(t, "s0", aid, rr, sigma**2))
    return meas


def test_preprocess_requires_sorted_input():
    meas = _walk_measurements(20)
    with pytest.raises(ValueError):
        preprocess(list(reversed(meas)))


def test_preprocess_keeps_clean_data():
    meas = _walk_measurements(300)
    kept = preprocess(meas)
    assert len(kept) >= 0.95 * len(meas)


def test_preprocess_rejects_gross_outliers():
    meas = _walk_measurements(300)
    spiked = list(meas)
    bad = [100, 150, 200]
    for i in bad:
        m = meas[i]
        spiked[i] = RangeMeasurement(m.time, m.sensor_id, m.anchor_id,
                                     m.range + 5.0, m.variance)
    kept = preprocess(spiked)
    kept_keys = {(m.time, m.anchor_id) for m in kept}
    for i in bad:
        assert (meas[i].time, meas[i].anchor_id) not in kept_keys


def test_preprocess_subtracts_biases():
    meas = _walk_measurements(50, sigma=0.01)
    biased = [RangeMeasurement(m.time, m.sensor_id, m.anchor_id,
                               m.range + 0.5, m.variance) for m in meas]
    policy = PreprocessPolicy(biases={("s0", a): 0.5 for a in ("a0", "a1", "a2", "a3")})
    out = preprocess(biased, policy)
    assert len(out) == len(meas)
    assert np.allclose([m.range for m in out], [m.range for m in meas])
