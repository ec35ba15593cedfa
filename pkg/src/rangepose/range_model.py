"""Range measurement model: prediction, error, Jacobians, preprocessing.

A range measurement is the distance between a body-mounted sensor (offset
from the body origin by its lever arm) and a fixed anchor at a known world
position. The lever arm is the only term coupling ranges to orientation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import lie
from .lie import Pose


class ConfigurationError(ValueError):
    """Unresolvable ids or inconsistent geometry in the problem setup."""


@dataclass(frozen=True)
class RangeMeasurement:
    time: float
    sensor_id: str
    anchor_id: str
    range: float
    variance: float

    def __post_init__(self):
        if self.range < 0:
            raise ValueError(f"range must be >= 0, got {self.range}")
        if self.variance <= 0:
            raise ValueError(f"variance must be > 0, got {self.variance}")

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass
class SensorConfig:
    """Per-sensor lever arms (body frame) and noise standard deviations."""

    levers: dict[str, np.ndarray]
    sigmas: dict[str, float]

    def __post_init__(self):
        self.levers = {k: np.asarray(v, dtype=float) for k, v in self.levers.items()}
        for sid in self.levers:
            if self.sigmas.get(sid, 0.0) <= 0:
                raise ConfigurationError(f"sensor {sid!r} needs a positive noise sigma")


def check_anchor_map(anchors: dict[str, np.ndarray], dim: int):
    if len(anchors) < 3:
        raise ConfigurationError(f"need >= 3 anchors, got {len(anchors)}")
    ids = sorted(anchors)
    pts = np.array([anchors[i] for i in ids], dtype=float)
    if pts.shape[1] != dim:
        raise ConfigurationError(f"anchor positions must be {dim}-d")
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if np.linalg.norm(pts[i] - pts[j]) < 1e-6:
                raise ConfigurationError(f"anchors {ids[i]!r} and {ids[j]!r} are collocated")


def predict_range(pose: Pose, lever, anchor) -> float:
    """Distance from the sensor world position R @ lever + p to the anchor."""
    s = pose.rotation @ np.asarray(lever, dtype=float) + pose.position
    return float(np.linalg.norm(np.asarray(anchor, dtype=float) - s))


def range_jacobian(pose: Pose, lever, anchor) -> np.ndarray:
    """d(error)/d(right perturbation of the pose), error = measured - predicted.

    With u the unit vector from the sensor toward the anchor, the row is
    u^T [R | -R hat(lever)] in [rho; phi] ordering (unwhitened).
    """
    lever = np.asarray(lever, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    R = pose.rotation
    s = R @ lever + pose.position
    diff = anchor - s
    r = np.linalg.norm(diff)
    if r < 1e-12:
        # sensor exactly at the anchor; direction undefined, gradient zero
        return np.zeros(lie.tangent_dim(pose.dim))
    u = diff / r
    if pose.dim == 2:
        dphi = R @ np.array([-lever[1], lever[0]])
        J_s = np.column_stack([R, dphi[:, None]])
    else:
        J_s = np.hstack([R, -R @ lie.rot_hat(lever)])
    return u @ J_s


def range_error(meas: RangeMeasurement, pose: Pose,
                anchors: dict, sensors: SensorConfig, whiten: bool = True) -> float:
    """measured - predicted, optionally divided by the sensor noise sigma."""
    try:
        lever = sensors.levers[meas.sensor_id]
        anchor = anchors[meas.anchor_id]
    except KeyError as exc:
        raise ConfigurationError(f"unknown id {exc.args[0]!r} in measurement") from None
    e = meas.range - predict_range(pose, lever, anchor)
    return e / meas.sigma if whiten else e


@dataclass
class ObservabilityReport:
    ok: bool
    warnings: list = field(default_factory=list)

    def add(self, msg):
        self.warnings.append(msg)
        self.ok = False


def check_observability(anchors: dict, sensors: SensorConfig, dim: int) -> ObservabilityReport:
    """Static geometry checks; warnings, not hard failures."""
    report = ObservabilityReport(ok=True)
    if len(anchors) < 3:
        report.add(f"too few anchors ({len(anchors)} < 3)")
    levers = [np.asarray(v, dtype=float) for v in sensors.levers.values()]
    need = 2 if dim == 2 else 3
    if len(levers) < need:
        report.add(f"sensors insufficient for {dim}D ({len(levers)} < {need})")
    if levers and max(np.linalg.norm(l) for l in levers) < 1e-9:
        report.add("all lever arms are zero: orientation unobservable")
    if dim == 2 and len(levers) >= 2:
        if max(np.linalg.norm(a - b) for a in levers for b in levers) < 1e-6:
            report.add("2D sensors share one lever arm: orientation unobservable")
    if dim == 3 and len(levers) >= 3:
        L = np.array(levers)
        centered = L - L.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            report.add("3D sensors are collinear: rotation about the sensor line unobservable")
    return report


def load_bias_calibration(path) -> dict[tuple, float]:
    """Calibration file: JSON map of "sensor_id:anchor_id" -> bias meters."""
    with open(path) as fh:
        raw = json.load(fh)
    out = {}
    for key, bias in raw.items():
        sid, _, aid = key.partition(":")
        if not aid:
            raise ConfigurationError(f"bad calibration key {key!r}, want 'sensor:anchor'")
        out[(sid, aid)] = float(bias)
    return out


def estimate_biases(measurements, truth_poses, anchors, sensors) -> dict[tuple, float]:
    """Per sensor-anchor constant bias as median(measured - predicted from truth).

    `truth_poses` maps measurement index -> Pose at that measurement's time.
    """
    resid = {}
    for i, m in enumerate(measurements):
        pred = predict_range(truth_poses[i], sensors.levers[m.sensor_id], anchors[m.anchor_id])
        resid.setdefault((m.sensor_id, m.anchor_id), []).append(m.range - pred)
    return {k: float(np.median(v)) for k, v in resid.items()}


@dataclass
class PreprocessPolicy:
    mad_gate: float = 5.0          # innovation gate in MAD units
    window: int = 15               # rolling window length per sensor-anchor pair
    biases: dict = field(default_factory=dict)


def preprocess(measurements, policy: PreprocessPolicy | None = None):
    """Bias removal followed by a rolling innovation/MAD outlier gate.

    Measurements must be time-sorted. The gate runs per sensor-anchor pair:
    a line is fit to the pair's recent (time, range) history, and a sample
    is rejected when its deviation from the extrapolation exceeds the gate
    in MAD units of the fit residuals. The linear trend absorbs the range
    drift of a moving platform, which a plain rolling median would flag at
    every turning point.
    """
    policy = policy or PreprocessPolicy()
    times = [m.time for m in measurements]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("measurements must be time-sorted")

    prev: dict[tuple, tuple] = {}
    rates: dict[tuple, list] = {}
    out = []
    for m in measurements:
        key = (m.sensor_id, m.anchor_id)
        r = m.range - policy.biases.get(key, 0.0)
        keep = True
        if key in prev:
            t0, r0 = prev[key]
            dt = m.time - t0
            if dt > 3.0:
                # stale pair (dropout or a rejection streak): start over
                # rather than gating against an old trend
                rates.pop(key, None)
                prev[key] = (m.time, r)
                out.append(RangeMeasurement(m.time, m.sensor_id, m.anchor_id,
                                            max(r, 0.0), m.variance))
                continue
            dt = max(dt, 1e-6)
            rate = (r - r0) / dt
            hist = rates.setdefault(key, [])
            if len(hist) >= 5:
                ht = np.array([t for t, _ in hist])
                hr = np.array([x for _, x in hist])
                # linear trend in the rates = constant-acceleration allowance
                coef = np.polyfit(ht - ht[-1], hr, 1)
                resid = hr - np.polyval(coef, ht - ht[-1])
                pred = np.polyval(coef, m.time - ht[-1])
                # the noise floor carries a factor 2: the innovation is noisy
                # and so is the extrapolated trend it is compared against
                scale = max(1.4826 * np.median(np.abs(resid)),
                            2.0 * np.sqrt(2.0) * m.sigma / dt, 1e-3)
                if abs(rate - pred) > policy.mad_gate * scale:
                    keep = False
            if keep:
                hist.append((m.time, rate))
                if len(hist) > policy.window:
                    hist.pop(0)
        if keep:
            prev[key] = (m.time, r)
            out.append(RangeMeasurement(m.time, m.sensor_id, m.anchor_id, max(r, 0.0), m.variance))
    return out
