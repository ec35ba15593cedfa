"""File formats: JSONL streams, scenario/config JSON, sweep CSV.

All writes are atomic (write to a temp file in the same directory, then
rename). JSONL files start with a header record carrying schema_version and
the stream kind; readers check both.
"""

import csv
import json
import os
import tempfile

import numpy as np
from scipy.spatial.transform import Rotation

from .config import ProblemConfig, SolverSettings
from .lie import Pose
from .range_model import ConfigurationError, PreprocessPolicy, RangeMeasurement, SensorConfig
from .sim import Scenario, TrajectorySpec, default_anchors, default_sensors

SCHEMA_VERSION = 1


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_jsonl(path, kind, records):
    lines = [json.dumps({"schema_version": SCHEMA_VERSION, "kind": kind})]
    lines.extend(json.dumps(r) for r in records)
    atomic_write(path, "\n".join(lines) + "\n")


def _load_jsonl(path, kind):
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError(f"{path}: empty file")
    header = json.loads(lines[0])
    if header.get("kind") != kind:
        raise ConfigurationError(
            f"{path}: expected a {kind!r} stream, got {header.get('kind')!r}")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(
            f"{path}: unsupported schema_version {header.get('schema_version')!r}")
    return [json.loads(ln) for ln in lines[1:]]


# ------------------------------------------------------------ measurements

def write_measurements(path, measurements):
    _dump_jsonl(path, "measurements", [
        {"t": m.time, "sensor_id": m.sensor_id, "anchor_id": m.anchor_id,
         "range": m.range, "sigma": m.sigma}
        for m in measurements
    ])


def read_measurements(path):
    return [
        RangeMeasurement(r["t"], r["sensor_id"], r["anchor_id"], r["range"],
                         r["sigma"] ** 2)
        for r in _load_jsonl(path, "measurements")
    ]


# ----------------------------------------------------- poses and rotations

def orientation_to_json(R):
    R = np.asarray(R, dtype=float)
    if R.shape == (2, 2):
        return float(np.arctan2(R[1, 0], R[0, 0]))
    return [float(x) for x in Rotation.from_matrix(R).as_quat()]  # x, y, z, w


def orientation_from_json(o):
    if isinstance(o, (int, float)):
        c, s = np.cos(o), np.sin(o)
        return np.array([[c, -s], [s, c]])
    return Rotation.from_quat(o).as_matrix()


# ------------------------------------------------------------ ground truth

def write_truth(path, times, poses, twists):
    _dump_jsonl(path, "truth", [
        {"t": float(t),
         "position": [float(x) for x in pose.position],
         "orientation": orientation_to_json(pose.rotation),
         "twist": [float(x) for x in tw]}
        for t, pose, tw in zip(times, poses, twists)
    ])


def read_truth(path):
    times, poses, twists = [], [], []
    for r in _load_jsonl(path, "truth"):
        times.append(r["t"])
        poses.append(Pose(orientation_from_json(r["orientation"]),
                          np.asarray(r["position"], dtype=float)))
        twists.append(np.asarray(r["twist"], dtype=float))
    return np.asarray(times), poses, twists


# ----------------------------------------------------------------- results

def write_results(path, emitted):
    _dump_jsonl(path, "results", [
        {"t": float(e.time),
         "position": [float(x) for x in e.pose.position],
         "orientation": orientation_to_json(e.pose.rotation),
         "twist": [float(x) for x in e.twist],
         "covariance": [float(x) for x in np.asarray(e.covariance).ravel()]}
        for e in emitted
    ])


def read_results(path):
    from .solver import Emitted
    out = []
    for r in _load_jsonl(path, "results"):
        cov = np.asarray(r["covariance"], dtype=float)
        n = int(round(np.sqrt(cov.size)))
        out.append(Emitted(r["t"],
                           Pose(orientation_from_json(r["orientation"]),
                                np.asarray(r["position"], dtype=float)),
                           np.asarray(r["twist"], dtype=float),
                           cov.reshape(n, n)))
    return out


# --------------------------------------------------------- scenario/config

def _require(obj, key, where):
    if key not in obj:
        raise ConfigurationError(f"{where}: missing field {key!r}")
    return obj[key]


def load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"{path}: {e}") from e


def sensors_from_dict(obj, where="sensors"):
    levers = {k: np.asarray(v, dtype=float)
              for k, v in _require(obj, "levers", where).items()}
    sigmas = {k: float(v) for k, v in _require(obj, "sigmas", where).items()}
    return SensorConfig(levers=levers, sigmas=sigmas)


def scenario_from_dict(obj, path="scenario", seed=None):
    dim = int(obj.get("dim", 3))
    anchors = _require(obj, "anchors", path)
    if anchors == "default":
        anchors = default_anchors(dim)
    else:
        anchors = {k: np.asarray(v, dtype=float) for k, v in anchors.items()}
    if "sensors" in obj:
        sensors = sensors_from_dict(obj["sensors"])
    else:
        sensors = default_sensors(dim, obj.get("lever_length", 0.095),
                                  max(obj.get("sigma", 0.1), 0.01))
    tr = obj.get("trajectory", {})
    spec = TrajectorySpec(
        kind=tr.get("kind", "straight-line"),
        duration=float(tr.get("duration", 20.0)),
        speed=float(tr.get("speed", 0.5)),
        start=tr.get("start"),
        heading=tr.get("heading"),
        radius=float(tr.get("radius", 2.0)),
        qc=float(tr.get("qc", 1e-4)),
        dim=dim,
    )
    return Scenario(
        dim=dim,
        anchors=anchors,
        sensors=sensors,
        trajectory=spec,
        rate=float(obj.get("rate", 17.0)),
        policy=obj.get("policy", "round-robin"),
        sigma=float(obj.get("sigma", 0.0)),
        seed=int(seed if seed is not None else obj.get("seed", 0)),
        dropouts=[tuple(w) for w in obj.get("dropouts", [])],
    )


def solver_from_dict(obj):
    known = {f for f in SolverSettings.__dataclass_fields__}
    bad = set(obj) - known
    if bad:
        raise ConfigurationError(f"solver: unknown fields {sorted(bad)}")
    return SolverSettings(**obj)


def config_from_dict(obj, path="config"):
    dim = int(_require(obj, "dimension", path))
    anchors = {k: np.asarray(v, dtype=float)
               for k, v in _require(obj, "anchors", path).items()}
    sensors = sensors_from_dict(_require(obj, "sensors", path))
    solver = solver_from_dict(obj.get("solver", {}))
    pp = obj.get("preprocess", {})
    policy = PreprocessPolicy(
        mad_gate=float(pp.get("mad_gate", 5.0)),
        window=int(pp.get("window", 15)),
        biases=dict(pp.get("biases", {})),
    )
    try:
        return ProblemConfig(
            dimension=dim,
            anchors=anchors,
            sensors=sensors,
            qc=obj.get("qc"),
            solver=solver,
            preprocess=policy,
            allow_unobservable=bool(obj.get("allow_unobservable", False)),
        )
    except ValueError as e:
        raise ConfigurationError(str(e)) from e


def config_to_dict(config: ProblemConfig):
    qc = np.asarray(config.qc)
    return {
        "dimension": config.dimension,
        "anchors": {k: [float(x) for x in v] for k, v in config.anchors.items()},
        "sensors": {
            "levers": {k: [float(x) for x in v]
                       for k, v in config.sensors.levers.items()},
            "sigmas": dict(config.sensors.sigmas),
        },
        "qc": [float(x) for x in np.diag(qc)],
        "allow_unobservable": config.allow_unobservable,
    }


# --------------------------------------------------------------- sweep CSV

SWEEP_COLUMNS = ["lever_m", "sigma_m", "pos_rmse_mean", "pos_rmse_std",
                 "ori_rmse_mean", "ori_rmse_std", "runs", "notes"]


def write_sweep_csv(path, rows):
    import io as _io
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS)
    w.writeheader()
    for row in rows:
        w.writerow({k: row.get(k, "") for k in SWEEP_COLUMNS})
    atomic_write(path, buf.getvalue())


def read_sweep_csv(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        for k in SWEEP_COLUMNS:
            if k in ("runs",):
                row[k] = int(row[k])
            elif k != "notes":
                row[k] = float(row[k])
    return rows
