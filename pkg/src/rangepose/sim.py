"""Measurement simulator: geometry, trajectories, ranging schedule, sweeps.

Defaults follow the real test arena: a 7 x 8 x 3.5 m box with 8 anchors in
the corners, a single distance measurement at 17 Hz, and (in 3D) three
noncollinear body-mounted sensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _core, lie, range_model
from .config import ProblemConfig, SolverSettings
from .lie import Pose
from .motion_prior import StateKnot, make_qc, process_noise
from .range_model import RangeMeasurement, SensorConfig

ARENA = (7.0, 8.0, 3.5)
DEFAULT_RATE = 17.0


def default_anchors(dim: int) -> dict:
    """8 anchors: box corners in 3D, rectangle corners + edge midpoints in 2D."""
    if dim == 3:
        xs, ys, zs = ARENA
        pts = [(x, y, z) for x in (0.0, xs) for y in (0.0, ys) for z in (0.0, zs)]
    else:
        xs, ys = ARENA[:2]
        pts = [(0, 0), (xs, 0), (xs, ys), (0, ys),
               (xs / 2, 0), (xs, ys / 2), (xs / 2, ys), (0, ys / 2)]
    return {f"a{i}": np.array(p, dtype=float) for i, p in enumerate(pts)}


def default_sensors(dim: int, lever_length=0.095, sigma=0.10) -> SensorConfig:
    """Lever arms scaled to the requested length.

    3D: three arms forming a right triangle (noncollinear at any scale);
    2D: two opposed arms along the body x-axis.
    """
    if dim == 3:
        arms = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
                np.array([-1.0, 0.0, 0.0])]
    else:
        arms = [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
    levers = {f"s{i}": lever_length * a for i, a in enumerate(arms)}
    return SensorConfig(levers, {k: sigma for k in levers})


@dataclass
class TrajectorySpec:
    kind: str = "straight-line"    # straight-line | circle | figure-eight | stop-and-go | wnoa-random
    duration: float = 20.0
    speed: float = 0.5
    start: np.ndarray = None
    heading: np.ndarray = None     # unit direction for straight-line kinds
    radius: float = 2.0
    qc: float = 1e-4               # PSD for the wnoa-random kind
    dim: int = 3


class GroundTruth:
    """Analytic truth: pose and body twist at any queried time."""

    def __init__(self, pose_fn, twist_fn, duration, dim):
        self._pose = pose_fn
        self._twist = twist_fn
        self.duration = duration
        self.dim = dim

    def pose(self, t) -> Pose:
        return self._pose(t)

    def twist(self, t) -> np.ndarray:
        return self._twist(t)

    def knot(self, t) -> StateKnot:
        return StateKnot(t, self.pose(t), self.twist(t))

    def sample(self, times):
        return [self.knot(float(t)) for t in times]


def _arena_center(dim):
    return np.array(ARENA[:dim]) / 2.0


def _straight(spec):
    dim = spec.dim
    start = np.asarray(spec.start, dtype=float) if spec.start is not None else \
        _arena_center(dim) - 0.5 * spec.speed * spec.duration * _default_heading(dim)
    u = np.asarray(spec.heading, dtype=float) if spec.heading is not None else _default_heading(dim)
    u = u / np.linalg.norm(u)
    d = lie.tangent_dim(dim)
    tw = np.zeros(d)
    tw[:dim] = spec.speed * u

    def pose(t):
        return Pose(np.eye(dim), start + spec.speed * t * u)

    return GroundTruth(pose, lambda t: tw.copy(), spec.duration, dim)


def _default_heading(dim):
    u = np.ones(dim)
    if dim == 3:
        u[2] = 0.0
    return u / np.linalg.norm(u)


def _circle(spec):
    dim = spec.dim
    c = np.asarray(spec.start, dtype=float) if spec.start is not None else _arena_center(dim)
    r = spec.radius
    om = spec.speed / r
    d = lie.tangent_dim(dim)
    tw = np.zeros(d)
    tw[0] = spec.speed
    tw[-1] = om           # yaw rate; body x tracks the tangent

    def pose(t):
        a = om * t
        pos = c.copy()
        pos[0] += r * np.sin(a)
        pos[1] += r * (1.0 - np.cos(a))
        yaw = a
        if dim == 2:
            R = _core.so_exp(np.array([yaw]))
        else:
            R = _core.so_exp(np.array([0.0, 0.0, yaw]))
        return Pose(R, pos)

    return GroundTruth(pose, lambda t: tw.copy(), spec.duration, dim)


def _figure_eight(spec):
    """Lemniscate of Gerono scaled to the radius, yaw tracking the velocity."""
    dim = spec.dim
    c = np.asarray(spec.start, dtype=float) if spec.start is not None else _arena_center(dim)
    r = spec.radius
    om = spec.speed / r

    def xy(t):
        a = om * t
        return np.array([r * np.sin(a), r * np.sin(a) * np.cos(a)])

    def dxy(t):
        a = om * t
        return om * np.array([r * np.cos(a), r * np.cos(2 * a)])

    def ddxy(t):
        a = om * t
        return om * om * np.array([-r * np.sin(a), -2 * r * np.sin(2 * a)])

    def yaw(t):
        v = dxy(t)
        return np.arctan2(v[1], v[0])

    def yawrate(t):
        v, a = dxy(t), ddxy(t)
        return (v[0] * a[1] - v[1] * a[0]) / (v @ v)

    def pose(t):
        pos = c.copy()
        pos[:2] += xy(t)
        th = yaw(t)
        R = _core.so_exp(np.array([th]) if dim == 2 else np.array([0.0, 0.0, th]))
        return Pose(R, pos)

    def twist(t):
        d = lie.tangent_dim(dim)
        tw = np.zeros(d)
        R2 = _core.so_exp(np.array([yaw(t)]))
        tw[:2] = R2.T @ dxy(t)
        tw[-1] = yawrate(t)
        return tw

    return GroundTruth(pose, twist, spec.duration, dim)


def _stop_and_go(spec):
    """Straight line with a trapezoidal speed profile repeated per segment.

    Each dwell/move cycle lasts 1/4 of the duration; speed ramps are linear
    so the twist stays the analytic derivative away from the ramp corners.
    """
    dim = spec.dim
    base = _straight(spec)
    T = spec.duration
    cycle = T / 4.0

    def profile(t):
        # position along the path as a fraction of speed*t, plus speed
        s = 0.0
        v = 0.0
        tt = t
        full, rem = divmod(tt, cycle)
        # within a cycle: dwell 30%, ramp 20%, cruise 30%, ramp 20%
        marks = np.array([0.3, 0.2, 0.3, 0.2]) * cycle
        seg_s = spec.speed * (0.5 * marks[1] + marks[2] + 0.5 * marks[3])
        s += full * seg_s
        t0 = 0.0
        for k, mlen in enumerate(marks):
            if rem <= t0 + mlen or k == 3:
                dt = rem - t0
                if k == 0:
                    v = 0.0
                elif k == 1:
                    v = spec.speed * dt / mlen
                    s += 0.5 * v * dt
                elif k == 2:
                    v = spec.speed
                    s += 0.5 * spec.speed * marks[1] + v * dt
                else:
                    v = spec.speed * max(1.0 - dt / mlen, 0.0)
                    s += 0.5 * spec.speed * marks[1] + spec.speed * marks[2] \
                        + 0.5 * (spec.speed + v) * dt
                break
            t0 += mlen
        return s, v

    u = np.asarray(spec.heading, dtype=float) if spec.heading is not None else _default_heading(dim)
    u = u / np.linalg.norm(u)
    start = np.asarray(spec.start, dtype=float) if spec.start is not None else \
        _arena_center(dim) - 0.25 * spec.speed * spec.duration * u

    def pose(t):
        s, _ = profile(t)
        return Pose(np.eye(dim), start + s * u)

    def twist(t):
        _, v = profile(t)
        d = lie.tangent_dim(dim)
        tw = np.zeros(d)
        tw[:dim] = v * u
        return tw

    return GroundTruth(pose, twist, spec.duration, dim)


class SampledTruth(GroundTruth):
    """Truth given at discrete knots (WNOA sample); queries interpolate."""

    def __init__(self, knots, Qc):
        self.knots = knots
        self.Qc = Qc
        super().__init__(self._pose_at, self._twist_at, knots[-1].time, knots[0].pose.dim)

    def knot(self, t):
        times = np.array([k.time for k in self.knots])
        i = int(np.searchsorted(times, t))
        if i < len(times) and abs(times[i] - t) < 1e-9:
            return self.knots[i]
        if i > 0 and abs(times[i - 1] - t) < 1e-9:
            return self.knots[i - 1]
        if i == 0 or i == len(times):
            raise ValueError(f"time {t} outside the sampled span")
        from .motion_prior import interpolate
        return interpolate(self.knots[i - 1], self.knots[i], t, self.Qc)

    def _pose_at(self, t):
        return self.knot(t).pose

    def _twist_at(self, t):
        return self.knot(t).twist


def _wnoa_random(spec, rng=None):
    """Ground truth drawn from the WNOA prior itself on a 17 Hz knot grid."""
    rng = rng or np.random.default_rng(0)
    dim = spec.dim
    d = lie.tangent_dim(dim)
    Qc = make_qc(dim, spec.qc)
    dt = 1.0 / DEFAULT_RATE
    n = int(round(spec.duration / dt)) + 1

    start = np.asarray(spec.start, dtype=float) if spec.start is not None else _arena_center(dim)
    u = _default_heading(dim)
    tw = np.zeros(d)
    tw[:dim] = spec.speed * u
    knots = [StateKnot(0.0, Pose(np.eye(dim), start - 0.5 * spec.speed * spec.duration * u), tw)]
    L = np.linalg.cholesky(process_noise(dt, Qc))
    for k in range(1, n):
        prev = knots[-1]
        noise = L @ rng.standard_normal(2 * d)
        xi = dt * prev.twist + noise[:d]
        xi_dot = _core.jr_inv(xi) @ prev.twist + noise[d:]
        pose = lie.compose(prev.pose, lie.exp(xi))
        twist = _core.jr(xi) @ xi_dot
        knots.append(StateKnot(k * dt, pose, twist))
    return SampledTruth(knots, Qc)


_KINDS = {
    "straight-line": _straight,
    "circle": _circle,
    "figure-eight": _figure_eight,
    "stop-and-go": _stop_and_go,
}


def generate_trajectory(spec: TrajectorySpec, rng=None) -> GroundTruth:
    if spec.kind == "wnoa-random":
        return _wnoa_random(spec, rng)
    try:
        return _KINDS[spec.kind](spec)
    except KeyError:
        raise ValueError(f"unknown trajectory kind {spec.kind!r}") from None


@dataclass
class Scenario:
    dim: int = 3
    anchors: dict = None
    sensors: SensorConfig = None
    trajectory: TrajectorySpec = None
    rate: float = DEFAULT_RATE
    policy: str = "round-robin"       # round-robin | uniform-random
    sigma: float = 0.0
    seed: int = 0
    dropouts: list = field(default_factory=list)   # [(start, end), ...]

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.anchors is None:
            self.anchors = default_anchors(self.dim)
        if self.sensors is None:
            self.sensors = default_sensors(self.dim, sigma=max(self.sigma, 0.10))
        if self.trajectory is None:
            self.trajectory = TrajectorySpec(dim=self.dim)
        self.trajectory.dim = self.dim
        for a, b in self.dropouts:
            if not (0 <= a < b <= self.trajectory.duration):
                raise ValueError(f"dropout window ({a}, {b}) outside the trajectory span")


def schedule_measurements(scenario: Scenario, truth: GroundTruth):
    """One measurement per tick at the scenario rate.

    Round-robin cycles sensors fastest and anchors once per sensor sweep;
    uniform-random draws both ids each tick. Ticks inside dropout windows
    are omitted. Reported variance is max(sigma, 1 cm)^2 so that noiseless
    runs stay numerically well posed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, 1]))
    sensor_ids = sorted(scenario.sensors.levers)
    anchor_ids = sorted(scenario.anchors)
    n_ticks = int(np.floor(truth.duration * scenario.rate))
    var = max(scenario.sigma, 0.01) ** 2

    out = []
    for k in range(n_ticks):
        t = k / scenario.rate
        if any(a <= t <= b for a, b in scenario.dropouts):
            continue
        if scenario.policy == "round-robin":
            sid = sensor_ids[k % len(sensor_ids)]
            aid = anchor_ids[(k // len(sensor_ids)) % len(anchor_ids)]
        elif scenario.policy == "uniform-random":
            sid = sensor_ids[rng.integers(len(sensor_ids))]
            aid = anchor_ids[rng.integers(len(anchor_ids))]
        else:
            raise ValueError(f"unknown scheduling policy {scenario.policy!r}")
        pose = truth.pose(t)
        r = range_model.predict_range(pose, scenario.sensors.levers[sid], scenario.anchors[aid])
        if scenario.sigma > 0:
            r += scenario.sigma * rng.standard_normal()
        out.append(RangeMeasurement(t, sid, aid, max(r, 0.0), var))
    return out


def simulate(scenario: Scenario):
    """Generate (truth, measurements) for a scenario. Deterministic in seed."""
    traj_rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, 0]))
    truth = generate_trajectory(scenario.trajectory, rng=traj_rng)
    return truth, schedule_measurements(scenario, truth)


def make_config(scenario: Scenario, qc=0.1, solver: SolverSettings = None) -> ProblemConfig:
    return ProblemConfig(
        dimension=scenario.dim,
        anchors=dict(scenario.anchors),
        sensors=scenario.sensors,
        qc=qc,
        solver=solver or SolverSettings(),
    )


def sweep(template: Scenario, lever_lengths, noise_levels, runs=5, qc=0.1,
          solver: SolverSettings = None, progress=None):
    """(lever x noise) grid of position/orientation RMSE statistics.

    Each cell runs the full simulate -> estimate -> evaluate pipeline
    `runs` times with distinct seeds; estimator divergence is recorded as
    NaN, not raised. Returns a list of row dicts.
    """
    from . import evaluate as ev
    from . import solver as sv

    rows = []
    for ci, lever in enumerate(lever_lengths):
        if lever <= 0:
            raise ValueError("lever lengths must be positive")
        for cj, sigma in enumerate(noise_levels):
            pos, ori, notes = [], [], []
            for run in range(runs):
                seed = int(np.random.SeedSequence(
                    [template.seed, ci, cj, run]).generate_state(1)[0] % 2**31)
                scen = Scenario(
                    dim=template.dim,
                    anchors=dict(template.anchors),
                    sensors=default_sensors(template.dim, lever_length=lever,
                                            sigma=max(sigma, 0.10)),
                    trajectory=TrajectorySpec(**vars(template.trajectory)),
                    rate=template.rate,
                    policy=template.policy,
                    sigma=sigma,
                    seed=seed,
                    dropouts=list(template.dropouts),
                )
                truth, meas = simulate(scen)
                cfg = make_config(scen, qc=qc, solver=solver)
                try:
                    graph, traj, stats, _ = sv.solve_batch(meas, cfg)
                except (sv.NumericalFailure, np.linalg.LinAlgError) as exc:
                    pos.append(np.nan)
                    ori.append(np.nan)
                    notes.append(str(exc))
                    continue
                if stats.status in ("numerical_failure", "not_converged"):
                    pos.append(np.nan)
                    ori.append(np.nan)
                    notes.append(stats.status)
                    continue
                p_rmse, o_rmse = ev.rmse_vs_truth(traj, truth)
                pos.append(p_rmse)
                ori.append(o_rmse)
            rows.append({
                "lever_m": float(lever),
                "sigma_m": float(sigma),
                "pos_rmse_mean": float(np.nanmean(pos)),
                "pos_rmse_std": float(np.nanstd(pos)),
                "ori_rmse_mean": float(np.nanmean(ori)),
                "ori_rmse_std": float(np.nanstd(ori)),
                "runs": runs,
                "notes": ";".join(notes),
            })
            if progress:
                progress(rows[-1])
    return rows
