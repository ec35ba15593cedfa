"""Factor-graph MAP estimation over trajectory knots.

The graph is a chain: one knot per distinct measurement time, consecutive
knots tied by WNOA prior factors, range measurements attached as unary
factors. The normal equations are block-tridiagonal and are solved by a
block Thomas recursion; the same structure yields marginal covariances
without forming a dense inverse. Both batch optimization and a fixed-lag
smoother (Schur-complement marginalization of old knots) are provided.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _core, lie, motion_prior, range_model
from .config import ProblemConfig, SolverSettings
from .lie import Pose
from .motion_prior import StateKnot
from .range_model import RangeMeasurement

log = logging.getLogger("rangepose.solver")

# Measurements closer in time than this share a knot; prevents an
# ill-conditioned process-noise block between near-simultaneous knots.
KNOT_MERGE_TOL = 1e-4

# Out-of-order tolerance for the fixed-lag stream, seconds.
FLS_ORDER_TOL = 0.010


class NumericalFailure(RuntimeError):
    pass


class SingularInformation(RuntimeError):
    def __init__(self, null_dim):
        super().__init__(f"information matrix is singular; null-space dimension {null_dim}")
        self.null_dim = null_dim


@dataclass
class Trajectory:
    """Estimates for every knot. Poses are a list; twists a (K, d) array."""

    times: np.ndarray
    poses: list
    twists: np.ndarray

    def __len__(self):
        return len(self.poses)

    @property
    def d(self):
        return self.twists.shape[1]

    def knot(self, i) -> StateKnot:
        return StateKnot(float(self.times[i]), self.poses[i], self.twists[i])

    def copy(self) -> "Trajectory":
        return Trajectory(self.times.copy(), list(self.poses), self.twists.copy())

    def retract(self, delta) -> "Trajectory":
        """Apply per-knot right-perturbation updates [dxi; dtwist]."""
        d = self.d
        poses = [lie.compose(p, lie.exp(delta[i, :d])) for i, p in enumerate(self.poses)]
        return Trajectory(self.times.copy(), poses, self.twists + delta[:, d:])


@dataclass
class MarginalPrior:
    """Dense information on the boundary knot left by marginalization.

    Linearization is frozen: `pose` / `twist` are the estimates at
    elimination time and the information acts on perturbations about them.
    """

    pose: Pose
    twist: np.ndarray
    Lambda: np.ndarray
    beta: np.ndarray

    def delta(self, knot: StateKnot) -> np.ndarray:
        dxi = lie.relative_tangent(self.pose, knot.pose)
        return np.concatenate([dxi, knot.twist - self.twist])


@dataclass
class FactorGraph:
    config: ProblemConfig
    times: np.ndarray
    measurements: list                      # list of lists, per knot
    gauge_anchor: StateKnot = None          # weak prior on the first knot
    marginal: MarginalPrior = None

    def __len__(self):
        return len(self.times)


def build_graph(measurements, config: ProblemConfig) -> FactorGraph:
    """One knot per distinct measurement time; times within 1e-4 s merge."""
    if not measurements:
        raise ValueError("no measurements")
    for m in measurements:
        if not (np.isfinite(m.time) and np.isfinite(m.range)):
            raise ValueError("non-finite measurement")
    times = []
    grouped = []
    for m in sorted(measurements, key=lambda m: m.time):
        if times and m.time - times[-1] < KNOT_MERGE_TOL:
            grouped[-1].append(m)
        else:
            times.append(m.time)
            grouped.append([m])
    return FactorGraph(config, np.array(times), grouped)


def multilaterate(measurements, anchors, x0=None, max_iter=25, tol=1e-10):
    """Static position-only Gauss-Newton on a batch of ranges.

    Lever arms are ignored (the target is the body origin); good enough as
    an initial guess. Returns (position, converged).
    """
    pts = np.array([anchors[m.anchor_id] for m in measurements], dtype=float)
    r = np.array([m.range for m in measurements], dtype=float)
    x = np.asarray(x0, dtype=float) if x0 is not None else pts.mean(axis=0)
    if len({m.anchor_id for m in measurements}) < pts.shape[1] + 1:
        return x, False
    for _ in range(max_iter):
        diff = x - pts
        dist = np.linalg.norm(diff, axis=1)
        dist = np.maximum(dist, 1e-9)
        e = r - dist
        J = -diff / dist[:, None]
        JtJ = J.T @ J + 1e-12 * np.eye(x.size)
        try:
            step = -np.linalg.solve(JtJ, J.T @ e)
        except np.linalg.LinAlgError:
            return x, False
        x = x + step
        if np.abs(step).max() < tol:
            return x, True
    return x, False


def _orientation_fit(levers, points):
    """Rotation R (body -> world) minimizing ||x_s - p - R l_s|| over sensors.

    Orthogonal Procrustes with the determinant constrained to +1.
    """
    L = np.asarray(levers, dtype=float)
    X = np.asarray(points, dtype=float)
    M = (X - X.mean(axis=0)).T @ (L - L.mean(axis=0))
    U, _, Vt = np.linalg.svd(M)
    S = np.eye(M.shape[0])
    det = np.linalg.det(U @ Vt)
    S[-1, -1] = 1.0 if det >= 0 else -1.0
    return U @ S @ Vt


def initialize(graph: FactorGraph, config: ProblemConfig, n_init=20):
    """Initial estimates: multilaterated positions, zero twists.

    "static" policy keeps all knots at the first-knot position with identity
    orientation; "windowed" multilaterates each knot over a sliding 1.2 s
    window and, when the lever arms stick out well past the noise floor, fits
    per-knot orientation by multilaterating each sensor separately and
    aligning the body-frame levers to the recovered sensor positions. Twists
    are seeded by finite differences of the windowed estimates.
    """
    dim = config.dimension
    d = lie.tangent_dim(dim)
    K = len(graph)
    flat = [m for group in graph.measurements for m in group]
    centroid = np.mean([v for v in config.anchors.values()], axis=0)

    first, ok = multilaterate(flat[:n_init], config.anchors, x0=centroid)
    report = {"multilateration_converged": ok, "fallback": not ok}
    if not ok:
        first = centroid
    positions = np.tile(first, (K, 1))
    rotations = [None] * K

    if config.solver.init_policy == "windowed":
        levers = config.sensors.levers
        lv = list(levers.values())
        spread = max((np.linalg.norm(a - b) for a in lv for b in lv), default=0.0)
        sig = max(config.sensors.sigmas.values())
        fit_orientation = spread >= 0.5 * sig and len(lv) >= dim
        prev = first
        for i, t in enumerate(graph.times):
            nearby = [m for m in flat if abs(m.time - t) <= 0.6]
            if len(nearby) >= dim + 1:
                x, ok_i = multilaterate(nearby, config.anchors, x0=prev)
                if ok_i:
                    positions[i] = x
                    prev = x
                else:
                    positions[i] = prev
            else:
                positions[i] = prev
            if not fit_orientation:
                continue
            # widen the orientation-fit window when the noise floor is high
            # relative to the lever spread: each sensor needs enough ranges
            # for its multilaterated position to separate from the others
            half = min(1.5, max(0.6, 10.0 * sig / max(spread, 1e-9)))
            wide = [m for m in flat if abs(m.time - t) <= half]
            sensor_pts = {}
            for sid in levers:
                ms = [m for m in wide if m.sensor_id == sid]
                if len(ms) >= dim + 1:
                    xs, ok_s = multilaterate(ms, config.anchors, x0=positions[i])
                    if ok_s:
                        sensor_pts[sid] = xs
            if len(sensor_pts) >= dim:
                sids = sorted(sensor_pts)
                R = _orientation_fit([levers[s] for s in sids],
                                     [sensor_pts[s] for s in sids])
                rotations[i] = R
                lbar = np.mean([levers[s] for s in sids], axis=0)
                xbar = np.mean([sensor_pts[s] for s in sids], axis=0)
                positions[i] = xbar - R @ lbar
                prev = positions[i]
        # fill knots without an orientation fit from their nearest fitted one
        last = None
        for i in range(K):
            if rotations[i] is not None:
                last = rotations[i]
            elif last is not None:
                rotations[i] = last
        last = None
        for i in range(K - 1, -1, -1):
            if rotations[i] is not None:
                last = rotations[i]
            elif last is not None:
                rotations[i] = last

    poses = [Pose(rotations[i] if rotations[i] is not None else np.eye(dim),
                  positions[i]) for i in range(K)]

    twists = np.zeros((K, d))
    if config.solver.init_policy == "windowed" and K > 1:
        for i in range(K):
            j = i
            while j + 1 < K and graph.times[j] - graph.times[i] < 0.5:
                j += 1
            dt = graph.times[j] - graph.times[i]
            if j > i and dt > 1e-6:
                xi = lie.relative_tangent(poses[i], poses[j]) / dt
                n = np.linalg.norm(xi)
                if n < 5.0:
                    twists[i] = xi

    traj = Trajectory(graph.times.copy(), poses, twists)
    graph.gauge_anchor = traj.knot(0)
    return traj, report


def solve_batch(measurements, config: ProblemConfig):
    """Convenience pipeline: build, initialize, optimize. Returns
    (graph, trajectory, stats, init_report)."""
    graph = build_graph(measurements, config)
    traj, report = initialize(graph, config)
    traj, stats = optimize(graph, traj, config.solver)
    return graph, traj, stats, report


def _huber_weight(u, k):
    au = abs(u)
    return 1.0 if au <= k else k / au


def _assemble(graph: FactorGraph, traj: Trajectory, lo=0, hi=None,
              include_gauge=True, include_marginal=True, unary_hi=None):
    """Linearize all factors over knots [lo, hi) into block-tridiagonal form.

    Returns (D, U, b, cost): D[i] the 2dx2d diagonal blocks, U[i] the block
    coupling knots i and i+1, and b the negative gradient, all indexed
    relative to `lo`. Convention: cost = 1/2 sum e'We, step solves H dx = b.
    `unary_hi` caps the knots whose range factors are included (used by
    marginalization, where the boundary knot's factors stay in the graph).
    """
    cfg = graph.config
    settings = cfg.solver
    d = traj.d
    hi = len(graph) if hi is None else hi
    unary_hi = hi if unary_hi is None else unary_hi
    K = hi - lo
    D = np.zeros((K, 2 * d, 2 * d))
    U = np.zeros((max(K - 1, 0), 2 * d, 2 * d))
    b = np.zeros((K, 2 * d))
    cost = 0.0

    for i in range(lo, hi - 1):
        f = motion_prior.prior_factor(traj.knot(i), traj.knot(i + 1), cfg.qc)
        We = f.information @ f.error
        cost += 0.5 * float(f.error @ We)
        k = i - lo
        D[k] += f.J_prev.T @ f.information @ f.J_prev
        D[k + 1] += f.J_next.T @ f.information @ f.J_next
        U[k] += f.J_prev.T @ f.information @ f.J_next
        b[k] -= f.J_prev.T @ We
        b[k + 1] -= f.J_next.T @ We

    huber = settings.robust_kernel == "huber"
    for i in range(lo, unary_hi):
        pose = traj.poses[i]
        k = i - lo
        for m in graph.measurements[i]:
            lever = cfg.sensors.levers[m.sensor_id]
            anchor = cfg.anchors[m.anchor_id]
            e = m.range - range_model.predict_range(pose, lever, anchor)
            Jp = range_model.range_jacobian(pose, lever, anchor)
            w = 1.0 / m.variance
            u = e / m.sigma
            if huber:
                wt = _huber_weight(u, settings.huber_width)
                w *= wt
                kk = settings.huber_width
                cost += 0.5 * u * u * wt if abs(u) <= kk else kk * (abs(u) - 0.5 * kk)
            else:
                cost += 0.5 * u * u
            D[k][:d, :d] += w * np.outer(Jp, Jp)
            b[k][:d] -= w * Jp * e

    if include_gauge and graph.gauge_anchor is not None and lo == 0:
        w = 1.0 / settings.gauge_sigma**2
        delta = np.concatenate([
            lie.relative_tangent(graph.gauge_anchor.pose, traj.poses[0]),
            traj.twists[0] - graph.gauge_anchor.twist,
        ])
        D[0] += w * np.eye(2 * d)
        b[0] -= w * delta
        cost += 0.5 * w * float(delta @ delta)

    if include_marginal and graph.marginal is not None and lo == 0:
        mp = graph.marginal
        delta = mp.delta(traj.knot(0))
        D[0] += mp.Lambda
        b[0] += mp.beta - mp.Lambda @ delta
        cost += 0.5 * float(delta @ mp.Lambda @ delta) - float(mp.beta @ delta)

    return D, U, b, cost


def _evaluate_cost(graph, traj):
    """Total weighted cost without forming Jacobians."""
    cfg = graph.config
    settings = cfg.solver
    cost = 0.0
    for i in range(len(graph) - 1):
        cost += motion_prior.prior_cost(traj.knot(i), traj.knot(i + 1), cfg.qc)
    huber = settings.robust_kernel == "huber"
    for i in range(len(graph)):
        pose = traj.poses[i]
        for m in graph.measurements[i]:
            u = (m.range - range_model.predict_range(
                pose, cfg.sensors.levers[m.sensor_id], cfg.anchors[m.anchor_id])) / m.sigma
            if huber:
                k = settings.huber_width
                cost += 0.5 * u * u * _huber_weight(u, k) if abs(u) <= k else k * (abs(u) - 0.5 * k)
            else:
                cost += 0.5 * u * u
    if graph.gauge_anchor is not None:
        w = 1.0 / settings.gauge_sigma**2
        delta = np.concatenate([
            lie.relative_tangent(graph.gauge_anchor.pose, traj.poses[0]),
            traj.twists[0] - graph.gauge_anchor.twist,
        ])
        cost += 0.5 * w * float(delta @ delta)
    if graph.marginal is not None:
        mp = graph.marginal
        delta = mp.delta(traj.knot(0))
        cost += 0.5 * float(delta @ mp.Lambda @ delta) - float(mp.beta @ delta)
    return cost


def _solve_block_tridiag(D, U, b, damping=0.0):
    """Block Thomas solve of (H + damping * diag(H)) x = b.

    Raises NumericalFailure if a pivot block is not positive definite.
    """
    K = D.shape[0]
    C = []
    y = np.empty_like(b)
    Gs = []
    for i in range(K):
        Ci = D[i].copy()
        if damping:
            Ci[np.diag_indices_from(Ci)] += damping * np.abs(np.diag(D[i]))
        if i > 0:
            G = cho_solve(C[i - 1], U[i - 1])        # C_{i-1}^{-1} U_{i-1}
            Gs.append(G)
            Ci -= U[i - 1].T @ G
            y[i] = b[i] - U[i - 1].T @ cho_solve(C[i - 1], y[i - 1])
        else:
            y[i] = b[i]
        try:
            C.append(cho_factor(Ci, lower=True))
        except np.linalg.LinAlgError:
            raise NumericalFailure(f"indefinite normal equations at knot {i}")
    x = np.empty_like(b)
    x[K - 1] = cho_solve(C[K - 1], y[K - 1])
    for i in range(K - 2, -1, -1):
        x[i] = cho_solve(C[i], y[i] - U[i] @ x[i + 1])
    return x


@dataclass
class SolveStats:
    status: str = "converged"
    iterations: int = 0
    costs: list = field(default_factory=list)
    final_cost: float = np.nan
    message: str = ""


def optimize(graph: FactorGraph, initial: Trajectory, settings: SolverSettings = None):
    """Damped Gauss-Newton (LM) MAP estimation.

    Returns (trajectory, stats). Accepted-step costs are monotone
    non-increasing; on failure to decrease at maximum damping the current
    estimates are still returned with status "not_converged".
    """
    settings = settings or graph.config.solver
    traj = initial.copy()
    lam = settings.lm_lambda0
    stats = SolveStats()

    D, U, b, cost = _assemble(graph, traj)
    stats.costs.append(cost)
    for it in range(settings.max_iterations):
        stats.iterations = it + 1
        accepted = False
        while lam <= settings.lm_lambda_max:
            try:
                delta = _solve_block_tridiag(D, U, b, damping=lam)
            except NumericalFailure as exc:
                if lam >= settings.lm_lambda_max:
                    stats.status = "numerical_failure"
                    stats.message = str(exc)
                    stats.final_cost = cost
                    return traj, stats
                lam *= settings.lm_scale
                continue
            candidate = traj.retract(delta)
            try:
                new_cost = _evaluate_cost(graph, candidate)
            except ValueError:
                new_cost = np.inf     # trial step left the valid state region

            if np.isfinite(new_cost) and new_cost <= cost:
                traj = candidate
                lam = max(lam / settings.lm_scale, 1e-12)
                accepted = True
                break
            lam *= settings.lm_scale
        if not accepted:
            stats.status = "not_converged"
            stats.message = "no cost decrease at maximum damping"
            break
        stats.costs.append(new_cost)
        step_norm = np.abs(delta).max()
        decreased = cost - new_cost
        cost = new_cost
        if decreased < settings.cost_tol * max(cost, 1.0) or step_norm < settings.step_tol:
            stats.status = "converged"
            break
        D, U, b, _ = _assemble(graph, traj)
    else:
        stats.status = "max_iterations"
    stats.final_cost = cost
    return traj, stats


def covariance(graph: FactorGraph, traj: Trajectory, with_cross=False):
    """Marginal covariance blocks of every knot's perturbation.

    Uses the block-tridiagonal inverse recursion (O(K d^3)); never forms a
    dense inverse. With `with_cross`, also returns the (i, i+1) cross
    blocks needed for interpolation covariance.
    """
    D, U, b, _ = _assemble(graph, traj)
    K = D.shape[0]
    C = []
    for i in range(K):
        Ci = D[i].copy()
        if i > 0:
            Ci -= U[i - 1].T @ cho_solve(C[i - 1], U[i - 1])
        try:
            C.append(cho_factor(Ci, lower=True))
        except np.linalg.LinAlgError:
            raise SingularInformation(rank_deficiency(graph, traj))
    n = D.shape[1]
    P = np.empty((K, n, n))
    P[K - 1] = cho_solve(C[K - 1], np.eye(n))
    cross = np.empty((K - 1, n, n)) if with_cross else None
    for i in range(K - 2, -1, -1):
        Ci_inv = cho_solve(C[i], np.eye(n))
        W = cho_solve(C[i], U[i])
        P[i] = Ci_inv + W @ P[i + 1] @ W.T
        P[i] = 0.5 * (P[i] + P[i].T)
        if with_cross:
            cross[i] = -W @ P[i + 1]
    return (P, cross) if with_cross else P


def interpolate_estimate(traj: Trajectory, qc, t, covs=None, cross=None):
    """Posterior state (and covariance) at an off-knot query time.

    The mean follows the motion-prior interpolation between the bracketing
    knots. The covariance combines the joint covariance of the two knots
    through the interpolation gains and adds the conditional covariance of
    the in-between state, so it grows inside measurement gaps:
    P_tau = [Lam Psi] P_joint [Lam Psi]^T + S. Supply `covs` (and `cross`)
    from :func:`covariance` with ``with_cross=True`` to get covariances.
    Frame-transport corrections between neighbouring knot tangents are
    neglected, as usual for this interpolation scheme.
    """
    times = traj.times
    if not (times[0] <= t <= times[-1]):
        raise ValueError(f"query time {t} outside [{times[0]}, {times[-1]}]")
    j = int(np.searchsorted(times, t))
    if j < len(times) and abs(times[j] - t) < KNOT_MERGE_TOL:
        i = j
        knot = traj.knot(i)
        return (knot, covs[i]) if covs is not None else knot
    i = j - 1
    if i >= 0 and abs(times[i] - t) < KNOT_MERGE_TOL:
        knot = traj.knot(i)
        return (knot, covs[i]) if covs is not None else knot
    knot = motion_prior.interpolate(traj.knot(i), traj.knot(i + 1), t, qc)
    if covs is None:
        return knot
    Lam, Psi, S = motion_prior.interpolation_gain(times[i], times[i + 1], t, qc)
    Pab = cross[i] if cross is not None else np.zeros_like(covs[i])
    P = (Lam @ covs[i] @ Lam.T + Psi @ covs[i + 1] @ Psi.T
         + Lam @ Pab @ Psi.T + Psi @ Pab.T @ Lam.T + S)
    return knot, 0.5 * (P + P.T)


def rank_deficiency(graph: FactorGraph, traj: Trajectory, tol=1e-8):
    """Null-space dimension of the gauge-free information matrix."""
    D, U, _, _ = _assemble(graph, traj, include_gauge=False, include_marginal=False)
    K, n, _ = D.shape
    H = np.zeros((K * n, K * n))
    for i in range(K):
        H[i * n:(i + 1) * n, i * n:(i + 1) * n] = D[i]
        if i < K - 1:
            H[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = U[i]
            H[(i + 1) * n:(i + 2) * n, i * n:(i + 1) * n] = U[i].T
    eigs = np.linalg.eigvalsh(H)
    return int(np.sum(eigs < tol * max(eigs.max(), 1.0)))


def marginalize(graph: FactorGraph, traj: Trajectory, horizon_time: float):
    """Schur-complement elimination of knots older than `horizon_time`.

    Linearizes the factors touching eliminated knots at the current
    estimates (frozen thereafter) and folds them into a dense MarginalPrior
    on the oldest retained knot. Returns (graph, trajectory); a no-op if
    nothing is old enough.
    """
    old = int(np.searchsorted(graph.times, horizon_time, side="left"))
    old = min(old, len(graph) - 1)
    if old == 0:
        return graph, traj
    d = traj.d
    n = 2 * d
    # factors touching eliminated knots involve knots [0, old]; the boundary
    # knot's own range factors stay in the retained graph (unary_hi=old)
    D, U, b, _ = _assemble(graph, traj, lo=0, hi=old + 1, unary_hi=old)
    m = old * n
    H = np.zeros(((old + 1) * n, (old + 1) * n))
    for i in range(old + 1):
        H[i * n:(i + 1) * n, i * n:(i + 1) * n] = D[i]
        if i < old:
            H[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = U[i]
            H[(i + 1) * n:(i + 2) * n, i * n:(i + 1) * n] = U[i].T
    bv = b.reshape(-1)
    Hss, Hsb, Hbb = H[:m, :m], H[:m, m:], H[m:, m:]
    bs, bb = bv[:m], bv[m:]
    try:
        cf = cho_factor(Hss + 1e-12 * np.eye(m), lower=True)
    except np.linalg.LinAlgError:
        raise NumericalFailure("marginalization pivot not positive definite")
    Lam = Hbb - Hsb.T @ cho_solve(cf, Hsb)
    Lam = 0.5 * (Lam + Lam.T)
    beta = bb - Hsb.T @ cho_solve(cf, bs)

    boundary = traj.knot(old)
    prior = MarginalPrior(boundary.pose, boundary.twist.copy(), Lam, beta)
    new_graph = FactorGraph(
        graph.config,
        graph.times[old:].copy(),
        [list(g) for g in graph.measurements[old:]],
        gauge_anchor=None,
        marginal=prior,
    )
    new_traj = Trajectory(traj.times[old:].copy(), traj.poses[old:], traj.twists[old:].copy())
    return new_graph, new_traj


@dataclass
class Emitted:
    """One fixed-lag output sample: newest-knot estimate and covariance."""

    time: float
    pose: Pose
    twist: np.ndarray
    covariance: np.ndarray


def run_fls(measurements, config: ProblemConfig, settings: SolverSettings = None):
    """Fixed-lag smoothing over a time-ordered measurement stream.

    Per measurement: extend the window graph, optimize, marginalize knots
    older than the window, emit the newest knot with marginal covariance.
    Out-of-order measurements beyond 10 ms are dropped with a warning.
    """
    settings = settings or config.solver
    cfg = config
    d = lie.tangent_dim(cfg.dimension)
    centroid = np.mean([v for v in cfg.anchors.values()], axis=0)

    graph = None
    traj = None
    out = []
    last_t = -np.inf
    for m in measurements:
        if m.time < last_t - FLS_ORDER_TOL:
            warnings.warn(f"dropping out-of-order measurement at t={m.time:.4f}")
            continue
        last_t = max(last_t, m.time)

        if graph is None:
            start = StateKnot(m.time, Pose(np.eye(cfg.dimension), centroid), np.zeros(d))
            graph = FactorGraph(cfg, np.array([m.time]), [[m]], gauge_anchor=start)
            traj = Trajectory(np.array([m.time]), [start.pose], np.zeros((1, d)))
        elif m.time - graph.times[-1] < KNOT_MERGE_TOL:
            graph.measurements[-1].append(m)
        else:
            dt = m.time - traj.times[-1]
            new_pose = lie.compose(traj.poses[-1], lie.exp(dt * traj.twists[-1]))
            graph.times = np.append(graph.times, m.time)
            graph.measurements.append([m])
            traj.times = np.append(traj.times, m.time)
            traj.poses.append(new_pose)
            traj.twists = np.vstack([traj.twists, traj.twists[-1]])

        traj, stats = optimize(graph, traj, settings)
        if stats.status == "numerical_failure":
            raise NumericalFailure(stats.message)

        if len(graph) > 2:
            graph, traj = marginalize(graph, traj, graph.times[-1] - settings.window)

        D, U, b, _ = _assemble(graph, traj)
        P_last = _last_block_covariance(D, U)
        out.append(Emitted(float(traj.times[-1]), traj.poses[-1], traj.twists[-1].copy(), P_last))
    return out


def _chol_jitter(C):
    """Cholesky with escalating relative jitter; the weakly gauged startup
    phase produces pivots that are PSD only up to roundoff."""
    scale = max(np.abs(np.diag(C)).max(), 1.0)
    for eps in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            return cho_factor(C + eps * scale * np.eye(C.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise NumericalFailure("covariance pivot not positive definite")


def _last_block_covariance(D, U):
    K = D.shape[0]
    C = D[0].copy()
    for i in range(1, K):
        cf = _chol_jitter(C)
        C = D[i] - U[i - 1].T @ cho_solve(cf, U[i - 1])
    cf = _chol_jitter(C)
    P = cho_solve(cf, np.eye(C.shape[0]))
    return 0.5 * (P + P.T)
