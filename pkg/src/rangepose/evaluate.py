"""Estimation metrics: RMSE, 3-sigma coverage, NEES consistency."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from . import _core, lie
from .lie import Pose

# Truth samples farther than this from an estimate timestamp are rejected.
TIME_TOL = 0.005


@dataclass
class EvaluationReport:
    position_rmse: float
    orientation_rmse: float
    n_samples: int
    position_errors: np.ndarray = None      # (N, n) per-axis
    orientation_errors: np.ndarray = None   # (N,) geodesic angles
    coverage_3sigma: np.ndarray = None      # per state axis, or None without covariances
    runtime_s: float = np.nan

    def __post_init__(self):
        if self.position_rmse < 0 or self.orientation_rmse < 0:
            raise ValueError("RMSE must be nonnegative")


def pose_errors(est_poses, truth_poses):
    """Per-sample position error vectors and geodesic orientation angles."""
    pos = np.array([t.position - e.position for e, t in zip(est_poses, truth_poses)])
    ang = np.array([lie.rotation_geodesic(e.rotation, t.rotation)
                    for e, t in zip(est_poses, truth_poses)])
    return pos, ang


def rmse(est_poses, truth_poses):
    pos, ang = pose_errors(est_poses, truth_poses)
    return float(np.sqrt(np.mean(np.sum(pos**2, axis=1)))), float(np.sqrt(np.mean(ang**2)))


def rmse_vs_truth(traj, truth):
    """RMSE of a solved trajectory against an analytic GroundTruth."""
    truth_poses = [truth.pose(float(t)) for t in traj.times]
    return rmse(traj.poses, truth_poses)


def interpolate_truth(truth_times, truth_poses, t):
    """Constant-velocity pose interpolation (log/exp midpoint) of truth samples."""
    i = int(np.searchsorted(truth_times, t))
    if i < len(truth_times) and abs(truth_times[i] - t) <= TIME_TOL:
        return truth_poses[i]
    if i == 0 or i == len(truth_times):
        return None
    t0, t1 = truth_times[i - 1], truth_times[i]
    alpha = (t - t0) / (t1 - t0)
    xi = lie.relative_tangent(truth_poses[i - 1], truth_poses[i])
    return lie.compose(truth_poses[i - 1], lie.exp(alpha * xi))


def state_error(est_pose: Pose, est_twist, truth_pose: Pose, truth_twist):
    """Right-perturbation state error [log(est^-1 truth); dtwist]."""
    dxi = lie.relative_tangent(est_pose, truth_pose)
    return np.concatenate([dxi, np.asarray(truth_twist, dtype=float) - np.asarray(est_twist, dtype=float)])


def coverage_3sigma(errors, covariances):
    """Fraction of samples with |error_axis| <= 3 sqrt(P_axis), per axis."""
    errors = np.asarray(errors, dtype=float)
    sig = np.sqrt(np.maximum(np.array([np.diag(P) for P in covariances]), 0.0))
    return (np.abs(errors) <= 3.0 * sig).mean(axis=0)


def nees(errors, covariances):
    """Per-sample normalized estimation error squared."""
    out = np.empty(len(errors))
    for i, (e, P) in enumerate(zip(errors, covariances)):
        out[i] = float(e @ np.linalg.solve(P, e))
    return out


def nees_bounds(dim, n_runs, confidence=0.95):
    """Interval for the mean of n_runs iid chi^2(dim) NEES samples."""
    a = (1.0 - confidence) / 2.0
    return (chi2.ppf(a, n_runs * dim) / n_runs, chi2.ppf(1.0 - a, n_runs * dim) / n_runs)


def evaluate(est_times, est_poses, truth_times, truth_poses,
             est_twists=None, covariances=None, alignment="time-interpolated"):
    """Match estimates to truth by timestamp and compute the report.

    `alignment="none"` requires exact (within 5 ms) timestamp matches;
    "time-interpolated" interpolates truth between samples.
    """
    matched_e, matched_t, matched_P = [], [], []
    truth_times = np.asarray(truth_times, dtype=float)
    for k, t in enumerate(est_times):
        if alignment == "none":
            i = int(np.argmin(np.abs(truth_times - t)))
            tp = truth_poses[i] if abs(truth_times[i] - t) <= TIME_TOL else None
        else:
            tp = interpolate_truth(truth_times, truth_poses, float(t))
        if tp is None:
            continue
        matched_e.append(est_poses[k])
        matched_t.append(tp)
        if covariances is not None:
            matched_P.append(covariances[k])
    if len(matched_e) < 10:
        raise ValueError(f"only {len(matched_e)} overlapping samples; need >= 10")

    pos, ang = pose_errors(matched_e, matched_t)
    cov = None
    if covariances is not None:
        # per-axis coverage over the pose part of the state covariance
        n = pos.shape[1]
        d = lie.tangent_dim(n)
        pose_P = [P[:n, :n] for P in matched_P]
        cov = coverage_3sigma(pos, pose_P)
    return EvaluationReport(
        position_rmse=float(np.sqrt(np.mean(np.sum(pos**2, axis=1)))),
        orientation_rmse=float(np.sqrt(np.mean(ang**2))),
        n_samples=len(matched_e),
        position_errors=pos,
        orientation_errors=ang,
        coverage_3sigma=cov,
    )


def spearman(x, y):
    from scipy.stats import spearmanr
    rho = spearmanr(x, y).statistic
    return float(rho)
