"""White-noise-on-acceleration GP motion prior on local pose variables.

The prior treats body acceleration as zero-mean white noise with power
spectral density Qc. Between consecutive trajectory knots it contributes a
binary factor whose error vanishes exactly on constant-velocity motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core, lie
from .lie import Pose

# Twist magnitude sanity bound (m/s and rad/s mixed); generous on purpose.
TWIST_BOUND = 100.0


@dataclass(frozen=True)
class StateKnot:
    """One trajectory node: time, pose, and body-centric twist."""

    time: float
    pose: Pose
    twist: np.ndarray

    def __post_init__(self):
        tw = np.asarray(self.twist, dtype=float)
        if tw.shape != (lie.tangent_dim(self.pose.dim),):
            raise ValueError(f"twist shape {tw.shape} does not match pose dim {self.pose.dim}")
        if not np.all(np.isfinite(tw)) or np.linalg.norm(tw) >= TWIST_BOUND:
            raise ValueError("twist is non-finite or implausibly large")
        object.__setattr__(self, "twist", tw)


def make_qc(dim: int, q=0.1) -> np.ndarray:
    """Build a Qc PSD matrix from a scalar or per-axis diagonal."""
    d = lie.tangent_dim(dim)
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        Qc = float(q) * np.eye(d)
    elif q.shape == (d,):
        Qc = np.diag(q)
    elif q.shape == (d, d):
        Qc = q.copy()
    else:
        raise ValueError(f"Qc spec shape {q.shape} incompatible with tangent dim {d}")
    check_qc(Qc)
    return Qc


def check_qc(Qc: np.ndarray):
    if not np.allclose(Qc, Qc.T, atol=1e-12):
        raise ValueError("Qc must be symmetric")
    if np.linalg.eigvalsh(Qc).min() <= 0:
        raise ValueError("Qc must be positive definite")


def transition(dt: float, d: int) -> np.ndarray:
    """State transition over dt for the [xi; xi_dot] stacked local state."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    out = np.eye(2 * d)
    out[:d, d:] = dt * np.eye(d)
    return out


def process_noise(dt: float, Qc: np.ndarray) -> np.ndarray:
    """Integrated process noise over dt: [[dt^3/3, dt^2/2], [dt^2/2, dt]] x Qc."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    d = Qc.shape[0]
    out = np.empty((2 * d, 2 * d))
    out[:d, :d] = (dt**3 / 3.0) * Qc
    out[:d, d:] = (dt**2 / 2.0) * Qc
    out[d:, :d] = (dt**2 / 2.0) * Qc
    out[d:, d:] = dt * Qc
    return out


def process_noise_inv(dt: float, Qc: np.ndarray) -> np.ndarray:
    """Closed-form inverse of :func:`process_noise` (2x2 block inverse)."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    d = Qc.shape[0]
    Qci = np.linalg.inv(Qc)
    out = np.empty((2 * d, 2 * d))
    out[:d, :d] = (12.0 / dt**3) * Qci
    out[:d, d:] = (-6.0 / dt**2) * Qci
    out[d:, :d] = (-6.0 / dt**2) * Qci
    out[d:, d:] = (4.0 / dt) * Qci
    return out


def _check_pair(prev: StateKnot, nxt: StateKnot) -> float:
    dt = nxt.time - prev.time
    if dt <= 0:
        raise ValueError(f"knot times must be strictly increasing, got dt={dt}")
    return dt


def prior_error(prev: StateKnot, nxt: StateKnot) -> np.ndarray:
    """Motion-prior error: zero iff the pair is exactly constant-velocity."""
    dt = _check_pair(prev, nxt)
    xi = lie.relative_tangent(prev.pose, nxt.pose)
    e1 = dt * prev.twist - xi
    e2 = prev.twist - _core.jr_inv(xi) @ nxt.twist
    return np.concatenate([e1, e2])


def prior_jacobians(prev: StateKnot, nxt: StateKnot):
    """Error Jacobians w.r.t. the right perturbations [dxi; dtwist] of each knot."""
    dt = _check_pair(prev, nxt)
    d = prev.twist.shape[0]
    xi = lie.relative_tangent(prev.pose, nxt.pose)
    Jri = _core.jr_inv(xi)
    Jli = _core.jl_inv(xi)
    D = _core.djrinv_w(xi, nxt.twist)

    Ja = np.zeros((2 * d, 2 * d))
    Ja[:d, :d] = Jli                 # d(xi)/d(prev) = -Jl_inv
    Ja[:d, d:] = dt * np.eye(d)
    Ja[d:, :d] = D @ Jli
    Ja[d:, d:] = np.eye(d)

    Jb = np.zeros((2 * d, 2 * d))
    Jb[:d, :d] = -Jri
    Jb[d:, :d] = -D @ Jri
    Jb[d:, d:] = -Jri
    return Ja, Jb


@dataclass(frozen=True)
class PriorFactor:
    """Linearized WNOA factor between two consecutive knots."""

    error: np.ndarray
    J_prev: np.ndarray
    J_next: np.ndarray
    information: np.ndarray

    def cost(self) -> float:
        return 0.5 * float(self.error @ self.information @ self.error)


def prior_factor(prev: StateKnot, nxt: StateKnot, Qc: np.ndarray) -> PriorFactor:
    dt = _check_pair(prev, nxt)
    e = prior_error(prev, nxt)
    Ja, Jb = prior_jacobians(prev, nxt)
    return PriorFactor(e, Ja, Jb, process_noise_inv(dt, Qc))


def prior_cost(prev: StateKnot, nxt: StateKnot, Qc: np.ndarray) -> float:
    dt = _check_pair(prev, nxt)
    e = prior_error(prev, nxt)
    return 0.5 * float(e @ process_noise_inv(dt, Qc) @ e)


def _local_state(anchor: StateKnot, knot: StateKnot) -> np.ndarray:
    """Stacked [xi; xi_dot] of a knot in the local frame of `anchor`."""
    xi = lie.relative_tangent(anchor.pose, knot.pose)
    return np.concatenate([xi, _core.jr_inv(xi) @ knot.twist])


def interpolate(prev: StateKnot, nxt: StateKnot, tau: float, Qc: np.ndarray) -> StateKnot:
    """GP posterior-mean state at time tau in [prev.time, next.time]."""
    if not (prev.time <= tau <= nxt.time):
        raise ValueError(f"tau={tau} outside [{prev.time}, {nxt.time}]")
    if tau == prev.time:
        return prev
    if tau == nxt.time:
        return nxt
    d = prev.twist.shape[0]
    dt = nxt.time - prev.time
    t1 = tau - prev.time

    g_prev = np.concatenate([np.zeros(d), prev.twist])
    g_next = _local_state(prev, nxt)

    Phi_full = transition(dt, d)
    Psi = process_noise(t1, Qc) @ transition(nxt.time - tau, d).T @ process_noise_inv(dt, Qc)
    g_tau = transition(t1, d) @ g_prev + Psi @ (g_next - Phi_full @ g_prev)

    xi, xi_dot = g_tau[:d], g_tau[d:]
    pose = lie.compose(prev.pose, lie.exp(xi))
    twist = _core.jr(xi) @ xi_dot
    return StateKnot(tau, pose, twist)


def interpolation_gain(prev_time: float, next_time: float, tau: float,
                       Qc: np.ndarray):
    """(Lambda, Psi) such that g(tau) = Lambda g_prev + Psi g_next, plus the
    conditional covariance S of g(tau) given the two boundary states."""
    d = Qc.shape[0]
    dt = next_time - prev_time
    t1 = tau - prev_time
    t2 = next_time - tau
    Psi = process_noise(t1, Qc) @ transition(t2, d).T @ process_noise_inv(dt, Qc)
    Lam = transition(t1, d) - Psi @ transition(dt, d)
    # conditional precision of the mid state given both ends of the chain
    prec = process_noise_inv(t1, Qc) + transition(t2, d).T @ process_noise_inv(t2, Qc) @ transition(t2, d)
    S = np.linalg.inv(prec)
    return Lam, Psi, S
