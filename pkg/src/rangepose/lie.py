"""Dimension-generic pose kernel for SE(2) and SE(3).

Poses are immutable (rotation, position) pairs; tangent vectors are plain
numpy arrays ordered [rho; phi] with rho in meters and phi in radians. The
right-perturbation convention T = Tbar * exp(xi^) is used everywhere.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import _core

SMALL_ANGLE = _core.SMALL_ANGLE

# Above this orthonormality drift a composed rotation is re-projected onto
# SO(n) by polar decomposition.
ORTHO_TOL = 1e-9

hat = _core.hat
vee = _core.vee
rot_hat = _core.rot_hat
ad = _core.ad
right_jacobian = _core.jr
right_jacobian_inv = _core.jr_inv
left_jacobian_inv = _core.jl_inv


def tangent_dim(n: int) -> int:
    """State tangent dimension for ambient dimension n (2 -> 3, 3 -> 6)."""
    if n == 2:
        return 3
    if n == 3:
        return 6
    raise ValueError(f"ambient dimension must be 2 or 3, got {n}")


def ambient_dim(d: int) -> int:
    if d == 3:
        return 2
    if d == 6:
        return 3
    raise ValueError(f"tangent dimension must be 3 or 6, got {d}")


def project_rotation(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix by polar decomposition (via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    out = U @ Vt
    if np.linalg.det(out) < 0:
        U[:, -1] = -U[:, -1]
        out = U @ Vt
    return out


def ortho_error(R: np.ndarray) -> float:
    n = R.shape[0]
    return float(np.abs(R.T @ R - np.eye(n)).max())


class Pose:
    """An SE(n) element. Immutable; arrays are copied in and frozen."""

    __slots__ = ("rotation", "position")

    def __init__(self, rotation, position):
        R = np.array(rotation, dtype=float)
        p = np.array(position, dtype=float)
        if R.shape not in ((2, 2), (3, 3)) or p.shape != (R.shape[0],):
            raise ValueError(f"bad pose shapes {R.shape}, {p.shape}")
        R.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "position", p)

    def __setattr__(self, name, value):
        raise AttributeError("Pose is immutable")

    @property
    def dim(self) -> int:
        return self.position.shape[0]

    @staticmethod
    def identity(n: int) -> "Pose":
        return Pose(np.eye(n), np.zeros(n))

    def matrix(self) -> np.ndarray:
        n = self.dim
        out = np.eye(n + 1)
        out[:n, :n] = self.rotation
        out[:n, n] = self.position
        return out

    def __repr__(self):
        return f"Pose(R={self.rotation.tolist()}, p={self.position.tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    R = a.rotation @ b.rotation
    if ortho_error(R) > ORTHO_TOL:
        R = project_rotation(R)
    return Pose(R, a.rotation @ b.position + a.position)


def inverse(a: Pose) -> Pose:
    Rt = a.rotation.T
    return Pose(Rt, -(Rt @ a.position))


def act(a: Pose, x) -> np.ndarray:
    return a.rotation @ np.asarray(x, dtype=float) + a.position


def exp(v) -> Pose:
    """Exponential map from a [rho; phi] tangent to a pose."""
    R, p = _core.se_exp(np.asarray(v, dtype=float))
    return Pose(R, p)


def log(T: Pose) -> np.ndarray:
    """Logarithm map, principal branch; warns within 1e-6 rad of pi."""
    v = _core.se_log(T.rotation, T.position)
    phi = v[T.dim:]
    angle = abs(phi[0]) if phi.size == 1 else float(np.linalg.norm(phi))
    if np.pi - angle < 1e-6:
        warnings.warn("rotation angle within 1e-6 of pi; log is near-singular")
    return v


def relative_tangent(a: Pose, b: Pose) -> np.ndarray:
    """log(a^{-1} b), the body-frame displacement from a to b."""
    return log(compose(inverse(a), b))


def rotation_geodesic(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic angle between two rotations, in [0, pi]."""
    phi = _core.so_log(np.asarray(Ra).T @ np.asarray(Rb))
    if phi.size == 1:
        return abs(float(phi[0]))
    return float(np.linalg.norm(phi))
