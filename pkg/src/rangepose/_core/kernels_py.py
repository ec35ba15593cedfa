"""Pure-numpy Lie kernels for SE(2)/SE(3).

Tangent vectors are stored as [rho; phi] (translation first). A 3-vector is
an se(2) tangent, a 6-vector an se(3) tangent. These functions are the hot
path of factor linearization; a compiled twin lives in ``_kernels.pyx`` and
is selected at import by ``rangepose._core``.
"""

import numpy as np

# Below this rotation magnitude the closed forms switch to low-order Taylor
# expansions of the trigonometric coefficients.
SMALL_ANGLE = 1e-6

_SERIES_TOL = 1e-15
_SERIES_MAX = 60
# Derivative-of-Jacobian series truncation; terms fall off factorially.
_DSERIES_N = 30


def _skew3(a):
    return np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])


def rot_hat(phi):
    """Skew operator for the rotation part: scalar -> 2x2, 3-vector -> 3x3."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if phi.size == 1:
        t = phi[0]
        return np.array([[0.0, -t], [t, 0.0]])
    if phi.size == 3:
        return _skew3(phi)
    raise ValueError(f"rotation tangent must have size 1 or 3, got {phi.size}")


def split(v):
    """Split a tangent [rho; phi] into its translation and rotation parts."""
    v = np.asarray(v, dtype=float)
    if v.shape == (3,):
        return v[:2], v[2:]
    if v.shape == (6,):
        return v[:3], v[3:]
    raise ValueError(f"tangent must have shape (3,) or (6,), got {v.shape}")


def hat(v):
    """Map a tangent vector to its (n+1)x(n+1) Lie-algebra matrix."""
    rho, phi = split(v)
    n = rho.size
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = rot_hat(phi)
    out[:n, n] = rho
    return out


def vee(m):
    """Inverse of :func:`hat`."""
    m = np.asarray(m, dtype=float)
    if m.shape == (3, 3):
        return np.array([m[0, 2], m[1, 2], m[1, 0]])
    if m.shape == (4, 4):
        return np.array([m[0, 3], m[1, 3], m[2, 3], m[2, 1], m[0, 2], m[1, 0]])
    raise ValueError(f"algebra matrix must be 3x3 or 4x4, got {m.shape}")


def so_exp(phi):
    """Rotation-group exponential (Rodrigues for SO(3), planar for SO(2))."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if phi.size == 1:
        t = phi[0]
        c, s = np.cos(t), np.sin(t)
        return np.array([[c, -s], [s, c]])
    t = np.linalg.norm(phi)
    K = _skew3(phi)
    if t < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    A = np.sin(t) / t
    B = (1.0 - np.cos(t)) / t**2
    return np.eye(3) + A * K + B * (K @ K)


def so_log(R):
    """Rotation-group logarithm, principal branch."""
    R = np.asarray(R, dtype=float)
    if R.shape == (2, 2):
        return np.array([np.arctan2(R[1, 0], R[0, 0])])
    ct = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    t = np.arccos(ct)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if t < SMALL_ANGLE:
        return 0.5 * w * (1.0 + t * t / 6.0)
    if np.pi - t < 1e-4:
        # Near-pi branch: axis from the symmetric part, sign from skew part.
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k])
        axis /= np.linalg.norm(axis)
        if w @ axis < 0:
            axis = -axis
        return t * axis
    return t / (2.0 * np.sin(t)) * w


def _so3_V(phi):
    """Left Jacobian of SO(3): p = V(phi) rho in the SE(3) exponential."""
    t = np.linalg.norm(phi)
    K = _skew3(phi)
    if t < SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    a = (1.0 - np.cos(t)) / t**2
    b = (t - np.sin(t)) / t**3
    return np.eye(3) + a * K + b * (K @ K)


def _so3_V_inv(phi):
    t = np.linalg.norm(phi)
    K = _skew3(phi)
    if t < SMALL_ANGLE:
        return np.eye(3) - 0.5 * K + (K @ K) / 12.0
    c = 1.0 / t**2 - (1.0 + np.cos(t)) / (2.0 * t * np.sin(t))
    return np.eye(3) - 0.5 * K + c * (K @ K)


def _se2_V(theta):
    if abs(theta) < SMALL_ANGLE:
        a = 1.0 - theta**2 / 6.0
        b = theta / 2.0 - theta**3 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta
    return np.array([[a, -b], [b, a]])


def se_exp(v):
    """Exponential map: tangent -> (R, p)."""
    rho, phi = split(v)
    if rho.size == 2:
        R = so_exp(phi)
        p = _se2_V(phi[0]) @ rho
    else:
        R = so_exp(phi)
        p = _so3_V(phi) @ rho
    return R, p


def se_log(R, p):
    """Logarithm map: (R, p) -> tangent, principal branch."""
    p = np.asarray(p, dtype=float)
    phi = so_log(R)
    if p.size == 2:
        V = _se2_V(phi[0])
        rho = np.linalg.solve(V, p)
    else:
        rho = _so3_V_inv(phi) @ p
    return np.concatenate([rho, phi])


def ad(v):
    """Adjoint of a tangent vector: ad(v) w = vee([hat(v), hat(w)])."""
    rho, phi = split(v)
    if rho.size == 2:
        out = np.zeros((3, 3))
        out[:2, :2] = rot_hat(phi)
        out[0, 2] = rho[1]
        out[1, 2] = -rho[0]
        return out
    out = np.zeros((6, 6))
    P = _skew3(phi)
    out[:3, :3] = P
    out[:3, 3:] = _skew3(rho)
    out[3:, 3:] = P
    return out


def adjoint(R, p):
    """Group adjoint Ad(T) with the [rho; phi] ordering."""
    R = np.asarray(R, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.size == 2:
        out = np.zeros((3, 3))
        out[:2, :2] = R
        out[0, 2] = p[1]
        out[1, 2] = -p[0]
        out[2, 2] = 1.0
        return out
    out = np.zeros((6, 6))
    out[:3, :3] = R
    out[:3, 3:] = _skew3(p) @ R
    out[3:, 3:] = R
    return out


def jr(v):
    """Right Jacobian, summed as sum_n (-ad v)^n / (n+1)!."""
    A = -ad(v)
    d = A.shape[0]
    term = np.eye(d)
    out = np.eye(d)
    for n in range(1, _SERIES_MAX):
        term = term @ A / (n + 1.0)
        out = out + term
        if np.abs(term).max() < _SERIES_TOL:
            break
    return out


def jl(v):
    return jr(-np.asarray(v, dtype=float))


def jr_inv(v):
    """Inverse right Jacobian; Taylor branch below the small-angle threshold."""
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) < SMALL_ANGLE:
        return _jr_inv_taylor(v)
    return np.linalg.inv(jr(v))


def _jr_inv_taylor(v):
    A = ad(v)
    return np.eye(A.shape[0]) + 0.5 * A + (A @ A) / 12.0


def jl_inv(v):
    return jr_inv(-np.asarray(v, dtype=float))


def djr_w(v, w):
    """Derivative of xi -> Jr(xi) w, evaluated at v, as a dxd matrix.

    Uses d[A^n w] = -sum_{j+m=n-1} A^j ad(A^m w) with A = -ad(v); note the
    inner chain rule sign from A = -ad(v).
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    A = -ad(v)
    d = A.shape[0]
    N = _DSERIES_N
    # coefficients of Jr = sum c_n A^n
    c = np.empty(N + 1)
    c[0] = 1.0
    for n in range(1, N + 1):
        c[n] = c[n - 1] / (n + 1.0)

    Apow = [np.eye(d)]
    vm = [w.copy()]
    for k in range(1, N):
        Apow.append(Apow[-1] @ A)
        vm.append(A @ vm[-1])
    advm = [ad(x) for x in vm]

    D = np.zeros((d, d))
    for j in range(N):
        inner = np.zeros((d, d))
        for m in range(N - j):
            inner += c[j + m + 1] * advm[m]
        D += Apow[j] @ inner
    # the -ad(delta) chain-rule factor and ad(delta)x = -ad(x)delta cancel,
    # so the sum carries a net plus sign
    return D


def djrinv_w(v, w):
    """Derivative of xi -> Jr(xi)^{-1} w, evaluated at v."""
    Ji = jr_inv(v)
    return -Ji @ djr_w(v, Ji @ np.asarray(w, dtype=float))
