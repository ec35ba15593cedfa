# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Lie kernels for SE(2)/SE(3); mirrors kernels_py exactly.

Fixed-size C-array arithmetic for tangent dimensions 3 and 6; the public
functions accept and return numpy arrays like the pure-python twin.
"""

from libc.math cimport sqrt, sin, cos, atan2, acos, fabs, M_PI

import numpy as np
cimport numpy as cnp

cnp.import_array()

SMALL_ANGLE = 1e-6

cdef double _SERIES_TOL = 1e-15
cdef int _SERIES_MAX = 60
cdef int _DSERIES_N = 30


# ---------------------------------------------------------------- helpers

cdef inline void _zero(int d, double* M) noexcept:
    cdef int i
    for i in range(d * d):
        M[i] = 0.0


cdef inline void _eye(int d, double* M) noexcept:
    cdef int i
    _zero(d, M)
    for i in range(d):
        M[i * d + i] = 1.0


cdef inline void _matmul(int d, double* A, double* B, double* C) noexcept:
    cdef int i, j, k
    cdef double s
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(d):
                s += A[i * d + k] * B[k * d + j]
            C[i * d + j] = s


cdef inline void _matvec(int d, double* A, double* x, double* y) noexcept:
    cdef int i, k
    cdef double s
    for i in range(d):
        s = 0.0
        for k in range(d):
            s += A[i * d + k] * x[k]
        y[i] = s


cdef int _inverse(int d, double* A, double* out) noexcept:
    """Gauss-Jordan with partial pivoting; returns 0 on success."""
    cdef double work[72]
    cdef int i, j, k, piv
    cdef double best, factor, tmp
    for i in range(d):
        for j in range(d):
            work[i * 2 * d + j] = A[i * d + j]
            work[i * 2 * d + d + j] = 1.0 if i == j else 0.0
    for k in range(d):
        piv = k
        best = fabs(work[k * 2 * d + k])
        for i in range(k + 1, d):
            if fabs(work[i * 2 * d + k]) > best:
                best = fabs(work[i * 2 * d + k])
                piv = i
        if best == 0.0:
            return 1
        if piv != k:
            for j in range(2 * d):
                tmp = work[k * 2 * d + j]
                work[k * 2 * d + j] = work[piv * 2 * d + j]
                work[piv * 2 * d + j] = tmp
        factor = work[k * 2 * d + k]
        for j in range(2 * d):
            work[k * 2 * d + j] /= factor
        for i in range(d):
            if i == k:
                continue
            factor = work[i * 2 * d + k]
            if factor != 0.0:
                for j in range(2 * d):
                    work[i * 2 * d + j] -= factor * work[k * 2 * d + j]
    for i in range(d):
        for j in range(d):
            out[i * d + j] = work[i * 2 * d + d + j]
    return 0


cdef inline void _skew3(double* a, double* M) noexcept:
    M[0] = 0.0;    M[1] = -a[2]; M[2] = a[1]
    M[3] = a[2];   M[4] = 0.0;   M[5] = -a[0]
    M[6] = -a[1];  M[7] = a[0];  M[8] = 0.0


cdef void _c_ad(int d, double* v, double* M) noexcept:
    cdef double S[9]
    cdef int i, j
    _zero(d, M)
    if d == 3:
        M[0 * 3 + 1] = -v[2]
        M[1 * 3 + 0] = v[2]
        M[0 * 3 + 2] = v[1]
        M[1 * 3 + 2] = -v[0]
    else:
        _skew3(v + 3, S)
        for i in range(3):
            for j in range(3):
                M[i * 6 + j] = S[i * 3 + j]
                M[(i + 3) * 6 + (j + 3)] = S[i * 3 + j]
        _skew3(v, S)
        for i in range(3):
            for j in range(3):
                M[i * 6 + (j + 3)] = S[i * 3 + j]


cdef void _c_jr(int d, double* v, double* out) noexcept:
    cdef double A[36]
    cdef double term[36]
    cdef double nxt[36]
    cdef int n, i
    cdef double mx
    _c_ad(d, v, A)
    for i in range(d * d):
        A[i] = -A[i]
    _eye(d, out)
    _eye(d, term)
    for n in range(1, _SERIES_MAX):
        _matmul(d, term, A, nxt)
        mx = 0.0
        for i in range(d * d):
            term[i] = nxt[i] / (n + 1.0)
            out[i] += term[i]
            if fabs(term[i]) > mx:
                mx = fabs(term[i])
        if mx < _SERIES_TOL:
            break


cdef void _c_jr_inv(int d, double* v, double* out) noexcept:
    cdef double A[36]
    cdef double A2[36]
    cdef double J[36]
    cdef double nv = 0.0
    cdef int i
    for i in range(d):
        nv += v[i] * v[i]
    if sqrt(nv) < 1e-6:
        _c_ad(d, v, A)
        _matmul(d, A, A, A2)
        _eye(d, out)
        for i in range(d * d):
            out[i] += 0.5 * A[i] + A2[i] / 12.0
        return
    _c_jr(d, v, J)
    _inverse(d, J, out)


cdef void _c_djr_w(int d, double* v, double* w, double* out) noexcept:
    cdef double A[36]
    cdef double Apow[36]
    cdef double advm[30][36]
    cdef double vm[30][6]
    cdef double c[31]
    cdef double inner[36]
    cdef double tmp[36]
    cdef int N = _DSERIES_N
    cdef int n, j, m, i
    _c_ad(d, v, A)
    for i in range(d * d):
        A[i] = -A[i]
    c[0] = 1.0
    for n in range(1, N + 1):
        c[n] = c[n - 1] / (n + 1.0)
    for i in range(d):
        vm[0][i] = w[i]
    for m in range(1, N):
        _matvec(d, A, vm[m - 1], vm[m])
    for m in range(N):
        _c_ad(d, vm[m], advm[m])

    _zero(d, out)
    _eye(d, Apow)
    for j in range(N):
        _zero(d, inner)
        for m in range(N - j):
            for i in range(d * d):
                inner[i] += c[j + m + 1] * advm[m][i]
        _matmul(d, Apow, inner, tmp)
        for i in range(d * d):
            out[i] += tmp[i]
        _matmul(d, Apow, A, tmp)
        for i in range(d * d):
            Apow[i] = tmp[i]


# ---------------------------------------------------------------- wrappers

cdef inline cnp.ndarray _as_vec(object v, int* d):
    cdef cnp.ndarray a = np.ascontiguousarray(v, dtype=np.float64).ravel()
    d[0] = <int>a.shape[0]
    if d[0] != 3 and d[0] != 6:
        raise ValueError(f"tangent must have size 3 or 6, got {d[0]}")
    return a


def split(v):
    cdef int d
    cdef cnp.ndarray a = _as_vec(v, &d)
    n = 2 if d == 3 else 3
    return a[:n], a[n:]


def rot_hat(phi):
    p = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    if p.size == 1:
        return np.array([[0.0, -p[0]], [p[0], 0.0]])
    if p.size == 3:
        out = np.zeros((3, 3))
        _skew3(<double*>cnp.PyArray_DATA(np.ascontiguousarray(p)),
               <double*>cnp.PyArray_DATA(out))
        return out
    raise ValueError(f"rotation tangent must have size 1 or 3, got {p.size}")


def hat(v):
    cdef int d
    cdef cnp.ndarray a = _as_vec(v, &d)
    n = 2 if d == 3 else 3
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = rot_hat(a[n:])
    out[:n, n] = a[:n]
    return out


def vee(m):
    m = np.asarray(m, dtype=np.float64)
    if m.shape == (3, 3):
        return np.array([m[0, 2], m[1, 2], m[1, 0]])
    if m.shape == (4, 4):
        return np.array([m[0, 3], m[1, 3], m[2, 3], m[2, 1], m[0, 2], m[1, 0]])
    raise ValueError(f"algebra matrix must be 3x3 or 4x4, got {m.shape}")


def so_exp(phi):
    cdef double t, c0, s0, a, b
    cdef double K[9]
    cdef double K2[9]
    p = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    if p.size == 1:
        t = p[0]
        c0 = cos(t); s0 = sin(t)
        return np.array([[c0, -s0], [s0, c0]])
    pc = np.ascontiguousarray(p)
    cdef double* pd = <double*>cnp.PyArray_DATA(pc)
    t = sqrt(pd[0] * pd[0] + pd[1] * pd[1] + pd[2] * pd[2])
    _skew3(pd, K)
    _matmul(3, K, K, K2)
    out = np.empty((3, 3))
    cdef double* od = <double*>cnp.PyArray_DATA(out)
    if t < 1e-6:
        a = 1.0; b = 0.5
    else:
        a = sin(t) / t
        b = (1.0 - cos(t)) / (t * t)
    _eye(3, od)
    for i in range(9):
        od[i] += a * K[i] + b * K2[i]
    return out


def so_log(R):
    R = np.asarray(R, dtype=np.float64)
    if R.shape == (2, 2):
        return np.array([atan2(R[1, 0], R[0, 0])])
    cdef double ct = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) / 2.0
    if ct > 1.0:
        ct = 1.0
    if ct < -1.0:
        ct = -1.0
    cdef double t = acos(ct)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if t < 1e-6:
        return 0.5 * w * (1.0 + t * t / 6.0)
    if M_PI - t < 1e-4:
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / sqrt(B[k, k])
        axis = axis / np.linalg.norm(axis)
        if float(w @ axis) < 0:
            axis = -axis
        return t * axis
    return t / (2.0 * sin(t)) * w


cdef void _so3_V(double* phi, double* out) noexcept:
    cdef double K[9]
    cdef double K2[9]
    cdef double t, a, b
    cdef int i
    t = sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    _skew3(phi, K)
    _matmul(3, K, K, K2)
    if t < 1e-6:
        a = 0.5
        b = 1.0 / 6.0
    else:
        a = (1.0 - cos(t)) / (t * t)
        b = (t - sin(t)) / (t * t * t)
    _eye(3, out)
    for i in range(9):
        out[i] += a * K[i] + b * K2[i]


cdef void _so3_V_inv(double* phi, double* out) noexcept:
    cdef double K[9]
    cdef double K2[9]
    cdef double t, c0
    cdef int i
    t = sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    _skew3(phi, K)
    _matmul(3, K, K, K2)
    if t < 1e-6:
        c0 = 1.0 / 12.0
    else:
        c0 = 1.0 / (t * t) - (1.0 + cos(t)) / (2.0 * t * sin(t))
    _eye(3, out)
    for i in range(9):
        out[i] += -0.5 * K[i] + c0 * K2[i]


def se_exp(v):
    cdef int d
    cdef cnp.ndarray a = _as_vec(v, &d)
    cdef double* vd = <double*>cnp.PyArray_DATA(a)
    cdef double V[9]
    cdef double t, sa, sb
    if d == 3:
        t = vd[2]
        R = np.array([[cos(t), -sin(t)], [sin(t), cos(t)]])
        if fabs(t) < 1e-6:
            sa = 1.0 - t * t / 6.0
            sb = t / 2.0 - t * t * t / 24.0
        else:
            sa = sin(t) / t
            sb = (1.0 - cos(t)) / t
        p = np.array([sa * vd[0] - sb * vd[1], sb * vd[0] + sa * vd[1]])
        return R, p
    R = so_exp(a[3:])
    _so3_V(vd + 3, V)
    p = np.empty(3)
    cdef double* pd = <double*>cnp.PyArray_DATA(p)
    _matvec(3, V, vd, pd)
    return R, p


def se_log(R, p):
    p = np.ascontiguousarray(p, dtype=np.float64)
    phi = so_log(R)
    cdef double Vi[9]
    cdef double t, sa, sb, det
    if p.size == 2:
        t = phi[0]
        if fabs(t) < 1e-6:
            sa = 1.0 - t * t / 6.0
            sb = t / 2.0 - t * t * t / 24.0
        else:
            sa = sin(t) / t
            sb = (1.0 - cos(t)) / t
        det = sa * sa + sb * sb
        rho = np.array([(sa * p[0] + sb * p[1]) / det, (-sb * p[0] + sa * p[1]) / det])
        return np.array([rho[0], rho[1], t])
    phic = np.ascontiguousarray(phi)
    _so3_V_inv(<double*>cnp.PyArray_DATA(phic), Vi)
    rho = np.empty(3)
    _matvec(3, Vi, <double*>cnp.PyArray_DATA(p), <double*>cnp.PyArray_DATA(rho))
    return np.concatenate([rho, phi])


def ad(v):
    cdef int d
    cdef cnp.ndarray a = _as_vec(v, &d)
    out = np.empty((d, d))
    _c_ad(d, <double*>cnp.PyArray_DATA(a), <double*>cnp.PyArray_DATA(out))
    return out


def adjoint(R, p):
    R = np.asarray(R, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if p.size == 2:
        out = np.zeros((3, 3))
        out[:2, :2] = R
        out[0, 2] = p[1]
        out[1, 2] = -p[0]
        out[2, 2] = 1.0
        return out
    out = np.zeros((6, 6))
    S = np.empty((3, 3))
    _skew3(<double*>cnp.PyArray_DATA(np.ascontiguousarray(p)),
           <double*>cnp.PyArray_DATA(S))
    out[:3, :3] = R
    out[:3, 3:] = S @ R
    out[3:, 3:] = R
    return out


def jr(v):
    cdef int d
    cdef cnp.ndarray a = _as_vec(v, &d)
    out = np.empty((d, d))
    _c_jr(d, <double*>cnp.PyArray_DATA(a), <double*>cnp.PyArray_DATA(out))
    return out


def jl(v):
    return jr(-np.asarray(v, dtype=np.float64))


def jr_inv(v):
    cdef int d
    cdef cnp.ndarray a = _as_vec(v, &d)
    out = np.empty((d, d))
    _c_jr_inv(d, <double*>cnp.PyArray_DATA(a), <double*>cnp.PyArray_DATA(out))
    return out


def jl_inv(v):
    return jr_inv(-np.asarray(v, dtype=np.float64))


def djr_w(v, w):
    cdef int d, d2
    cdef cnp.ndarray a = _as_vec(v, &d)
    cdef cnp.ndarray b = _as_vec(w, &d2)
    if d != d2:
        raise ValueError("v and w must have the same size")
    out = np.empty((d, d))
    _c_djr_w(d, <double*>cnp.PyArray_DATA(a), <double*>cnp.PyArray_DATA(b),
             <double*>cnp.PyArray_DATA(out))
    return out


def djrinv_w(v, w):
    cdef int d, d2
    cdef cnp.ndarray a = _as_vec(v, &d)
    cdef cnp.ndarray b = _as_vec(w, &d2)
    if d != d2:
        raise ValueError("v and w must have the same size")
    cdef double Ji[36]
    cdef double u[6]
    cdef double Dm[36]
    cdef double outm[36]
    cdef int i
    _c_jr_inv(d, <double*>cnp.PyArray_DATA(a), Ji)
    _matvec(d, Ji, <double*>cnp.PyArray_DATA(b), u)
    _c_djr_w(d, <double*>cnp.PyArray_DATA(a), u, Dm)
    _matmul(d, Ji, Dm, outm)
    out = np.empty((d, d))
    cdef double* od = <double*>cnp.PyArray_DATA(out)
    for i in range(d * d):
        od[i] = -outm[i]
    return out
