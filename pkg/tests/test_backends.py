"""Compiled vs pure-python kernel backends must agree numerically."""

import os
import subprocess
import sys

import numpy as np
import pytest

from rangepose import _core
from rangepose._core import kernels_py

compiled = pytest.importorskip("rangepose._core._kernels")

rng = np.random.default_rng(11)

FUNCS_VEC = ["hat", "ad", "jr", "jl", "jr_inv", "jl_inv"]


def random_tangents(d):
    # stay inside the principal branch; both backends are ill-conditioned
    # where jr is singular (rotation magnitude near 2 pi)
    out = []
    for _ in range(40):
        v = rng.normal(size=d)
        ang = v if d == 3 else v[2:]
        n = np.linalg.norm(ang)
        if n > np.pi - 0.1:
            v = v * (np.pi - 0.1) / n
        out.append(v)
    out.append(np.zeros(d))
    out.append(np.full(d, 1e-9))
    return out


@pytest.mark.parametrize("d", [3, 6])
def test_vector_funcs_match(d):
    for v in random_tangents(d):
        for name in FUNCS_VEC:
            a = getattr(compiled, name)(v)
            b = getattr(kernels_py, name)(v)
            assert np.allclose(a, b, atol=1e-9), (name, d, v)


def test_rotation_exp_log_match():
    for _ in range(20):
        phi = rng.normal(size=3)
        n = np.linalg.norm(phi)
        if n > np.pi - 0.1:
            phi = phi * (np.pi - 0.1) / n
        Rc = compiled.so_exp(phi)
        Rp = kernels_py.so_exp(phi)
        assert np.allclose(Rc, Rp, atol=1e-12)
        assert np.allclose(compiled.so_log(Rc), kernels_py.so_log(Rp), atol=1e-10)


@pytest.mark.parametrize("d", [3, 6])
def test_exp_log_match(d):
    for v in random_tangents(d):
        Rc, pc = compiled.se_exp(v)
        Rp, pp = kernels_py.se_exp(v)
        assert np.allclose(Rc, Rp, atol=1e-10)
        assert np.allclose(pc, pp, atol=1e-10)
        assert np.allclose(compiled.se_log(Rc, pc),
                           kernels_py.se_log(Rp, pp), atol=1e-9)


@pytest.mark.parametrize("d", [3, 6])
def test_directional_derivatives_match(d):
    for v in random_tangents(d):
        w = rng.normal(size=d)
        assert np.allclose(compiled.djr_w(v, w), kernels_py.djr_w(v, w), atol=1e-8)
        assert np.allclose(compiled.djrinv_w(v, w), kernels_py.djrinv_w(v, w), atol=1e-8)


def test_adjoint_matches():
    for d in (3, 6):
        for v in random_tangents(d):
            R, p = kernels_py.se_exp(v)
            assert np.allclose(compiled.adjoint(R, p),
                               kernels_py.adjoint(R, p), atol=1e-10)


def test_default_backend_is_compiled():
    assert _core.BACKEND_NAME == "cython"
    assert _core.jr is compiled.jr


def test_env_var_forces_pure_backend():
    env = dict(os.environ, RANGEPOSE_PURE="1")
    code = ("from rangepose import _core; "
            "print(_core.BACKEND_NAME); "
            "assert _core.jr is _core.kernels_py.jr")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "python"
