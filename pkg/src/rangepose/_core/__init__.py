"""Kernel backend selection.

The compiled extension is preferred when it imports; set RANGEPOSE_PURE=1 to
force the pure-numpy fallback (used by the benchmark and the parity tests).
"""

import os

from . import kernels_py

if os.environ.get("RANGEPOSE_PURE"):
    backend = kernels_py
    BACKEND_NAME = "python"
else:
    try:
        from . import _kernels as backend

        BACKEND_NAME = "cython"
    except ImportError:
        backend = kernels_py
        BACKEND_NAME = "python"

SMALL_ANGLE = kernels_py.SMALL_ANGLE

hat = backend.hat
vee = backend.vee
rot_hat = backend.rot_hat
split = kernels_py.split
so_exp = backend.so_exp
so_log = backend.so_log
se_exp = backend.se_exp
se_log = backend.se_log
ad = backend.ad
adjoint = backend.adjoint
jr = backend.jr
jl = backend.jl
jr_inv = backend.jr_inv
jl_inv = backend.jl_inv
djr_w = backend.djr_w
djrinv_w = backend.djrinv_w
