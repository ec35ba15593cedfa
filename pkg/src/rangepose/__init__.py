"""Continuous-time range-only pose estimation.

Full 2D/3D pose trajectories from asynchronous point-to-point range
measurements, using a white-noise-on-acceleration Gaussian-process motion
prior and sparse MAP smoothing (batch and fixed-lag).
"""

from ._core import BACKEND_NAME as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
