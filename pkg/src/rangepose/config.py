"""Problem and solver configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import motion_prior, range_model
from .range_model import PreprocessPolicy, SensorConfig


@dataclass
class SolverSettings:
    max_iterations: int = 50
    cost_tol: float = 1e-9          # relative cost decrease
    step_tol: float = 1e-10         # step infinity-norm
    lm_lambda0: float = 1e-6
    lm_scale: float = 10.0
    lm_lambda_max: float = 1e10
    robust_kernel: str = "none"     # "none" | "huber"
    huber_width: float = 3.0        # in whitened-sigma units
    window: float = 5.0             # fixed-lag duration, seconds
    gauge_sigma: float = 1e6
    init_policy: str = "static"     # "static" | "windowed"

    def __post_init__(self):
        if self.cost_tol <= 0 or self.step_tol <= 0 or self.window <= 0:
            raise ValueError("tolerances and window must be positive")
        if self.robust_kernel not in ("none", "huber"):
            raise ValueError(f"unknown robust kernel {self.robust_kernel!r}")


@dataclass
class ProblemConfig:
    dimension: int
    anchors: dict[str, np.ndarray]
    sensors: SensorConfig
    qc: np.ndarray = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    preprocess: PreprocessPolicy = field(default_factory=PreprocessPolicy)
    allow_unobservable: bool = False

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        self.anchors = {k: np.asarray(v, dtype=float) for k, v in self.anchors.items()}
        range_model.check_anchor_map(self.anchors, self.dimension)
        if self.qc is None:
            self.qc = motion_prior.make_qc(self.dimension, 0.1)
        else:
            self.qc = motion_prior.make_qc(self.dimension, self.qc)

    def observability(self):
        return range_model.check_observability(self.anchors, self.sensors, self.dimension)
