"""Evaluation metric tests."""

import numpy as np
import pytest

from rangepose import lie
from rangepose.evaluate import (coverage_3sigma, evaluate, interpolate_truth,
                                nees, nees_bounds, pose_errors, spearman)
from rangepose.lie import Pose

rng = np.random.default_rng(5)


def rot2(th):
    return np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])


def make_track(n=20, dim=2):
    times = np.arange(n) * 0.1
    poses = [Pose(rot2(0.05 * k), np.array([0.1 * k, 0.2 * k])) for k in range(n)]
    return times, poses


def test_identical_tracks_zero_rmse():
    times, poses = make_track()
    rep = evaluate(times, poses, times, poses, alignment="none")
    assert rep.position_rmse == 0.0
    assert rep.orientation_rmse < 1e-12


def test_constant_shift_rmse():
    times, poses = make_track()
    shifted = [Pose(p.rotation, p.position + np.array([0.1, 0.0])) for p in poses]
    rep = evaluate(times, shifted, times, poses, alignment="none")
    assert np.isclose(rep.position_rmse, 0.1)
    assert np.isclose(rep.orientation_rmse, 0.0)


def test_orientation_error_wraps():
    a = [Pose(rot2(np.pi - 0.05), np.zeros(2))] * 12
    b = [Pose(rot2(-np.pi + 0.05), np.zeros(2))] * 12
    _, ang = pose_errors(a, b)
    assert np.allclose(ang, 0.1)


def test_global_frame_rotation_invariance():
    times, poses = make_track()
    est = [Pose(p.rotation @ rot2(0.02), p.position + 0.05) for p in poses]
    rep1 = evaluate(times, est, times, poses, alignment="none")
    Rg = rot2(1.1)
    rot = lambda p: Pose(Rg @ p.rotation, Rg @ p.position)
    rep2 = evaluate(times, [rot(p) for p in est], times,
                    [rot(p) for p in poses], alignment="none")
    assert np.isclose(rep1.position_rmse, rep2.position_rmse, atol=1e-9)
    assert np.isclose(rep1.orientation_rmse, rep2.orientation_rmse, atol=1e-9)


def test_truth_interpolation_midpoint():
    times, poses = make_track()
    mid = interpolate_truth(times, poses, 0.05)
    expect = 0.5 * (poses[0].position + poses[1].position)
    # geodesic midpoint, not chordal: allow the small-rotation curvature gap
    assert np.allclose(mid.position, expect, atol=1e-2)
    assert np.allclose(mid.rotation, rot2(0.025), atol=1e-12)


def test_requires_overlap():
    times, poses = make_track(n=5)
    with pytest.raises(ValueError):
        evaluate(times, poses, times + 100.0, poses, alignment="none")


def test_coverage_and_nees_on_synthetic_gaussians():
    n, d = 4000, 3
    P = np.diag([0.04, 0.09, 0.01])
    errs = rng.multivariate_normal(np.zeros(d), P, size=n)
    covs = [P] * n
    cov = coverage_3sigma(errs, covs)
    assert np.all(cov > 0.99)
    vals = nees(errs, covs)
    lo, hi = nees_bounds(d, n)
    assert lo < vals.mean() < hi


def test_spearman_known_values():
    assert np.isclose(spearman([1, 2, 3, 4], [10, 20, 30, 40]), 1.0)
    assert np.isclose(spearman([1, 2, 3, 4], [9, 7, 5, 1]), -1.0)
    assert abs(spearman([1, 2, 3, 4, 5], [3, 1, 4, 1, 5])) < 0.9
