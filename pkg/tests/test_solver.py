"""Factor-graph solver tests: batch, covariance, marginalization, FLS."""

import numpy as np
import pytest

from rangepose import lie, sim, solver
from rangepose.config import ProblemConfig, SolverSettings
from rangepose.evaluate import rmse_vs_truth
from rangepose.range_model import RangeMeasurement, SensorConfig
from rangepose.sim import Scenario, TrajectorySpec, default_anchors, default_sensors


def small_scenario(dim=2, sigma=0.05, duration=8.0, lever=0.5, seed=1, kind="circle"):
    spec = TrajectorySpec(kind=kind, duration=duration, speed=0.4, radius=2.0, dim=dim)
    return Scenario(dim=dim, sensors=default_sensors(dim, lever, max(sigma, 0.01)),
                    trajectory=spec, sigma=sigma, seed=seed)


def solve_scenario(scn, qc=1e-2, **settings):
    truth, meas = sim.simulate(scn)
    cfg = sim.make_config(scn, qc=qc,
                          solver=SolverSettings(init_policy="windowed", **settings))
    graph, traj, stats, report = solver.solve_batch(meas, cfg)
    return truth, meas, cfg, graph, traj, stats


def test_build_graph_merges_coincident_times():
    anchors = default_anchors(2)
    sensors = default_sensors(2, 0.5, 0.05)
    cfg = ProblemConfig(2, anchors, sensors, qc=0.01)
    meas = [RangeMeasurement(t, "s0", "a0", 5.0, 0.01) for t in
            (0.0, 0.00005, 0.5, 0.50002, 1.0)]
    graph = solver.build_graph(meas, cfg)
    assert len(graph) == 3


def test_multilateration_noiseless_exact():
    anchors = default_anchors(2)
    x_true = np.array([2.3, 4.1])
    meas = [RangeMeasurement(0.0, "s0", a, float(np.linalg.norm(p - x_true)), 0.01)
            for a, p in anchors.items()]
    x, ok = solver.multilaterate(meas, anchors)
    assert ok
    assert np.allclose(x, x_true, atol=1e-8)


def test_noiseless_batch_recovers_truth():
    truth, meas, cfg, graph, traj, stats = solve_scenario(
        small_scenario(sigma=0.0), qc=1e-3)
    assert stats.status == "converged"
    pos_rmse, ori_rmse = rmse_vs_truth(traj, truth)
    assert pos_rmse < 1e-6
    assert ori_rmse < 1e-5


def test_lm_accepted_costs_decrease():
    truth, meas, cfg, graph, traj, stats = solve_scenario(small_scenario())
    costs = np.array(stats.costs)
    assert np.all(np.diff(costs) <= 1e-12)


def test_covariance_matches_dense_inverse():
    # block-tridiagonal recursion vs brute-force dense inversion
    scn = small_scenario(duration=3.0)
    truth, meas, cfg, graph, traj, stats = solve_scenario(scn)
    P, cross = solver.covariance(graph, traj, with_cross=True)
    D, U, b, _ = solver._assemble(graph, traj)
    K, n, _ = D.shape
    H = np.zeros((K * n, K * n))
    for i in range(K):
        H[i * n:(i + 1) * n, i * n:(i + 1) * n] = D[i]
        if i < K - 1:
            H[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = U[i]
            H[(i + 1) * n:(i + 2) * n, i * n:(i + 1) * n] = U[i].T
    Pd = np.linalg.inv(H)
    for i in range(K):
        assert np.allclose(P[i], Pd[i * n:(i + 1) * n, i * n:(i + 1) * n],
                           rtol=1e-6, atol=1e-10)
        if i < K - 1:
            assert np.allclose(cross[i],
                               Pd[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n],
                               rtol=1e-6, atol=1e-10)


def test_rank_deficiency_zero_levers():
    # zero lever arms leave rotation unobservable: null space dim 1 in 2D
    scn = small_scenario(duration=3.0)
    truth, meas = sim.simulate(scn)
    sensors = SensorConfig({k: np.zeros(2) for k in scn.sensors.levers},
                           dict(scn.sensors.sigmas))
    cfg = ProblemConfig(2, dict(scn.anchors), sensors, qc=1e-2,
                        solver=SolverSettings(init_policy="static"),
                        allow_unobservable=True)
    graph = solver.build_graph(meas, cfg)
    traj, _ = solver.initialize(graph, cfg)
    assert solver.rank_deficiency(graph, traj) >= 1


def test_marginalization_preserves_linear_solution():
    # after marginalization, re-optimizing the retained window reproduces the
    # full batch estimate at the retained knots (the problem is locally linear
    # at convergence)
    scn = small_scenario(duration=6.0, sigma=0.05)
    truth, meas, cfg, graph, traj, stats = solve_scenario(scn)
    cut = traj.times[len(traj.times) // 2]
    g2, t2 = solver.marginalize(graph, traj, cut)
    t3, stats3 = solver.optimize(g2, t2, cfg.solver)
    offset = len(traj.times) - len(t3.times)
    for i in range(len(t3.times)):
        xi = lie.relative_tangent(traj.poses[offset + i], t3.poses[i])
        assert np.linalg.norm(xi) < 1e-6
        assert np.allclose(t3.twists[i], traj.twists[offset + i], atol=1e-6)


def test_marginalized_covariance_matches_batch():
    scn = small_scenario(duration=6.0, sigma=0.05)
    truth, meas, cfg, graph, traj, stats = solve_scenario(scn)
    P_full = solver.covariance(graph, traj)
    cut = traj.times[len(traj.times) // 2]
    g2, t2 = solver.marginalize(graph, traj, cut)
    P_marg = solver.covariance(g2, t2)
    offset = len(traj.times) - len(t2.times)
    assert np.allclose(P_marg[-1], P_full[-1], rtol=1e-5, atol=1e-10)
    assert np.allclose(P_marg[0], P_full[offset], rtol=1e-5, atol=1e-10)


def test_fls_emits_per_measurement_and_tracks():
    scn = small_scenario(duration=8.0, sigma=0.05)
    truth, meas = sim.simulate(scn)
    cfg = sim.make_config(scn, qc=1e-2,
                          solver=SolverSettings(init_policy="windowed", window=3.0))
    emitted = solver.run_fls(meas, cfg, cfg.solver)
    assert len(emitted) == len(meas)
    errs = [np.linalg.norm(e.pose.position - truth.pose(e.time).position)
            for e in emitted if e.time > 2.0]
    assert np.sqrt(np.mean(np.square(errs))) < 0.15


def test_fls_drops_out_of_order_measurements():
    scn = small_scenario(duration=4.0, sigma=0.05)
    truth, meas = sim.simulate(scn)
    shuffled = meas[:30] + [meas[50]] + meas[30:50]
    cfg = sim.make_config(scn, qc=1e-2,
                          solver=SolverSettings(init_policy="windowed", window=3.0))
    with pytest.warns(UserWarning):
        emitted = solver.run_fls(shuffled, cfg, cfg.solver)
    assert len(emitted) == 31  # the 20 stale measurements are dropped


def test_interpolate_estimate_between_knots():
    scn = small_scenario(duration=6.0, sigma=0.05)
    truth, meas, cfg, graph, traj, stats = solve_scenario(scn)
    covs, cross = solver.covariance(graph, traj, with_cross=True)
    # at a knot: returns the knot state and covariance
    k0, P0 = solver.interpolate_estimate(traj, cfg.qc, traj.times[3], covs, cross)
    assert np.allclose(P0, covs[3])
    # between knots: mean close to truth, covariance PSD and bounded below
    # by neither endpoint (conditional term adds uncertainty)
    tmid = 0.5 * (traj.times[10] + traj.times[11])
    k, P = solver.interpolate_estimate(traj, cfg.qc, tmid, covs, cross)
    assert np.linalg.norm(k.pose.position - truth.pose(tmid).position) < 0.2
    assert np.all(np.linalg.eigvalsh(P) > 0)
    with pytest.raises(ValueError):
        solver.interpolate_estimate(traj, cfg.qc, traj.times[-1] + 1.0, covs, cross)


def test_batch_deterministic():
    scn = small_scenario(sigma=0.05)
    r1 = solve_scenario(scn)
    r2 = solve_scenario(scn)
    t1, t2 = r1[4], r2[4]
    assert np.array_equal(t1.times, t2.times)
    for a, b in zip(t1.poses, t2.poses):
        assert np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.position, b.position)
    assert np.array_equal(t1.twists, t2.twists)


def test_singular_information_raised_without_gauge():
    scn = small_scenario(duration=3.0)
    truth, meas = sim.simulate(scn)
    sensors = SensorConfig({k: np.zeros(2) for k in scn.sensors.levers},
                           dict(scn.sensors.sigmas))
    cfg = ProblemConfig(2, dict(scn.anchors), sensors, qc=1e-2,
                        solver=SolverSettings(init_policy="static", gauge_sigma=1e12),
                        allow_unobservable=True)
    graph = solver.build_graph(meas, cfg)
    traj, _ = solver.initialize(graph, cfg)
    with pytest.raises(solver.SingularInformation):
        solver.covariance(graph, traj)
