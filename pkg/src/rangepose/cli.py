"""Command-line front end: simulate | estimate | evaluate | sweep.

Exit codes: 0 success, 2 configuration error, 3 unobservable geometry
without an override, 4 numerical failure. RANGEPOSE_LOG sets the logging
level (DEBUG/INFO/WARNING, default WARNING).
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import io as rio
from . import sim, solver
from .range_model import ConfigurationError
from .solver import NumericalFailure, SingularInformation

log = logging.getLogger("rangepose")

EXIT_CONFIG = 2
EXIT_UNOBSERVABLE = 3
EXIT_NUMERICAL = 4


def cmd_simulate(args):
    obj = rio.load_json(args.config)
    scenario = rio.scenario_from_dict(obj, args.config, seed=args.seed)
    truth, meas = sim.simulate(scenario)
    os.makedirs(args.out, exist_ok=True)
    mpath = os.path.join(args.out, "measurements.jsonl")
    tpath = os.path.join(args.out, "truth.jsonl")
    times = np.array([m.time for m in meas])
    knots = truth.sample(times)
    rio.write_measurements(mpath, meas)
    rio.write_truth(tpath, times, [k.pose for k in knots], [k.twist for k in knots])
    log.info("wrote %s (%d records) and %s", mpath, len(meas), tpath)
    print(f"simulated {len(meas)} measurements over {truth.duration:.1f} s "
          f"-> {mpath}, {tpath}")
    return 0


def cmd_estimate(args):
    obj = rio.load_json(args.config)
    config = rio.config_from_dict(obj, args.config)
    report = config.observability()
    if not report.ok and not config.allow_unobservable:
        print(f"unobservable geometry: {'; '.join(report.warnings)}",
              file=sys.stderr)
        return EXIT_UNOBSERVABLE
    meas = rio.read_measurements(args.measurements)
    meas = sorted(meas, key=lambda m: m.time)
    from .range_model import preprocess
    meas = preprocess(meas, config.preprocess)

    if args.mode == "batch":
        graph, traj, stats, init_report = solver.solve_batch(meas, config)
        if stats.status == "numerical_failure":
            print(f"numerical failure after {len(stats.costs)} iterations",
                  file=sys.stderr)
            return EXIT_NUMERICAL
        covs = solver.covariance(graph, traj)
        emitted = [solver.Emitted(traj.times[i], traj.poses[i], traj.twists[i],
                                  covs[i]) for i in range(len(traj.times))]
        print(f"batch: {stats.status} in {len(stats.costs) - 1} iterations, "
              f"final cost {stats.costs[-1]:.6g}, {len(emitted)} states")
    else:
        emitted = solver.run_fls(meas, config, config.solver)
        print(f"fls: emitted {len(emitted)} states "
              f"(window {config.solver.window:.1f} s)")
    rio.write_results(args.out, emitted)
    log.info("wrote %s", args.out)
    return 0


def cmd_evaluate(args):
    results = rio.read_results(args.results)
    t_times, t_poses, t_twists = rio.read_truth(args.truth)
    from .evaluate import evaluate
    report = evaluate(
        [e.time for e in results], [e.pose for e in results],
        t_times, t_poses,
        covariances=[e.covariance for e in results],
        alignment=args.alignment,
    )
    out = {
        "pos_rmse_m": report.position_rmse,
        "ori_rmse_rad": report.orientation_rmse,
        "coverage_3sigma": (None if report.coverage_3sigma is None
                            else [float(c) for c in report.coverage_3sigma]),
        "n_samples": report.n_samples,
    }
    import json
    text = json.dumps(out, indent=2)
    if args.out:
        rio.atomic_write(args.out, text + "\n")
    print(text)
    return 0


def cmd_sweep(args):
    obj = rio.load_json(args.config)
    scenario = rio.scenario_from_dict(obj.get("scenario", {}), args.config,
                                      seed=args.seed)
    levers = obj.get("levers", [0.014, 0.1, 0.5, 1.0, 2.8])
    noises = obj.get("noises", [0.01, 0.05, 0.1])
    runs = int(obj.get("runs", 5))
    qc = obj.get("qc", 0.1)
    rows = sim.sweep(scenario, levers, noises, runs=runs, qc=qc)
    rio.write_sweep_csv(args.out, rows)
    from .evaluate import spearman
    for sigma in noises:
        sub = [r for r in rows if r["sigma_m"] == sigma
               and np.isfinite(r["ori_rmse_mean"])]
        if len(sub) >= 3:
            rho = spearman([r["lever_m"] for r in sub],
                           [r["ori_rmse_mean"] for r in sub])
            print(f"sigma {sigma}: orientation-vs-lever Spearman rho {rho:+.2f}")
    print(f"wrote {len(rows)} rows -> {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="rangepose",
                                description="Range-only continuous-time pose "
                                            "estimation tools")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate measurements and ground truth")
    s.add_argument("--config", required=True, help="scenario JSON file")
    s.add_argument("--seed", type=int, default=None, help="override scenario seed")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", help="run the batch or fixed-lag estimator")
    s.add_argument("--config", required=True, help="problem config JSON file")
    s.add_argument("--measurements", required=True, help="measurements JSONL file")
    s.add_argument("--mode", choices=["batch", "fls"], default="batch")
    s.add_argument("--out", required=True, help="results JSONL file")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("evaluate", help="compare results against ground truth")
    s.add_argument("--results", required=True, help="results JSONL file")
    s.add_argument("--truth", required=True, help="truth JSONL file")
    s.add_argument("--alignment", choices=["none", "time-interpolated"],
                   default="time-interpolated")
    s.add_argument("--out", default=None, help="report JSON file (optional)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="lever-arm / noise RMSE grid")
    s.add_argument("--config", required=True, help="sweep spec JSON file")
    s.add_argument("--seed", type=int, default=None, help="override base seed")
    s.add_argument("--out", required=True, help="output CSV file")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    level = os.environ.get("RANGEPOSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, SingularInformation, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
