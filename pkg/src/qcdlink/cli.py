"""Command-line entry points.

Verbs: ``simulate`` (one grid point, MetricRow to stdout), ``sweep`` (full
grid to CSV), ``calibrate`` (threshold search, h to stdout), ``trace``
(per-slot dump of one replication), ``verify`` (fast exact-invariant suite).

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration. The master
seed comes from ``--seed``, falling back to the ``QCD_SEED`` environment
variable, falling back to the config file.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
import warnings

from .engine import estimate_occupancy, run_replication
from .experiments import (CSV_COLUMNS, CalibrationError, EstimationError,
                          _point_row, _scenario_for, calibrate_threshold,
                          load_spec, sweep, with_no_change)
from .model import (BernoulliSampling, ChannelModel, ConfigError,
                    GaussianKnownVariance, ScenarioConfig, Sensor)

log = logging.getLogger("qcdlink")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcdlink",
        description="Quickest change detection over a lossy retransmitting link")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, needs_config in (("simulate", True), ("sweep", True),
                               ("calibrate", True), ("trace", True),
                               ("verify", False)):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=needs_config,
                       help="experiment spec (JSON)")
        p.add_argument("--out", help="output path (CSV / trace dump)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--reps", type=int, help="replication count override")
        p.add_argument("--parallel", type=int, default=1,
                       help="worker processes per batch")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress logging and warnings")
    return parser


def _seed_override(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("QCD_SEED")
    return int(env) if env is not None else None


def _load(args):
    return load_spec(args.config, seed_override=_seed_override(args),
                     reps_override=args.reps)


def _grid_points(spec):
    rates = list(spec.rates) or [None]
    return list(itertools.product(rates, spec.disciplines, spec.detectors))


def _cmd_simulate(args) -> int:
    spec = _load(args)
    points = _grid_points(spec)
    n_targets = max(len(spec.thresholds), len(spec.gammas))
    if len(points) * n_targets != 1:
        raise ConfigError(
            "simulate expects a single-point config (one detector, one "
            f"discipline, one h or gamma); this grid has {len(points) * n_targets} points")
    rate, disc, det = points[0]
    config = _scenario_for(spec, rate, disc)
    h = spec.thresholds[0] if spec.thresholds else None
    gamma = spec.gammas[0] if spec.gammas else None
    row = _point_row(spec, config, det, h, gamma, None, args.parallel)
    rec = row.as_record()
    print(",".join(CSV_COLUMNS))
    print(",".join(str(rec[c]) for c in CSV_COLUMNS))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = _load(args)
    if not args.out:
        raise ConfigError("sweep requires --out for the CSV")
    rows, failures = sweep(spec, out_path=args.out, parallelism=args.parallel)
    if not args.quiet:
        log.info("wrote %d rows to %s (%d failures)", len(rows), args.out, len(failures))
    return EXIT_RUNTIME if failures else EXIT_OK


def _cmd_calibrate(args) -> int:
    spec = _load(args)
    if not spec.gammas:
        raise ConfigError("calibrate requires a non-empty 'gamma' list in the config")
    for rate, disc, det in _grid_points(spec):
        config = with_no_change(_scenario_for(spec, rate, disc), spec.arl_horizon)
        for gamma in spec.gammas:
            cal = calibrate_threshold(config, det, gamma,
                                      tolerance=spec.calibration_tolerance,
                                      reps=spec.calibration_reps,
                                      parallelism=args.parallel)
            print(f"{spec.scenario_id},{det},{disc.label},{gamma:.10g},"
                  f"h={cal.threshold:.6g},arl2fa={cal.arl2fa:.6g},"
                  f"lower_bound={int(cal.lower_bound)}")
    return EXIT_OK


def _cmd_trace(args) -> int:
    spec = _load(args)
    points = _grid_points(spec)
    if len(points) != 1:
        raise ConfigError("trace expects a single-point config")
    rate, disc, det = points[0]
    config = _scenario_for(spec, rate, disc)
    h = spec.thresholds[0] if spec.thresholds else None
    result = run_replication(config, det, threshold=h, capture_trace=True)
    lines = ["k, Q_k, y, U_k, J_k, Z_k, L_k, C_k"]
    for row in result.trace:
        lines.append(", ".join("" if v is None else
                               (f"{v:.10g}" if isinstance(v, float) else str(v))
                               for v in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _verify_scenario() -> ScenarioConfig:
    return ScenarioConfig(
        sensors=(Sensor(BernoulliSampling(0.3), GaussianKnownVariance(0.0, 1.0, 1.0)),),
        channel=ChannelModel(0.7, 0.6), change_slot=100, horizon=400, seed=12345)


def _cmd_verify(args) -> int:
    config = _verify_scenario()
    checks = []

    # idle slots coincide with an empty queue, and the queue moves by at most
    # one arrival minus at most one departure per slot
    res = run_replication(config, "recursive-cusum", threshold=None, capture_trace=True)
    ok = all((row[1] == 0) == (row[2] is None) for row in res.trace)
    qs = [row[1] for row in res.trace]
    for (q, row), q_next in zip(zip(qs, res.trace), qs[1:]):
        served = 1 if row[2] == 1 else 0
        if not max(q - served, 0) <= q_next <= max(q - served, 0) + 1:
            ok = False
    checks.append(("queue recursion / idle-empty equivalence", ok))

    # the reordering detector coincides with the recursive one on FCFS paths
    ok = True
    for rep in range(25):
        a = run_replication(config, "recursive-cusum", None, rep, capture_trace=True)
        b = run_replication(config, "generalized-cusum", None, rep, capture_trace=True)
        if any(abs(x[7] - y[7]) > 1e-9 for x, y in zip(a.trace, b.trace)):
            ok = False
    checks.append(("recursive/generalized equivalence on FCFS", ok))

    # post-change busy fraction matches r/p1
    occ = estimate_occupancy(config, n_slots=300_000, seed=999)
    expected = 0.3 / config.channel.p1
    checks.append((f"occupancy {occ:.4f} vs r/p1 = {expected:.4f}",
                   abs(occ - expected) < 0.015))

    failed = 0
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failed += not ok
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "calibrate": _cmd_calibrate,
    "trace": _cmd_trace,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    if args.quiet:
        warnings.simplefilter("ignore")
    try:
        return _COMMANDS[args.verb](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationError, EstimationError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
