"""Command-line interface.

    uotpair solve MU.csv NU.csv --out-prefix run
    uotpair density SAMPLES.csv --L 12 --resolution 64 --mass 1.0 --out grid.json
    uotpair estimate SRC.csv TGT.csv --method pb_1nn --queries Q.csv --out pair.csv
    uotpair oracle --config cfg.json --out-prefix oracle
    uotpair bench --config cfg.json --out bench.csv
    uotpair rates bench.csv

Exit codes: 0 success, 2 bad input or config, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from . import __version__
from . import io as uio
from .bench import ExperimentConfig, compute_oracle, report_rates, run_benchmark
from .exceptions import ConfigError, NonConvergence, UOTError
from .kernel_density import fit_density, renormalize_positive, resolution_rule
from .kernel_estimator import KernelPluginEstimator
from .measures import MassEstimate
from .plan_estimator import PlanBasedEstimator, evaluate_pair
from .uot_core import SolverConfig, solve_discrete_uot

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 2, 3


def _solver_from_args(args):
    return SolverConfig(eps_init=args.eps_init, eps_final=args.eps_final,
                        eps_decay=args.eps_decay, max_iters_per_eps=args.max_iters,
                        fixed_point_tol=args.tol, polish=not args.no_polish)


def _add_solver_args(p):
    d = SolverConfig()
    p.add_argument("--eps-init", type=float, default=d.eps_init)
    p.add_argument("--eps-final", type=float, default=d.eps_final)
    p.add_argument("--eps-decay", type=float, default=d.eps_decay)
    p.add_argument("--max-iters", type=int, default=d.max_iters_per_eps)
    p.add_argument("--tol", type=float, default=d.fixed_point_tol)
    p.add_argument("--no-polish", action="store_true", help="skip the final Newton polish")


def cmd_solve(args):
    mu = uio.read_measure(args.mu, args.mu_mass)
    nu = uio.read_measure(args.nu, args.nu_mass)
    result = solve_discrete_uot(mu, nu, _solver_from_args(args))
    uio.write_plan(args.out_prefix, result)
    uio.write_potentials(args.out_prefix, result.potentials)
    print(json.dumps({"primal": result.primal_value, "dual": result.dual_value,
                      "plan_mass": result.plan.total_mass()}))
    return EXIT_OK


def _mass(path, explicit):
    if explicit is not None:
        return MassEstimate.external(explicit)
    try:
        return uio.mass_estimate_from_sidecar(path)
    except FileNotFoundError:
        raise ConfigError(f"no --mass given and no sidecar JSON next to {path}") from None


def cmd_density(args):
    X = uio.read_points(args.samples)
    L = args.L if args.L is not None else resolution_rule(X.shape[0], X.shape[1], args.alpha,
                                                           args.L0, args.n0)
    grid = renormalize_positive(fit_density(X, L), args.resolution, _mass(args.samples, args.mass))
    uio.write_grid(args.out, grid)
    return EXIT_OK


def cmd_estimate(args):
    X = uio.read_points(args.source)
    Y = uio.read_points(args.target)
    mx = _mass(args.source, args.source_mass)
    my = _mass(args.target, args.target_mass)
    solver = _solver_from_args(args)
    if args.method == "kernel_plugin":
        est = KernelPluginEstimator(L=args.L, L0=args.L0, n0=args.n0, alpha=args.alpha,
                                    resolution=args.resolution, w_minus=args.w_minus,
                                    w_plus=args.w_plus, solver=solver)
    else:
        est = PlanBasedEstimator("1nn" if args.method == "pb_1nn" else "nw",
                                 kernel=args.kernel, bandwidth=args.bandwidth,
                                 w_minus=args.w_minus, w_plus=args.w_plus, solver=solver)
    est.fit(X, Y, mx, my)
    Q = uio.read_points(args.queries) if args.queries else X
    uio.write_pair_values(args.out, Q, evaluate_pair(est.pair_, Q))
    return EXIT_OK


def cmd_oracle(args):
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    pair, mu_grid = compute_oracle(config)
    uio.write_grid_potentials(args.out_prefix, pair.params["potentials"])
    Z = mu_grid.centers()
    uio.write_pair_values(f"{args.out_prefix}_pair.csv", Z, evaluate_pair(pair, Z))
    return EXIT_OK


def cmd_bench(args):
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()

    def progress(row):
        logging.getLogger("uotpair.bench").info(
            "seed=%s n=%s %s map=%.3g growth=%.3g %s", row["seed"], row["n"], row["estimator"],
            row["map_mse"], row["growth_mse"], row["status"])

    run_benchmark(config, args.out, record_runtime=not args.no_timing, progress=progress)
    return EXIT_OK


def cmd_rates(args):
    table = report_rates(args.csv)
    cols = ["estimator", "map_slope", "map_stderr", "growth_slope", "growth_stderr"]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(cols)
        for row in table:
            w.writerow([row["estimator"]] + [f"{row[c]:.6g}" for c in cols[1:]])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="uotpair", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve discrete UOT between two measure files")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--mu-mass", type=float)
    p.add_argument("--nu-mass", type=float)
    p.add_argument("--out-prefix", required=True)
    _add_solver_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("density", help="cosine-kernel density of a sample as grid JSON")
    p.add_argument("samples")
    p.add_argument("--L", type=float)
    p.add_argument("--L0", type=float, default=14.0)
    p.add_argument("--n0", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--mass", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("estimate", help="fit a transport-growth pair and evaluate it")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--method", choices=["pb_1nn", "pb_nw", "kernel_plugin"], default="pb_1nn")
    p.add_argument("--source-mass", type=float)
    p.add_argument("--target-mass", type=float)
    p.add_argument("--queries", help="CSV of query points (defaults to the source sample)")
    p.add_argument("--kernel", choices=["gaussian", "epanechnikov"], default="gaussian")
    p.add_argument("--bandwidth", type=float, default=0.02)
    p.add_argument("--L", type=float)
    p.add_argument("--L0", type=float, default=14.0)
    p.add_argument("--n0", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--w-minus", type=float, default=1e-3)
    p.add_argument("--w-plus", type=float, default=1e3)
    p.add_argument("--out", required=True)
    _add_solver_args(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="fine-grid oracle potentials and pair")
    p.add_argument("--config")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="run the estimator sweep")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--no-timing", action="store_true",
                   help="leave runtime_ms empty so reruns are byte-identical")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rates", help="log-log rate table from a benchmark CSV")
    p.add_argument("csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rates)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NonConvergence as exc:
        print(f"uotpair: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (UOTError, ValueError, OSError, KeyError) as exc:
        print(f"uotpair: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
