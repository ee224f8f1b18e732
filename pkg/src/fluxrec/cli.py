"""Command-line entry points: run, forward, report."""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, RunConfig, parse_config
from .driver import LoopConfig, run_adaptive
from .export import (
    export_flux_txt,
    export_history_csv,
    export_vtk,
    read_history_csv,
    write_measurement,
)
from .problems import builtin_problem, generate_measurement
from .solver import SolverSettings

SYNOPSIS = """usage: fluxrec <command> [options]

commands:
  run      --config PATH [--out DIR]      full adaptive reconstruction
  forward  [--problem NAME] [--noise D] [--seed N] [--levels L] [--out FILE]
                                          generate a synthetic measurement
  report   --history PATH                 summarize a history CSV
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fluxrec", add_help=True)
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run the adaptive pipeline")
    p_run.add_argument("--config", required=True, help="config file path")
    p_run.add_argument("--out", default=None,
                       help="output directory (overrides out_dir in config)")

    p_fwd = sub.add_parser("forward", help="generate a measurement file")
    p_fwd.add_argument("--problem", default="square_smooth")
    p_fwd.add_argument("--noise", type=float, default=0.0)
    p_fwd.add_argument("--seed", type=int, default=0)
    p_fwd.add_argument("--levels", type=int, default=5)
    p_fwd.add_argument("--out", default="measurement.txt")

    p_rep = sub.add_parser("report", help="print a summary table")
    p_rep.add_argument("--history", required=True, help="history CSV path")
    return parser


def _cmd_run(args) -> int:
    with open(args.config) as fh:
        cfg: RunConfig = parse_config(fh.read())
    out_dir = args.out if args.out is not None else cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)

    problem = builtin_problem(cfg.problem).with_overrides(
        beta=cfg.beta, noise=cfg.noise, seed=cfg.seed)
    loop = LoopConfig(
        strategy=cfg.strategy, theta=cfg.theta, tol=cfg.tol,
        max_iters=cfg.max_iters, max_triangles=cfg.max_triangles,
        solver=SolverSettings(cg_tol=cfg.cg_tol))
    history = run_adaptive(problem, loop)

    export_history_csv(history, os.path.join(out_dir, "history.csv"))
    final = history.final_triplet
    export_vtk(final.mesh, {"state": final.u, "costate": final.p},
               os.path.join(out_dir, "final.vtk"),
               title=f"fluxrec {cfg.problem} {cfg.strategy}")
    export_flux_txt(final.q, os.path.join(out_dir, "flux.txt"))
    last = history.records[-1]
    print(f"{cfg.problem}: {len(history.records)} iterations, "
          f"{last.n_triangles} triangles, eta={last.eta:.6e} "
          f"({history.stop_reason})")
    return 0


def _cmd_forward(args) -> int:
    problem = builtin_problem(args.problem).with_overrides(
        noise=args.noise, seed=args.seed)
    measurement = generate_measurement(problem, extra_levels=args.levels)
    write_measurement(measurement, args.out)
    print(f"wrote {len(measurement.values)} samples to {args.out}")
    return 0


def _cmd_report(args) -> int:
    rows = read_history_csv(args.history)
    header = f"{'iter':>4} {'vertices':>9} {'triangles':>9} " \
             f"{'eta':>13} {'objective':>13} {'err_q':>13}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(f"{row['iter']:>4d} {row['n_vertices']:>9d} "
              f"{row['n_triangles']:>9d} {row['eta']:>13.6e} "
              f"{row['objective']:>13.6e} {row['err_q']:>13.6e}")
    return 0


def cli_main(argv=None) -> int:
    """Dispatch a command line; returns the process exit code.

    0 on success, 1 on usage errors (synopsis goes to stderr), 2 on runtime
    failures.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(SYNOPSIS, file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help exits with code 0
        return 0 if exc.code in (0, None) else 1
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "forward":
            return _cmd_forward(args)
        return _cmd_report(args)
    except (OSError, ConfigError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
