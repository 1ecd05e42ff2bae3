"""Command-line entry point: run, validate, sweep-omega and compare."""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from .build import build_mesh, build_problem
from .config import ConfigError, ProblemConfig, dump_config, parse_config
from .fem import SolverError
from .functionals import FunctionalError, Normalization
from .io import OutputError
from .material import MaterialError
from .mesh import MeshError
from .optimizer import OptimizationError
from .runner import compare, output_directory, run_config, sweep_omega

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

log = logging.getLogger("thermotopo")

NUMERICAL_ERRORS = (SolverError, OptimizationError, FunctionalError, ArithmeticError)


class NumericalFailure(RuntimeError):
    pass


@contextmanager
def numerical_phase():
    """Errors raised while solving are numerical failures, whatever their type."""
    try:
        yield
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(str(exc)) from exc


def check_buildable(cfg: ProblemConfig):
    """Build mesh, material and functional once so setup errors surface before any solve."""
    mesh = build_mesh(cfg)
    build_problem(cfg, Normalization(), mesh=mesh)
    return mesh


def _load(path: str) -> ProblemConfig:
    cfg = parse_config(path)
    check_buildable(cfg)
    return cfg


def _prepare_output(cfg: ProblemConfig) -> Path:
    directory = output_directory(cfg)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"output directory {directory} is not writable: {exc}") from exc
    return directory


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    if args.echo:
        sys.stdout.write(dump_config(cfg))
    else:
        print(f"{args.config}: valid")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args.config)
    out = _prepare_output(cfg)
    with numerical_phase():
        summary = run_config(cfg, out)
    last = summary.results[-1]
    print(f"{len(summary.results)} steps, {summary.total_iterations} iterations, final t={last.t:.4g} cost={last.cost:.6g}")
    print(f"results in {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    if cfg.functional.kind != "temp_multi":
        raise ConfigError(["functional.kind: sweep-omega needs temp_multi"])
    bad = [v for v in args.values if not 0 <= v <= 1]
    if bad:
        raise ConfigError([f"--values: omega must lie in [0, 1], got {v}" for v in bad])
    out = _prepare_output(cfg)
    with numerical_phase():
        runs = sweep_omega(cfg, args.values, out)
    for omega, summary in runs:
        last = summary.results[-1]
        print(f"omega={omega:.4g} j_av={last.values['j_av']:.6g} j_vr={last.values['j_vr']:.6g} cost={last.cost:.6g}")
    print(f"pareto data in {out / 'pareto.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args.config)
    out = _prepare_output(cfg)
    with numerical_phase():
        result = compare(cfg, out)
    cf, ls = result.closed_form, result.levelset
    print(f"closed-form iterations: {cf.total_iterations} (all converged: {cf.all_converged})")
    print(f"level-set iterations:   {ls.total_iterations} (all converged: {ls.all_converged})")
    print(f"iteration ratio (level-set / closed-form): {result.ratio:.2f}")
    print(f"largest per-step cost gap: {max(result.cost_gaps(), default=0.0):.3%}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are validation failures, not argparse's default exit status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="thermotopo", description="Thermal topology optimization by closed-form relaxed updates.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the optimization described by a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config file and report every problem found")
    p.add_argument("config")
    p.add_argument("--echo", action="store_true", help="print the normalized configuration")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep-omega", help="run the temperature cloak for several weights")
    p.add_argument("config")
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run closed-form and level-set updates back to back")
    p.add_argument("config")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (MeshError, MaterialError, FunctionalError, OutputError, SolverError) as exc:
        print(f"invalid setup: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
