"""
Subcommand handlers.

Each handler takes the parsed arguments, runs its part of the pipeline and
returns the process exit code. Failures propagate as ToolkitError
subclasses; main maps them to exit codes.
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from models.schemas import RunConfig
from services.asympt import fundamental_solutions
from services.charpoly import vandermonde
from services.example5 import example5_config, example5_harness
from services.pipeline import PipelineService
from services.reference import (
    fundamental_trajectories,
    log_derivative_profile,
    mode_solution,
    predicted_wronskian,
    wronskian_check,
)
from services.report_writer import stack_columns, write_csv, write_json
from services.selftest import run_selftest
from utils.errors import AcceptanceError, ConfigError, NumericalError
from utils.logger import get_logger

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = get_logger("handlers")


def load_run_config(path) -> RunConfig:
    """
    Read and validate a TOML run configuration.

    Raises:
        ConfigError: If the file is missing, not TOML, or fails validation;
            validation messages name the offending key path
    """
    path = Path(path)
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_run_config(data)


def parse_run_config(data: dict) -> RunConfig:
    try:
        return RunConfig.parse_obj(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid run configuration: {problems}") from e


def _output_dir(args: argparse.Namespace, run: RunConfig) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(run.output.csv_dir)


def _json_path(args: argparse.Namespace, run: RunConfig, name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out) / f"{name}.json"
    return Path(run.output.json_report)


def _require_config(args: argparse.Namespace) -> RunConfig:
    if not args.config:
        raise ConfigError("this subcommand needs --config")
    run = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        run = run.copy(update={"seed": args.seed})
    return run


def handle_analyze(args: argparse.Namespace) -> int:
    """Roots, spectral data and the contraction report."""
    run = _require_config(args)
    pipeline = PipelineService(run)
    pipeline.build()
    report = pipeline.contraction()
    payload = {
        "command": "analyze",
        "equation": pipeline.ode.describe(),
        "roots": pipeline.roots,
        "spectral": pipeline.spectral.to_dict(),
        "contraction": report.summary(),
    }
    write_json(_json_path(args, run, "analyze"), payload, run)
    print(f"roots: {', '.join(_fmt(r) for r in pipeline.roots)}")
    print(f"lambda = {_fmt(pipeline.spectral.lam)}  L0 = {report.L0:.4g}  cl0 = {report.cl0}  cl = {report.cl}")
    return 0


def handle_solve(args: argparse.Namespace) -> int:
    """Picard solution written as CSV plus a JSON summary."""
    run = _require_config(args)
    pipeline = PipelineService(run)
    z = pipeline.solve(force=args.force or None)
    columns = stack_columns("z", np.vstack([z.stack, z.top]))
    columns["envelope"] = z.envelope
    columns["norm"] = z.norm_profile()
    write_csv(_output_dir(args, run) / "z.csv", z.grid, columns)
    payload = {
        "command": "solve",
        "lambda": z.lam,
        "iterations": z.iterations,
        "converged": z.converged,
        "update_norm": z.update_norm,
        "update_history": z.update_history,
        "residual": z.residual,
        "contraction": pipeline.contraction().summary(),
    }
    write_json(_json_path(args, run, "solve"), payload, run)
    print(f"Picard: {z.iterations} iterations, update {z.update_norm:.3e}, residual {z.residual:.3e}")
    return 0


def handle_formula(args: argparse.Namespace) -> int:
    """Assemble the configured (or requested) formula and write its report."""
    run = _require_config(args)
    pipeline = PipelineService(run)
    rep = pipeline.formula(args.kind)
    columns: Dict[str, np.ndarray] = {}
    for term in rep.components:
        columns[f"{term.name}_re"] = np.real(term.values)
        columns[f"{term.name}_im"] = np.imag(term.values)
    columns["envelope"] = rep.envelope
    write_csv(_output_dir(args, run) / f"formula_{rep.kind}.csv", rep.grid, columns)
    payload = {"command": "formula", "report": rep.to_dict()}
    write_json(_json_path(args, run, "formula"), payload, run)
    flag = "applicable" if rep.applicable else "NOT applicable"
    print(f"{rep.kind} formula for lambda = {_fmt(rep.lam)}: {flag}")
    return 0


def handle_validate(args: argparse.Namespace) -> int:
    """
    Compare the Picard solution with a reference integration.

    Checks the tail of |y'/y - (lambda + z)| and, with --wronskian, the
    normalized Wronskian of the fundamental trajectories against the limit
    predicted from the Picard solutions of every root (the Vandermonde
    product when one of them cannot be solved).
    """
    run = _require_config(args)
    pipeline = PipelineService(run)
    z = pipeline.solve(force=args.force or None)
    traj = mode_solution(pipeline.ode, pipeline.roots, pipeline.spectral.index, (run.t0, run.t_end), args.step)
    profile = log_derivative_profile(traj, 1)
    values = np.interp(z.grid, traj.grid, profile.values.real) + 1j * np.interp(z.grid, traj.grid, profile.values.imag)
    gap = values - (pipeline.spectral.lam + z.stack[0])
    tail = float(np.nanmax(np.abs(gap[len(gap) // 2:])))
    checks = {"log_derivative_tail": tail <= args.tol}
    columns = {"profile_re": values.real, "profile_im": values.imag, "gap": np.abs(gap), "envelope": z.envelope}

    payload = {"command": "validate", "log_derivative_tail": tail, "reference_max_error": traj.max_error}
    if args.wronskian:
        trajs = fundamental_trajectories(pipeline.ode, pipeline.roots, (run.t0, run.t_end), args.step)
        ratio = wronskian_check(trajs)(z.grid)
        vandermonde_product = vandermonde(pipeline.roots)
        target, source = _predicted_wronskian(pipeline, run, z.grid, force=args.force)
        if target is None:
            target = np.full(len(z.grid), vandermonde_product)
        deviation = np.abs(ratio / target - 1)
        payload["wronskian_limit"] = vandermonde_product
        payload["wronskian_target"] = source
        payload["wronskian_vandermonde_tail_deviation"] = float(
            np.max(np.abs(ratio / vandermonde_product - 1)[len(ratio) // 2:])
        )
        payload["wronskian_tail_deviation"] = float(np.max(deviation[len(deviation) // 2:]))
        checks["wronskian"] = payload["wronskian_tail_deviation"] <= args.wronskian_tol
        columns["wronskian_re"] = ratio.real
        columns["wronskian_im"] = ratio.imag

    payload["checks"] = checks
    payload["passed"] = all(checks.values())
    write_csv(_output_dir(args, run) / "validate.csv", z.grid, columns)
    write_json(_json_path(args, run, "validate"), payload, run)
    for name, ok in checks.items():
        print(f"{'✅' if ok else '❌'} {name}")
    if not payload["passed"]:
        raise AcceptanceError(f"validation failed: {[k for k, ok in checks.items() if not ok]}")
    return 0


def _predicted_wronskian(
    pipeline: PipelineService, run: RunConfig, grid: np.ndarray, force: bool = False
) -> Tuple[Optional[np.ndarray], str]:
    """Picard-predicted W / prod y_k on the grid, or None when a root cannot be solved."""
    try:
        solutions = fundamental_solutions(
            pipeline.ode, grid, run.quad, pipeline.roots, tol=run.picard.tol,
            M=run.picard.ball_radius, force=force or run.picard.force,
        )
    except NumericalError as e:
        logger.warning(f"Wronskian target falls back to the Vandermonde product: {e}")
        return None, "vandermonde"
    return predicted_wronskian(solutions).values, "picard"


def handle_example5(args: argparse.Namespace) -> int:
    """The worked fifth-order example end to end."""
    run = load_run_config(args.config) if args.config else example5_config()
    result = example5_harness(run, h=args.step)
    out = Path(args.out) if args.out else Path(run.output.csv_dir)
    write_csv(out / "example5.csv", result.grid[len(result.grid) - len(result.ratio):], {"ratio": result.ratio})
    write_json(out / "example5.json", {"command": "example5", **result.to_dict()}, run)
    for name, ok in result.checks.items():
        print(f"{'✅' if ok else '❌'} {name}")
    if not result.passed:
        raise AcceptanceError("worked example checks failed")
    return 0


def handle_selftest(args: argparse.Namespace) -> int:
    """Property suites; exit code 4 when any suite fails."""
    results = run_selftest(args.seed, args.suite or None)
    passed = all(r["passed"] for r in results.values())
    if args.out:
        write_json(Path(args.out) / "selftest.json", {"command": "selftest", "suites": results, "passed": passed})
    for name, r in results.items():
        print(f"{'✅' if r['passed'] else '❌'} {name}: worst {r['worst']:.3e} (tol {r['tol']:.0e})")
    if not passed:
        raise AcceptanceError("selftest failed")
    return 0


def _fmt(value: complex) -> str:
    value = complex(value)
    if value.imag == 0:
        return f"{value.real:.10g}"
    return f"{value.real:.10g}{value.imag:+.10g}j"


HANDLERS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "analyze": handle_analyze,
    "solve": handle_solve,
    "formula": handle_formula,
    "validate": handle_validate,
    "example5": handle_example5,
    "selftest": handle_selftest,
}


def setup_parser(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    """Register all subcommands and their flags."""
    parser = parser or argparse.ArgumentParser(prog="poincare-perron")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, needs_config: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=False, help="TOML run configuration" if needs_config else "optional override")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="random seed override")
        return p

    add("analyze", "roots, spectral data and contraction constants")
    p = add("solve", "Picard solution of the reduced equation")
    p.add_argument("--force", action="store_true", help="iterate even when (cl0) fails")
    p = add("formula", "assemble an asymptotic formula")
    p.add_argument("--kind", help="formula kind (defaults to the config)")
    p = add("validate", "compare with a reference integration")
    p.add_argument("--force", action="store_true")
    p.add_argument("--step", type=float, help="reference integrator step")
    p.add_argument("--tol", type=float, default=1e-2, help="log-derivative tail tolerance")
    p.add_argument("--wronskian", action="store_true", help="also check the normalized Wronskian")
    p.add_argument("--wronskian-tol", dest="wronskian_tol", type=float, default=0.05)
    p = add("example5", "the worked fifth-order example", needs_config=False)
    p.add_argument("--step", type=float, help="reference integrator step")
    p = add("selftest", "property suites", needs_config=False)
    p.add_argument("--suite", action="append", help="run only the named suite (repeatable)")
    return parser
