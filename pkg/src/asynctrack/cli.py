"""Command-line experiment runner.

Subcommands: ``verify`` checks the standing assumptions and prints the
per-epoch constants; ``simulate`` runs the asynchronous law and writes
the trace, cycle, and bound artifacts; ``plan`` computes cycle
requirements and budget allocations, optionally driving a schedule
until the detected cycles meet the plan.

Exit codes: 0 ok, 2 assumption violation, 3 solver failure, 4 config
error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .blocks import block_max_norm, PartitionedVector
from .bounds import BoundInputs, bound_series, required_cycles_finite
from .config import build_problem, build_schedule, load_config
from .cycles import detect_cycles
from .errors import (
    AssumptionViolation,
    ConfigError,
    ConvergenceFailure,
    InfeasibleBudget,
    SolverFailure,
)
from .objectives import assemble_problem, check_gradient
from .planner import brute_force_plan, solve_kkt
from . import reporting
from .simulator import CommRule, DelayRule, Schedule, audit_trace, error_series, run

EXIT_OK = 0
EXIT_ASSUMPTION = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4

_ENFORCE_TICK_CAP = 10_000


def _load(args) -> tuple:
    config = load_config(args.config)
    if args.out is not None:
        config.outputs = args.out
    if args.problem_seed is not None:
        if config.problem["kind"] == "explicit":
            raise ConfigError("explicit problems carry no seed to override")
        config.problem["seed"] = args.problem_seed
    if args.schedule_seed is not None:
        config.schedule["seed"] = args.schedule_seed
    return config


def _default_initial_error(problem) -> float:
    u0 = problem.box.clip(np.zeros(problem.partition.total_dim))
    return block_max_norm(PartitionedVector(
        u0 - problem.constants[0].minimizer.data, problem.partition))


def _print_constants(problem) -> None:
    print(f"{'t':>3} {'beta':>12} {'L':>12} {'gamma':>12} {'q':>12} "
          f"{'sigma':>12} {'kappa':>7}")
    for t, c in enumerate(problem.constants):
        sigma = f"{c.sigma:.6g}" if c.sigma is not None else "-"
        print(f"{t:>3} {c.beta:>12.6g} {c.lipschitz:>12.6g} {c.stepsize:>12.6g} "
              f"{c.contraction:>12.6g} {sigma:>12} {c.kappa:>7}")


def cmd_verify(args) -> int:
    config = _load(args)
    problem = build_problem(config)
    rng = np.random.default_rng(int(config.problem.get("seed", 0)) + 1)
    for epoch in problem.epochs:
        check_gradient(epoch, problem.box, rng, points=2)
    print(f"all {problem.horizon + 1} epochs pass the assumption checks")
    _print_constants(problem)
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load(args)
    problem = build_problem(config)
    schedule = build_schedule(config)
    outdir = Path(config.outputs)
    outdir.mkdir(parents=True, exist_ok=True)

    trace = run(problem, schedule)
    report = audit_trace(trace, require_epoch_computes=(schedule.mode == "synchronous"))
    assert report.ok, f"trace audit failed: {report.first_violation}"

    cycles = detect_cycles(trace)
    series = error_series(trace, problem)
    inputs = BoundInputs.from_run(problem, trace, cycles)
    bounds = bound_series(inputs)
    measured = series.max_boundary

    reporting.write_errors_csv(outdir / "errors.csv", trace, series.epoch_of_tick)
    reporting.write_events_csv(outdir / "events.csv", trace)
    reporting.write_cycles_csv(outdir / "cycles.csv", cycles)
    reporting.write_bounds_csv(outdir / "bounds.csv", measured, bounds)
    if not args.no_figures:
        reporting.figure_tracking_error(outdir / "tracking_error.png", trace, problem.eta)
        reporting.figure_bound_vs_error(outdir / "bound_vs_error.png", measured, bounds)

    print(f"{'t':>3} {'c(t)':>6} {'max error':>14} {'bound':>14} {'ok':>4}")
    violations = 0
    for t in range(problem.horizon + 1):
        ok = measured[t] <= bounds[t] + 1e-12
        violations += 0 if ok else 1
        print(f"{t:>3} {cycles.counts[t]:>6} {measured[t]:>14.6g} "
              f"{bounds[t]:>14.6g} {'yes' if ok else 'NO':>4}")
    print(f"artifacts written to {outdir}")
    if violations:
        print(f"WARNING: measured error exceeded the bound at {violations} epoch(s)")
    return EXIT_OK


def _enforced_kappas(targets, n_agents) -> list:
    if n_agents == 1:
        return [max(1, int(c)) for c in targets]
    return [max(1, 2 * int(c)) for c in targets]


def _enforce_plan(problem, targets, stepsize_fraction):
    """Drive a maximal schedule until the detected cycles meet the plan."""
    schedule = Schedule(mode="synchronous", seed=0,
                        comm=CommRule.always(), delay=DelayRule.zero())
    kappas = _enforced_kappas(targets, problem.n_agents)
    for _ in range(20):
        driven = assemble_problem(problem.epochs, problem.box, kappas,
                                  stepsize_fraction=stepsize_fraction)
        trace = run(driven, schedule)
        counts = detect_cycles(trace).counts
        short = [t for t in range(len(targets)) if counts[t] < targets[t]]
        if not short:
            return driven, trace, counts
        grew = False
        for t in short:
            if kappas[t] < _ENFORCE_TICK_CAP:
                kappas[t] = min(_ENFORCE_TICK_CAP, kappas[t] * 2)
                grew = True
        if not grew:
            return driven, trace, counts
    return driven, trace, counts


def cmd_plan(args) -> int:
    config = _load(args)
    if config.planner is None:
        raise ConfigError("plan command needs a planner section in the config")
    problem = build_problem(config)
    outdir = Path(config.outputs)
    outdir.mkdir(parents=True, exist_ok=True)

    q = [c.contraction for c in problem.constants]
    sigma = [c.sigma for c in problem.constants[:-1]]
    d0 = _default_initial_error(problem)
    inputs = BoundInputs(q=q, sigma=sigma, d0=d0, cycles=[1.0] * len(q))
    b = inputs.drift_bound
    q_max = inputs.q_max
    print(f"D0 = {d0:.6g}, B = {b:.6g}, q_max = {q_max:.6g}")

    rho = config.planner.get("rho")
    c_req = None
    if rho is not None:
        c_req = required_cycles_finite(rho, b, q_max, problem.horizon)
        print(f"cycles per epoch for error <= {rho:g} at every boundary: {c_req}")

    plan = None
    if "budget" in config.planner:
        budget = config.planner["budget"]
        plan = solve_kkt(q, sigma, d0, budget)
        print(f"budget {budget}: objective {plan.objective_int:.6g} (integer), "
              f"{plan.objective_real:.6g} (real), mu = {plan.mu:.6g}, "
              f"stationarity residual {plan.residual:.3g}")
        c_min = config.planner["c_min"]
        spare = budget - (problem.horizon + 1) * c_min
        enumerable = (spare >= 0 and
                      _enumeration_count(spare, problem.horizon) <= 2_000_000)
        if enumerable:
            oracle_plan, oracle_val = brute_force_plan(q, sigma, d0, budget, c_min)
            gap = (plan.objective_int - oracle_val) / oracle_val if oracle_val > 0 else 0.0
            print(f"enumeration oracle: objective {oracle_val:.6g} at {oracle_plan}; "
                  f"plan is {gap * 100:.2f}% above it")
        else:
            print("enumeration oracle skipped (instance too large)")

    if plan is not None:
        c_real, c_int = plan.c_real, plan.c_int
    else:
        c_real = [float(c_req)] * (problem.horizon + 1)
        c_int = [int(c_req)] * (problem.horizon + 1)
    reporting.write_plan_csv(outdir / "plan.csv", c_real, c_int)
    if not args.no_figures:
        reporting.figure_plan(outdir / "plan.png", c_real, c_int)

    if config.planner["enforce"]:
        targets = c_int
        driven, trace, counts = _enforce_plan(problem, targets, config.stepsize_fraction)
        achieved = all(counts[t] >= targets[t] for t in range(len(targets)))
        boundary = trace.boundary_errors.max(axis=1)
        print(f"{'t':>3} {'target':>7} {'achieved':>9} {'max error':>14}")
        for t in range(len(targets)):
            print(f"{t:>3} {targets[t]:>7} {counts[t]:>9} {boundary[t]:>14.6g}")
        if not achieved:
            print("WARNING: schedule could not realize the plan within the tick cap")
        if rho is not None:
            worst = float(boundary.max())
            ok = worst <= rho
            print(f"worst boundary error {worst:.6g} "
                  f"{'<=' if ok else '>'} rho = {rho:g}")
        reporting.write_bounds_csv(
            outdir / "enforced_errors.csv", boundary,
            bound_series(BoundInputs(q=q, sigma=sigma, d0=d0, cycles=counts)),
        )
    print(f"artifacts written to {outdir}")
    return EXIT_OK


def _enumeration_count(spare: int, horizon: int) -> int:
    import math

    return math.comb(spare + horizon + 1, horizon + 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asynctrack",
        description="Asynchronous tracking of time-varying convex optima: "
                    "verify assumptions, simulate, and plan communication cycles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, doc in (
        ("verify", cmd_verify, "check assumptions and print per-epoch constants"),
        ("simulate", cmd_simulate, "run the asynchronous law and write artifacts"),
        ("plan", cmd_plan, "compute cycle requirements and budget allocations"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="path to the YAML experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--problem-seed", type=int, default=None,
                       help="override the problem seed")
        p.add_argument("--schedule-seed", type=int, default=None,
                       help="override the schedule seed")
        p.add_argument("--no-figures", action="store_true",
                       help="skip rendering PNG figures next to the CSVs")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        where = f" (epoch {exc.epoch})" if exc.epoch is not None else ""
        print(f"assumption violation{where}: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (SolverFailure, ConvergenceFailure, InfeasibleBudget) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
