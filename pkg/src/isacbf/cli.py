"""Command-line interface: generate / solve / bench / trace."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .ascent import AscentParams, InfeasibleScenarioError, dual_ascent_solve
from .harness import METHODS, GenConfig, emit_fpi_trace, generate_scenario, run_benchmark


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--tol-inner", type=float, default=1e-12, help="fixed-point stop tolerance")
    p.add_argument("--tol-outer", type=float, default=1e-4, help="subgradient-norm stop tolerance")
    p.add_argument("--max-outer", type=int, default=500, help="outer iteration cap")
    p.add_argument(
        "--no-guards",
        action="store_true",
        help="stop on the subgradient norm alone, without the MSE-slack and duality-gap guards",
    )


def _params(args) -> AscentParams:
    params = AscentParams(
        inner_tol=args.tol_inner,
        grad_tol=args.tol_outer,
        max_outer=args.max_outer,
    )
    return params.without_guards() if args.no_guards else params


def _cmd_generate(args) -> int:
    cfg = GenConfig(
        K=args.K,
        M=args.M,
        Q=args.Q,
        seed=args.seed,
        screen=not args.no_screen,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        scenario, resamples = generate_scenario(cfg, instance=i, return_resamples=True)
        path = out_dir / f"instance_{i:04d}.json"
        fileio.save_instance(scenario, path)
        print(f"{path} (resamples: {resamples})")
    return 0


def _cmd_solve(args) -> int:
    scenario = fileio.load_instance(args.instance)
    params = _params(args)
    try:
        sol = dual_ascent_solve(scenario, params)
    except InfeasibleScenarioError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(args.instance).with_suffix(".solution.json")
    fileio.save_solution(
        out,
        scenario=scenario,
        covariances=sol.covariances,
        powers=sol.powers,
        objective=sol.total_power,
        lam=sol.lam,
        status=sol.status,
        method="dual-fpi",
        dual_value=sol.dual_value,
        grad_norm=sol.grad_norm,
        sinr_violation=sol.report.sinr_violation,
        mse_violation=sol.report.mse_violation,
    )
    log = Path(args.log) if args.log else out.with_suffix(".log.csv")
    fileio.write_ascent_log_csv(log, sol.records)
    print(
        f"{out} status={sol.status} objective={sol.total_power:.10g} "
        f"grad_norm={sol.grad_norm:.3e} iters={sol.iterations}"
    )
    return 0 if sol.status == "converged" else 1


def _cmd_bench(args) -> int:
    cells = []
    for tok in args.cells.split(","):
        k, m = tok.lower().split("x")
        cells.append((int(k), int(m)))
    methods = args.methods.split(",")
    report = run_benchmark(
        cells,
        seeds=args.seeds,
        methods=methods,
        base_cfg=GenConfig(K=cells[0][0], M=cells[0][1], seed=args.seed),
        params=_params(args),
        oracle_cmd=args.oracle_cmd,
        out_dir=args.out_dir,
        jobs=args.jobs,
    )
    for row in report.rows:
        err = "" if row.mean_obj_error is None else f" obj_err={row.mean_obj_error:.2e}"
        print(
            f"K={row.K} M={row.M} {row.method}: mean_time={row.mean_seconds:.4f}s "
            f"obj={row.mean_objective:.6g}{err} failures={row.failures}/{row.seeds}"
        )
    print(f"report written to {Path(args.out_dir) / 'report.csv'}")
    return 0


def _cmd_trace(args) -> int:
    prob = fileio.load_downlink_instance(args.instance)
    inits = []
    for tok in args.inits.split(";"):
        inits.append(np.array([float(x) for x in tok.split(",")]))
    paths = emit_fpi_trace(
        prob,
        inits,
        variant=args.variant,
        out_dir=args.out_dir,
        grid_n=args.grid,
        box_hi=args.box_hi,
        tol=args.tol_inner,
    )
    for p in paths:
        print(p)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="isacbf",
        description="ISAC beamforming: power minimization under SINR and beampattern-MSE constraints",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw random instances to files")
    g.add_argument("--K", type=int, required=True)
    g.add_argument("--M", type=int, required=True)
    g.add_argument("--Q", type=int, default=36)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default=".")
    g.add_argument("--no-screen", action="store_true", help="skip feasibility screening")
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("instance")
    s.add_argument("--out", default=None)
    s.add_argument("--log", default=None, help="per-iteration CSV log path")
    _add_solver_flags(s)
    s.set_defaults(func=_cmd_solve)

    b = sub.add_parser("bench", help="benchmark methods over (K, M) cells")
    b.add_argument("--cells", required=True, help="comma list like 2x2,4x4")
    b.add_argument("--seeds", type=int, default=20)
    b.add_argument("--methods", default="dual-fpi", help=f"comma list from {','.join(METHODS)}")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--oracle-cmd", default="oracle")
    b.add_argument("--jobs", type=int, default=1)
    _add_solver_flags(b)
    b.set_defaults(func=_cmd_bench)

    t = sub.add_parser("trace", help="emit fixed-point iterate traces for plotting")
    t.add_argument("--instance", required=True, help="downlink instance file (with B)")
    t.add_argument("--inits", required=True, help="semicolon list of comma vectors, e.g. 100,100;0.05,0.05")
    t.add_argument("--variant", choices=("plain", "projected"), default="plain")
    t.add_argument("--out-dir", default=".")
    t.add_argument("--grid", type=int, default=101)
    t.add_argument("--box-hi", type=float, default=None)
    t.add_argument("--tol-inner", type=float, default=1e-12)
    t.set_defaults(func=_cmd_trace)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
