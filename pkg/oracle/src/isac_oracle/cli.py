"""Validator CLI: solve-sdp / solve-gdb / compare on the shared file formats."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def _cmd_solve_sdp(args) -> int:
    import json

    from . import iofmt
    from .sdp import solve_direct_sdp

    inst = iofmt.load_instance(args.instance)
    raw = json.loads(Path(args.instance).read_text())
    res = solve_direct_sdp(inst)
    out = Path(args.out) if args.out else Path(args.instance).with_suffix(".sdp-solution.json")
    iofmt.save_solution(
        out,
        raw,
        res.covariances,
        res.objective,
        status=res.status,
        wall_time_s=res.wall_seconds,
        solver_time_s=res.solver_seconds,
        solver=res.solver,
        max_residual=res.max_residual,
        method="direct-sdp",
    )
    print(f"{out} status={res.status} objective={res.objective} wall={res.wall_seconds:.3f}s")
    return 0 if res.ok else 1


def _cmd_solve_gdb(args) -> int:
    import json

    from . import iofmt
    from .sdp import solve_gdb_sdp

    inst = iofmt.load_gdb_instance(args.instance)
    raw = json.loads(Path(args.instance).read_text())
    res = solve_gdb_sdp(inst)
    out = Path(args.out) if args.out else Path(args.instance).with_suffix(".gdb-solution.json")
    iofmt.save_solution(
        out,
        raw,
        res.covariances,
        res.objective,
        status=res.status,
        wall_time_s=res.wall_seconds,
        solver_time_s=res.solver_seconds,
        solver=res.solver,
        max_residual=res.max_residual,
        method="gdb-sdp",
    )
    print(f"{out} status={res.status} objective={res.objective} wall={res.wall_seconds:.3f}s")
    return 0 if res.ok else 1


def _cmd_compare(args) -> int:
    from .compare import DEFAULT_FIELDS, compare_solutions

    fields = tuple(args.fields.split(",")) if args.fields else DEFAULT_FIELDS
    diffs, ok = compare_solutions(args.a, args.b, args.tol, fields)
    for field, diff in diffs.items():
        marker = "ok" if diff <= args.tol else "EXCEEDS"
        print(f"{field}: {diff:.3e} ({marker} at tol {args.tol:.1e})")
    if not diffs:
        print("no comparable fields present in both files", file=sys.stderr)
        return 2
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="oracle", description="SDP ground-truth validator for ISAC beamforming files"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve-sdp", help="solve the full problem from an instance file")
    s.add_argument("instance")
    s.add_argument("--out", default=None)
    s.set_defaults(func=_cmd_solve_sdp)

    g = sub.add_parser("solve-gdb", help="solve a weighted downlink instance (file with B)")
    g.add_argument("instance")
    g.add_argument("--out", default=None)
    g.set_defaults(func=_cmd_solve_gdb)

    c = sub.add_parser("compare", help="diff two solution files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--tol", type=float, required=True)
    c.add_argument("--fields", default=None, help="comma list from objective,p,V,lambda")
    c.set_defaults(func=_cmd_compare)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
