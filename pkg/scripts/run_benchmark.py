#!/usr/bin/env python3
"""Run the full benchmark grid and print the two summary tables.

Reproduces the reported table structure: a detailed (2, 2) row set with
objective errors and violations, and the average-time grid over (K, M) cells.
Oracle-backed methods need the validator CLI on PATH; without it the script
falls back to the self-contained method only.
"""

import argparse
import shutil
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from isacbf.harness import GenConfig, run_benchmark


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="bench-out")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cells", default="2x2,2x4,2x8,4x4,4x8,8x8")
    ap.add_argument("--oracle-cmd", default="oracle")
    args = ap.parse_args()

    cells = [tuple(int(x) for x in tok.split("x")) for tok in args.cells.split(",")]
    methods = ["dual-fpi"]
    if shutil.which(args.oracle_cmd):
        methods += ["dual-sdp", "direct-sdp"]
    else:
        print(f"validator '{args.oracle_cmd}' not found; running dual-fpi only", file=sys.stderr)

    report = run_benchmark(
        cells,
        seeds=args.seeds,
        methods=methods,
        base_cfg=GenConfig(K=cells[0][0], M=cells[0][1], seed=args.seed),
        oracle_cmd=args.oracle_cmd,
        out_dir=args.out_dir,
    )

    print("\nDetailed rows (mean over seeds):")
    print(f"{'K':>2} {'M':>2} {'method':>10} {'time[s]':>9} {'objective':>12} "
          f"{'obj err':>10} {'sinr viol':>10} {'mse viol':>10}")
    for r in report.rows:
        err = "-" if r.mean_obj_error is None else f"{r.mean_obj_error:.2e}"
        print(f"{r.K:>2} {r.M:>2} {r.method:>10} {r.mean_seconds:>9.4f} "
              f"{r.mean_objective:>12.6g} {err:>10} {r.sinr_violation:>10.2e} "
              f"{r.mse_violation:>10.2e}")

    print("\nAverage time grid:")
    for k, m in cells:
        row = {r.method: r.mean_seconds for r in report.rows if (r.K, r.M) == (k, m)}
        cells_txt = "  ".join(f"{meth}={row.get(meth, float('nan')):.3f}s" for meth in methods)
        print(f"  K={k} M={m}: {cells_txt}")
    print(f"\nCSV written under {args.out_dir}/")


if __name__ == "__main__":
    main()
