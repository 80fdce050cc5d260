#!/usr/bin/env python3
"""Plot two-user fixed-point traces emitted by `isacbf trace`.

Reads every trace_*.csv in the given directory plus curves.csv, draws the
map-component zero sets, the singular set of C(beta) and the iterate paths.
Plotting is intentionally kept out of the solver package; this script is the
matplotlib consumer of its CSV output.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("trace_dir")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    trace_dir = Path(args.trace_dir)

    fig, ax = plt.subplots(figsize=(6, 6))
    curves = trace_dir / "curves.csv"
    if curves.exists():
        rows = load_csv(curves)
        b0 = sorted({float(r["beta_0"]) for r in rows})
        b1 = sorted({float(r["beta_1"]) for r in rows})
        shape = (len(b0), len(b1))

        def grid(col):
            vals = np.full(shape, np.nan)
            for r in rows:
                i = b0.index(float(r["beta_0"]))
                j = b1.index(float(r["beta_1"]))
                if r[col] != "":
                    vals[i, j] = float(r[col])
            return vals

        bb0, bb1 = np.meshgrid(b0, b1, indexing="ij")
        for col, color, label in (("i_0", "tab:red", "beta_0 = I_0"),
                                  ("i_1", "tab:blue", "beta_1 = I_1"),
                                  ("det_c", "tab:purple", "det C = 0")):
            vals = grid(col)
            ref = bb0 if col == "i_0" else bb1 if col == "i_1" else 0.0
            ax.contour(bb0, bb1, vals - ref, levels=[0.0], colors=color)
            ax.plot([], [], color=color, label=label)

    for path in sorted(trace_dir.glob("trace_*.csv")):
        rows = load_csv(path)
        xs = [float(r["beta_0"]) for r in rows]
        ys = [float(r["beta_1"]) for r in rows]
        ax.plot(xs, ys, "o-", ms=3, lw=1, label=path.stem)
        ax.plot(xs[-1], ys[-1], "k*", ms=10)

    ax.set_xlabel("beta_0")
    ax.set_ylabel("beta_1")
    ax.legend(fontsize=8)
    out = args.out or trace_dir / "trace.png"
    fig.savefig(out, dpi=150, bbox_inches="tight")
    print(out)


if __name__ == "__main__":
    main()
