#!/usr/bin/env python3
"""Plot the traces written by `crmac simulate`.

usage: plot_traces.py OUT_DIR/SCENARIO [--save FILE]

Reads every trace_<controller>.csv in the directory and metrics.json, and
draws states, tracking error norm, control input and (when present) V.
"""

import argparse
import csv
import json
import math
from pathlib import Path

import matplotlib.pyplot as plt


def read_trace(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, data = rows[0], rows[1:]
    cols = {name: [float(r[i]) for r in data] for i, name in enumerate(header)}
    return header, cols


def group(header, prefix):
    return [h for h in header if h.startswith(prefix + "_")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dir", type=Path)
    ap.add_argument("--save", type=Path, help="write the figure instead of showing it")
    args = ap.parse_args()

    traces = sorted(args.dir.glob("trace_*.csv"))
    if not traces:
        raise SystemExit(f"no trace_*.csv in {args.dir}")
    metrics = {}
    mpath = args.dir / "metrics.json"
    if mpath.exists():
        metrics = {r["controller"]: r for r in json.loads(mpath.read_text())["runs"]}

    has_v = False
    loaded = []
    for path in traces:
        header, cols = read_trace(path)
        name = path.stem.removeprefix("trace_")
        loaded.append((name, header, cols))
        has_v = has_v or "V" in cols

    nrows = 4 if has_v else 3
    fig, axes = plt.subplots(nrows, 1, sharex=True, figsize=(9, 2.6 * nrows))
    for name, header, cols in loaded:
        t = cols["t"]
        label = name
        m = metrics.get(name)
        if m and m.get("diverged"):
            label += f" (diverged at {m['diverged_at']:.1f} s)"
        for h in group(header, "x"):
            axes[0].plot(t, cols[h], label=f"{name} {h}")
        ey = group(header, "ey")
        norm = [math.sqrt(sum(cols[h][k] ** 2 for h in ey)) for k in range(len(t))]
        axes[1].semilogy(t, [max(v, 1e-16) for v in norm], label=label)
        for h in group(header, "u"):
            axes[2].plot(t, cols[h], label=f"{name} {h}")
        if has_v and "V" in cols:
            axes[3].plot(t, cols["V"], label=name)

    axes[0].set_ylabel("x")
    axes[1].set_ylabel("||e_y||")
    axes[2].set_ylabel("u")
    if has_v:
        axes[3].set_ylabel("V")
    axes[-1].set_xlabel("t [s]")
    for ax in axes:
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize="small", ncol=2)
    fig.suptitle(args.dir.name)
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=120)
    else:
        plt.show()


if __name__ == "__main__":
    main()
