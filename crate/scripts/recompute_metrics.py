#!/usr/bin/env python3
"""Recompute the distance-based metrics of a run directory from truth.csv and
estimate.csv and compare them with metrics.csv.

Usage: recompute_metrics.py RUN_DIR [--tol 1e-9]

Exits 0 when every recomputed value matches within the relative tolerance,
1 on a mismatch and 2 on unreadable input.
"""

import argparse
import csv
import math
import sys
from pathlib import Path


def read_positions(path):
    with open(path, newline="") as f:
        return [
            (float(r["t"]), float(r["px"]), float(r["py"]), float(r["pz"]))
            for r in csv.DictReader(f)
        ]


def recompute(run_dir):
    truth = read_positions(run_dir / "truth.csv")
    est = read_positions(run_dir / "estimate.csv")
    if len(truth) != len(est):
        raise ValueError(f"{len(truth)} truth rows but {len(est)} estimate rows")
    for a, b in zip(truth, est):
        if a[0] != b[0]:
            raise ValueError(f"stamp mismatch {a[0]} vs {b[0]}")
    distance = sum(math.dist(a[1:], b[1:]) for a, b in zip(truth, truth[1:]))
    err = [math.dist(a[1:], b[1:]) for a, b in zip(truth, est)]
    mx = max(err, default=0.0)
    last = err[-1] if err else 0.0
    rms = math.sqrt(sum(e * e for e in err) / len(err)) if err else 0.0

    def pct(e):
        return 100.0 * e / distance if distance > 0 else math.nan

    return {
        "distance": distance,
        "max_position_error": mx,
        "final_position_error": last,
        "rms_position_error": rms,
        "max_position_error_pct": pct(mx),
        "final_position_error_pct": pct(last),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()
    try:
        ours = recompute(args.run_dir)
        with open(args.run_dir / "metrics.csv", newline="") as f:
            logged = {r["name"]: r["value"] for r in csv.DictReader(f)}
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    bad = 0
    for name, value in ours.items():
        if name not in logged:
            print(f"{name}: missing from metrics.csv")
            bad += 1
            continue
        ref = float(logged[name])
        gap = abs(value - ref) / max(abs(ref), 1e-300)
        ok = gap <= args.tol or value == ref
        print(f"{name}: logged {ref!r} recomputed {value!r} {'ok' if ok else 'MISMATCH'}")
        bad += not ok
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
