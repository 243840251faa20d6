"""Run the default scaling sweep and print the fitted log-log slopes.

    python3 scripts/scaling_sweep.py [--dtype f32] [--out sweep.csv]
"""

import argparse

from vmsuite import bench
from vmsuite.cli import ATTENTION_SLOPE, SCAN_SLOPE
from vmsuite.config import SweepConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dtype", default="f32", choices=("f32", "f64"))
    ap.add_argument("--repeats", type=int, default=9)
    ap.add_argument("--out", default="sweep.csv")
    args = ap.parse_args()

    cfg = SweepConfig(dtype=args.dtype, repeats=args.repeats)
    print(bench.REPORT_NOTE)
    records = bench.run_sweep(cfg, out=args.out, progress=lambda r: print(
        f"{r.operator:<24} frames={r.frames:<4} {r.status:<8} "
        f"{'' if r.wall_ns is None else f'{r.wall_ns / 1e6:.2f} ms'}", flush=True))
    windows = {"selective_scan_chunked": SCAN_SLOPE, "attention_naive": ATTENTION_SLOPE}
    for f in bench.fit_slopes(records):
        lo, hi = windows.get(f.operator, (float("-inf"), float("inf")))
        print(f"{f.operator:<24} slope {f.slope:.3f} r2 {f.r2:.4f} "
              f"{'in' if lo <= f.slope <= hi else 'OUTSIDE'} [{lo}, {hi}]")


if __name__ == "__main__":
    main()
