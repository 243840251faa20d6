"""Command-line entry point.

    vmsuite bench sweep --frames 4..512 --tokens-per-frame 196 --ops scan,attn \\
                        --repeats 9 --dtype f64 --out sweep.csv
    vmsuite bench fit --in sweep.csv
    vmsuite audit --config blocks.json
    vmsuite train --block dbm --seed 7 --steps 200 --out loss.csv
    vmsuite golden generate|verify --dir vectors/

Exit codes: 0 success, 2 validation error, 3 failed check.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import audit, bench, golden, train
from .config import DEFAULT_FRAMES, SweepConfig, TrainConfig, load_block_configs
from .errors import CheckFailure, ValidationError, VmsError

EXIT_OK, EXIT_VALIDATION, EXIT_CHECK = 0, 2, 3

SCAN_SLOPE = (0.85, 1.15)
ATTENTION_SLOPE = (1.7, 2.3)


def parse_frames(text: str) -> tuple[int, ...]:
    """``"4..512"`` (doubling), ``"4,8,16"`` or a single count."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split("..", 1))
            if lo < 1 or hi < lo:
                raise ValueError
            out = []
            f = lo
            while f <= hi:
                out.append(f)
                f *= 2
            return tuple(out)
        return tuple(int(v) for v in text.split(",") if v)
    except ValueError:
        raise ValidationError(f"cannot parse frame list {text!r}") from None


def _cmd_sweep(args) -> int:
    cfg = SweepConfig(
        frames=parse_frames(args.frames), tokens_per_frame=args.tokens_per_frame,
        operators=tuple(o.strip() for o in args.ops.split(",") if o.strip()),
        repeats=args.repeats, warmup=args.warmup, dtype=args.dtype, d_model=args.d_model,
        d_state=args.d_state, chunk=args.chunk, memory_budget=int(args.budget_mb * 2 ** 20),
        seed=args.seed, timing=not args.no_timing)
    print(bench.REPORT_NOTE)

    def show(r):
        wall = "-" if r.wall_ns is None else f"{r.wall_ns / 1e6:.2f} ms"
        print(f"{r.operator:<24} frames={r.frames:<6} tokens={r.tokens:<8} {wall:>12}  {r.status}",
              flush=True)

    bench.run_sweep(cfg, out=args.out, progress=show)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    records = bench.read_csv(args.input)
    fits = bench.fit_slopes(records)
    failed = False
    for f in fits:
        line = f"{f.operator:<24} slope={f.slope:.3f}  r2={f.r2:.4f}  points={f.points}"
        window = {"selective_scan_chunked": SCAN_SLOPE, "selective_scan": SCAN_SLOPE,
                  "attention_naive": ATTENTION_SLOPE}.get(f.operator)
        if args.check and window:
            ok = window[0] <= f.slope <= window[1]
            failed |= not ok
            line += f"  expected [{window[0]}, {window[1]}] {'PASS' if ok else 'FAIL'}"
        print(line)
    skipped = sum(r.status == "SKIPPED" for r in records)
    if skipped:
        print(f"{skipped} point(s) skipped over the memory budget")
    return EXIT_CHECK if failed else EXIT_OK


def _cmd_audit(args) -> int:
    configs = load_block_configs(args.config) if args.config else audit.default_configs()
    try:
        lines, _ = audit.param_audit(configs)
    except CheckFailure as exc:
        print(f"ratio mismatch: {exc}", file=sys.stderr)
        return EXIT_CHECK
    print("\n".join(lines))
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = TrainConfig(block=args.block, seed=args.seed, steps=args.steps, lr=args.lr)
    losses = train.toy_train(cfg)
    train.write_loss_csv(losses, args.out)
    print(f"{cfg.block}: loss {losses[0]:.6f} -> {losses[-1]:.6f} "
          f"({losses[0] / losses[-1]:.1f}x) over {cfg.steps} steps; wrote {args.out}")
    return EXIT_OK


def _cmd_golden(args) -> int:
    if args.mode == "generate":
        path = golden.generate(args.dir)
        print(f"wrote {path}")
        return EXIT_OK
    try:
        report = golden.verify(args.dir)
    except CheckFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CHECK
    print(f"golden verify: {len(report)} tensors ok, max rel err {max(report.values()):.2e}")
    if args.f32_drift:
        drift = golden.dtype_drift(args.dir)
        print(f"f32 recompute drift (informational): max rel err {max(drift.values()):.2e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vmsuite", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="scaling benchmark")
    bsub = b.add_subparsers(dest="bench_command", required=True)
    sw = bsub.add_parser("sweep", help="time operators over growing frame counts")
    sw.add_argument("--frames", default=f"{DEFAULT_FRAMES[0]}..{DEFAULT_FRAMES[-1]}")
    sw.add_argument("--tokens-per-frame", type=int, default=196)
    sw.add_argument("--ops", default="scan,attn")
    sw.add_argument("--repeats", type=int, default=9)
    sw.add_argument("--warmup", type=int, default=2)
    sw.add_argument("--dtype", choices=("f64", "f32"), default="f64")
    sw.add_argument("--d-model", type=int, default=32)
    sw.add_argument("--d-state", type=int, default=16)
    sw.add_argument("--chunk", type=int, default=64)
    sw.add_argument("--budget-mb", type=float, default=1024)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--no-timing", action="store_true",
                    help="evaluate each point once, in parallel, without timing")
    sw.add_argument("--out", default="sweep.csv")
    sw.set_defaults(func=_cmd_sweep)
    ft = bsub.add_parser("fit", help="log-log slope per operator")
    ft.add_argument("--in", dest="input", required=True)
    ft.add_argument("--check", action="store_true", help="exit 3 if a slope leaves its window")
    ft.set_defaults(func=_cmd_fit)

    a = sub.add_parser("audit", help="parameter ratios and temporal-module budget")
    a.add_argument("--config", help="JSON block config (object or list)")
    a.set_defaults(func=_cmd_audit)

    t = sub.add_parser("train", help="toy denoising training run")
    t.add_argument("--block", choices=("mamba", "vim", "dbm"), default="dbm")
    t.add_argument("--seed", type=int, default=7)
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--lr", type=float, default=TrainConfig.lr)
    t.add_argument("--out", default="loss.csv")
    t.set_defaults(func=_cmd_train)

    g = sub.add_parser("golden", help="generate or verify golden vectors")
    g.add_argument("mode", choices=("generate", "verify"))
    g.add_argument("--dir", default="vectors")
    g.add_argument("--f32-drift", action="store_true", help="also report float32 recompute drift")
    g.set_defaults(func=_cmd_golden)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except VmsError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
