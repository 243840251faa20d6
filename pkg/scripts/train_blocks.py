"""Train every block kind on the toy denoising task and compare loss curves.

    python3 scripts/train_blocks.py [--steps 200] [--out-dir curves/]
"""

import argparse
from pathlib import Path

from vmsuite.config import TrainConfig
from vmsuite.train import toy_train, write_loss_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=TrainConfig.steps)
    ap.add_argument("--seed", type=int, default=TrainConfig.seed)
    ap.add_argument("--out-dir", type=Path)
    args = ap.parse_args()
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
    for kind in ("mamba", "vim", "dbm"):
        losses = toy_train(TrainConfig(block=kind, seed=args.seed, steps=args.steps))
        print(f"{kind:<6} {losses[0]:.5f} -> {losses[-1]:.5f}  ({losses[0] / losses[-1]:.1f}x)")
        if args.out_dir:
            write_loss_csv(losses, args.out_dir / f"{kind}.csv")


if __name__ == "__main__":
    main()
