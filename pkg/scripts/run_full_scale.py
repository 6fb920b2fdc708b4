#!/usr/bin/env python3
"""Train the full-size model (d_model=512, 3 blocks, ~19.8M parameters).

This is the stretch configuration. On pure numpy it is slow: expect hours
per epoch on a CPU. Prefer scripts/run_desk_scale.py unless you really
want the full-width run; this script exists so the default configuration
has a reproducible entry point.

Usage:
    python3 scripts/run_full_scale.py path/to/recordings.csv [--epochs 20]
        [--seed 0] [--out full.ckpt]
"""

import argparse
import sys
import time

from eened.config import ModelConfig, TrainConfig
from eened.data import TEST, load_dataset, normalize, split
from eened.model import model_init, save_checkpoint
from eened.train import evaluate, train


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv", help="full 11500-row recordings CSV")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="full.ckpt")
    args = parser.parse_args(argv)

    cfg = ModelConfig(seed=args.seed)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       lr=args.lr, seed=args.seed)
    dataset = normalize(split(load_dataset(args.csv, cfg.t_in), seed=args.seed))

    model = model_init(cfg)
    print(f"parameters: {model.params.n_params()}")
    started = time.monotonic()
    model, _ = train(model, dataset, tcfg, log_fn=print)
    print(f"train_seconds={time.monotonic() - started:.1f}")

    sys.stdout.write(evaluate(model, dataset, tag=TEST).report())
    save_checkpoint(model, args.out)
    print(f"checkpoint written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
