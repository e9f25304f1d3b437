#!/usr/bin/env python3
"""Accuracy-vs-density curve data for a fixed layer geometry.

Sweeps the first junction's out-degree across the feasible range (latter
junctions stay fixed), trains each point `--reps` times per sparsity method,
and writes a CSV ready for external plotting.  Works on the synthetic fixture
out of the box; pass --mnist-dir for the real thing.

  python scripts/density_sweep.py --out sweep.csv
  python scripts/density_sweep.py --mnist-dir /data/mnist --layers 800,100,10 \\
      --fixed-d-out 10 --epochs 50 --reps 5
"""

import argparse
import csv
import sys
import time

import numpy as np

from sparsepipe import datasets, engine
from sparsepipe.cli import build_patterns
from sparsepipe.engine import TrainConfig, init_model
from sparsepipe.topology import NetworkConfig, enumerate_densities


def load(args):
    if args.mnist_dir:
        return datasets.load_mnist(args.mnist_dir, pad_to=args.layers[0])
    full = datasets.synthetic_dataset(
        args.synth_samples, args.layers[0], args.layers[-1], separation=6.0, seed=0
    )
    rest, test = datasets.split_train_val(full, args.synth_samples // 5)
    train, val = datasets.split_train_val(rest, args.synth_samples // 5)
    return train, val, test


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--layers", default="16,10,4",
                    type=lambda s: tuple(int(x) for x in s.split(",")))
    ap.add_argument("--fixed-d-out", default=None, type=int,
                    help="out-degree for junctions 2..L (default: fully connected)")
    ap.add_argument("--methods", default="clashfree,structured,random")
    ap.add_argument("--points", type=int, default=6, help="densities per curve")
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--lr", type=float, default=0.01, help="use 0.001 for MNIST")
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--mnist-dir", default="")
    ap.add_argument("--synth-samples", type=int, default=2000)
    ap.add_argument("--out", default="density_sweep.csv")
    args = ap.parse_args()

    layers = args.layers
    L = len(layers) - 1
    tail = [args.fixed_d_out or layers[i + 1] for i in range(1, L)]
    options = enumerate_densities(layers[0], layers[1])
    step = max(1, len(options) // args.points)
    picks = options[::step][-args.points:] or options

    data = load(args)
    rows = []
    for opt in picks:
        d_out = (opt.d_out, *tail)
        # halve the lane count where the layer is even so D >= 2 and the
        # clash-free draws actually differ between seeds
        z = tuple(layers[i] // 2 if layers[i] % 2 == 0 else layers[i] for i in range(L))
        try:
            net = NetworkConfig(layers, d_out, z)
        except Exception as exc:
            print(f"skip d_out={d_out}: {exc}")
            continue
        for method in args.methods.split(","):
            for rep in range(args.reps):
                seed = 1000 * rep + opt.d_out
                t0 = time.time()
                patterns, _ = build_patterns(net, method, seed,
                                             train_features=data[0].features)
                model = init_model(patterns, net.layer_sizes, seed=seed)
                cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                                  optimizer="adam", decay=1e-5,
                                  l2=1e-4 * float(net.density_net),
                                  batch_size=args.batch_size, seed=seed)
                engine.train(model, data[0], data[1], cfg)
                acc = engine.evaluate(model, data[2])
                rows.append((method, "|".join(map(str, d_out)),
                             float(net.density_net), rep, acc))
                print(f"d_out={d_out} {method} rep={rep}: acc={acc:.4f}"
                      f" ({time.time() - t0:.0f}s)")

    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "d_out", "rho_net", "rep", "test_acc"])
        w.writerows(rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
