#!/usr/bin/env python3
"""Desk-scale MNIST reproductions (acceptance criteria 11-14), standalone.

Needs the four canonical MNIST IDX files (optionally gzipped) in --data-dir or
$SPARSEPIPE_MNIST.  The full protocol is 50 epochs x 5 runs per configuration
(hours on a laptop); --epochs/--runs trim the budget for spot checks, in which
case the tolerance verdicts are reported but flagged as reduced-budget.

  python scripts/mnist_criteria.py --data-dir /data/mnist --criteria 11
  python scripts/mnist_criteria.py --data-dir /data/mnist --criteria 11,12,13,14
"""

import argparse
import csv
import os
import sys
import time

import numpy as np
from scipy import stats

from sparsepipe import datasets, engine
from sparsepipe.cli import build_patterns
from sparsepipe.engine import TrainConfig, init_model
from sparsepipe.topology import NetworkConfig


def train_once(net, method, seed, epochs, data, l2_scale=1e-4):
    train, val, test = data
    patterns, _ = build_patterns(net, method, seed, train_features=train.features)
    model = init_model(patterns, net.layer_sizes, seed=seed)
    cfg = TrainConfig(
        learning_rate=0.001, epochs=epochs, optimizer="adam", decay=1e-5,
        l2=l2_scale * float(net.density_net), batch_size=256, seed=seed,
    )
    t0 = time.time()
    engine.train(model, train, val, cfg)
    acc = engine.evaluate(model, test)
    print(f"    {method} seed={seed}: test_acc={acc:.4f} ({time.time() - t0:.0f}s)")
    return acc


def runs(net, method, n_runs, epochs, data):
    return np.array([train_once(net, method, s, epochs, data) for s in range(n_runs)])


def ci90(acc):
    if acc.size < 2:
        return acc.mean(), acc.mean()
    half = stats.t.ppf(0.95, acc.size - 1) * acc.std(ddof=1) / np.sqrt(acc.size)
    return acc.mean() - half, acc.mean() + half


def criterion_11(data, epochs, n_runs, rows):
    print("criterion 11: FC (800,100,10), target mean 98.0% +/- 0.5")
    net = NetworkConfig((800, 100, 10), (100, 10))
    accs = runs(net, "dense", n_runs, epochs, data)
    ok = abs(accs.mean() - 0.980) <= 0.005
    rows.append(("11", "dense", "100,10", epochs, n_runs, accs.mean(), *ci90(accs), ok))
    print(f"  mean={accs.mean():.4f}  -> {'PASS' if ok else 'FAIL'}")
    return ok


def criterion_12(data, epochs, n_runs, rows):
    print("criterion 12: structured d_out=(20,10), target mean 97.2% +/- 0.6")
    net = NetworkConfig((800, 100, 10), (20, 10))
    accs = runs(net, "structured", n_runs, epochs, data)
    ok = abs(accs.mean() - 0.972) <= 0.006
    rows.append(("12", "structured", "20,10", epochs, n_runs, accs.mean(), *ci90(accs), ok))
    print(f"  mean={accs.mean():.4f}  -> {'PASS' if ok else 'FAIL'}")
    return ok


def criterion_13(data, epochs, n_runs, rows):
    print("criterion 13: method comparison on (800,100,100,100,10)")
    net = NetworkConfig((800, 100, 100, 100, 10), (20, 20, 20, 10), (200, 25, 25, 10))
    means = {}
    for m in ("clashfree", "structured"):
        accs = runs(net, m, n_runs, epochs, data)
        means[m] = accs.mean()
        rows.append(("13-moderate", m, "20,20,20,10", epochs, n_runs, accs.mean(), *ci90(accs), ""))
    gap = abs(means["clashfree"] - means["structured"])
    low = NetworkConfig((800, 100, 100, 100, 10), (1, 2, 2, 10), (80, 20, 20, 100))
    low_means = {}
    for m in ("clashfree", "random"):
        accs = runs(low, m, n_runs, epochs, data)
        low_means[m] = accs.mean()
        rows.append(("13-low", m, "1,2,2,10", epochs, n_runs, accs.mean(), *ci90(accs), ""))
    deficit = low_means["clashfree"] - low_means["random"]
    ok = gap <= 0.005 and deficit >= 0.005
    print(f"  moderate gap={gap:.4f} (<=0.005), low-density deficit={deficit:.4f} (>=0.005)"
          f"  -> {'PASS' if ok else 'FAIL'}")
    return ok


def criterion_14(data, epochs, n_runs, rows):
    print("criterion 14: junction-density trend at fixed rho_net (17000 edges)")
    rich = NetworkConfig((800, 100, 10), (20, 10))  # rho_2 = 100%
    starved = NetworkConfig((800, 100, 10), (21, 2))  # rho_2 = 20% < rho_1
    rich_accs = runs(rich, "structured", n_runs, epochs, data)
    starved_accs = runs(starved, "structured", n_runs, epochs, data)
    rich_lo, _ = ci90(rich_accs)
    _, starved_hi = ci90(starved_accs)
    rows.append(("14", "structured", "20,10", epochs, n_runs, rich_accs.mean(), *ci90(rich_accs), ""))
    rows.append(("14", "structured", "21,2", epochs, n_runs, starved_accs.mean(), *ci90(starved_accs), ""))
    ok = rich_lo > starved_hi
    print(f"  rich CI90 low={rich_lo:.4f} vs starved CI90 high={starved_hi:.4f}"
          f"  -> {'PASS' if ok else 'FAIL'}")
    return ok


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data-dir", default=os.environ.get("SPARSEPIPE_MNIST", ""))
    ap.add_argument("--criteria", default="11,12,13,14")
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--out", default="mnist_criteria.csv")
    args = ap.parse_args()
    if not args.data_dir or not os.path.isdir(args.data_dir):
        print("error: MNIST directory not found; pass --data-dir or set SPARSEPIPE_MNIST",
              file=sys.stderr)
        return 2
    if args.epochs != 50 or args.runs != 5:
        print(f"note: reduced budget ({args.epochs} epochs, {args.runs} runs);"
              " published tolerances assume 50 x 5")
    data = datasets.load_mnist(args.data_dir, pad_to=800)
    print(f"loaded MNIST: train={data[0].n_samples} val={data[1].n_samples}"
          f" test={data[2].n_samples}")
    table = {"11": criterion_11, "12": criterion_12, "13": criterion_13, "14": criterion_14}
    rows = []
    verdicts = {}
    for c in args.criteria.split(","):
        c = c.strip()
        verdicts[c] = table[c](data, args.epochs, args.runs, rows)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["criterion", "method", "d_out", "epochs", "runs",
                    "mean_acc", "ci90_lo", "ci90_hi", "pass"])
        w.writerows(rows)
    print(f"wrote {args.out}")
    return 0 if all(verdicts.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
