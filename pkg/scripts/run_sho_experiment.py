#!/usr/bin/env python3
"""End-to-end oscillator experiment: simulate pairs separated by a random
time interval, train a weight-shared model with a 1-d macrostate, check that
the macrostate is monotone in energy, and sample equal-energy microstates.

Writes datasets, checkpoint, loss table, eval reports, and designed samples
under --out (default runs/sho).
"""

import argparse
import sys

from macronet.cli import main as cli


def run(out: str, seed: int, n: int, epochs: int) -> int:
    steps = [
        ["simulate", "--testbed", "sho", "--n", str(n), "--seed", str(seed),
         "--out", out],
        ["train", "--dataset", f"{out}/dataset_sho_n{n}_s{seed}.mnds",
         "--epochs", str(epochs), "--dist-weight", "0.3", "--lr-decay", "0.98",
         "--seed", str(seed), "--out", out, "--verbose"],
        ["simulate", "--testbed", "sho", "--n", "2000", "--seed", str(seed + 1000),
         "--out", out],
        ["eval", "--checkpoint", f"{out}/model_sho_s{seed}.mnck",
         "--dataset", f"{out}/dataset_sho_n2000_s{seed + 1000}.mnds",
         "--seed", str(seed), "--out", out],
        ["design", "--checkpoint", f"{out}/model_sho_s{seed}.mnck",
         "--example-file", f"{out}/dataset_sho_n{n}_s{seed}.mnds",
         "--example-index", "0", "--side", "u", "--n", "300",
         "--seed", str(seed), "--out", out],
    ]
    for argv in steps:
        print(f"$ macronet {' '.join(argv)}")
        code = cli(argv)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/sho")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--n", type=int, default=10_000)
    parser.add_argument("--epochs", type=int, default=150)
    args = parser.parse_args()
    sys.exit(run(args.out, args.seed, args.n, args.epochs))
