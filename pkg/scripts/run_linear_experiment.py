#!/usr/bin/env python3
"""End-to-end linear dynamics experiment: pair 2x2 dynamics matrices with
their observed Euler trajectories, train a 2-d macrostate, then design
matrices from one anti-clockwise example and re-simulate them.

Writes everything under --out (default runs/linear).
"""

import argparse
import sys

from macronet.cli import main as cli


def run(out: str, seed: int, n: int, epochs: int) -> int:
    steps = [
        ["simulate", "--testbed", "linear", "--n", str(n), "--seed", str(seed),
         "--out", out],
        ["train", "--dataset", f"{out}/dataset_linear_n{n}_s{seed}.mnds",
         "--epochs", str(epochs), "--dist-weight", "0.3", "--lr-decay", "0.98",
         "--seed", str(seed), "--out", out, "--verbose"],
        ["simulate", "--testbed", "linear", "--n", "2000",
         "--seed", str(seed + 1000), "--out", out],
        ["eval", "--checkpoint", f"{out}/model_linear_s{seed}.mnck",
         "--dataset", f"{out}/dataset_linear_n2000_s{seed + 1000}.mnds",
         "--examples", "10", "--samples", "10",
         "--seed", str(seed), "--out", out],
        ["design", "--checkpoint", f"{out}/model_linear_s{seed}.mnck",
         "--example-file", f"{out}/dataset_linear_n{n}_s{seed}.mnds",
         "--example-index", "0", "--side", "u", "--n", "100", "--resimulate",
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
    parser.add_argument("--out", default="runs/linear")
    parser.add_argument("--seed", type=int, default=21)
    parser.add_argument("--n", type=int, default=10_000)
    parser.add_argument("--epochs", type=int, default=300)
    args = parser.parse_args()
    sys.exit(run(args.out, args.seed, args.n, args.epochs))
