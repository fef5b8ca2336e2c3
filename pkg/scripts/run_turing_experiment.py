#!/usr/bin/env python3
"""End-to-end reaction-diffusion experiment: pair rate constants with the
patterns they grow, train a 2-d macrostate, then design rate constants that
reproduce an example pattern and re-simulate them (exporting the regenerated
fields as flat binary snapshots).

Desk scale by default (16x16 grid); expect roughly half an hour of training.
Writes everything under --out (default runs/turing).
"""

import argparse
import sys

from macronet.cli import main as cli


def run(out: str, seed: int, n: int, epochs: int, grid: int) -> int:
    steps = [
        ["simulate", "--testbed", "turing", "--n", str(n), "--grid", str(grid),
         "--seed", str(seed), "--out", out],
        ["train", "--dataset", f"{out}/dataset_turing_n{n}_s{seed}.mnds",
         "--epochs", str(epochs), "--batch-size", "128", "--dist-weight", "0.3",
         "--lr-decay", "0.98",
         "--seed", str(seed), "--out", out, "--verbose"],
        ["simulate", "--testbed", "turing", "--n", "192", "--grid", str(grid),
         "--seed", str(seed + 1000), "--out", out],
        ["eval", "--checkpoint", f"{out}/model_turing_s{seed}.mnck",
         "--dataset", f"{out}/dataset_turing_n192_s{seed + 1000}.mnds",
         "--examples", "4", "--samples", "8",
         "--seed", str(seed), "--out", out],
        ["design", "--checkpoint", f"{out}/model_turing_s{seed}.mnck",
         "--example-file", f"{out}/dataset_turing_n{n}_s{seed}.mnds",
         "--example-index", "0", "--side", "u", "--n", "32",
         "--resimulate", "--export-fields",
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
    parser.add_argument("--out", default="runs/turing")
    parser.add_argument("--seed", type=int, default=31)
    parser.add_argument("--n", type=int, default=4096)
    parser.add_argument("--epochs", type=int, default=120)
    parser.add_argument("--grid", type=int, default=16)
    args = parser.parse_args()
    sys.exit(run(args.out, args.seed, args.n, args.epochs, args.grid))
