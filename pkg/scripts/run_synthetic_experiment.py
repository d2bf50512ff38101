"""Synthetic experiment: generate data, train, evaluate every scheme, print the table.

    python3 scripts/run_synthetic_experiment.py --out runs/synthetic --seed 0

Re-running with the same arguments reproduces every output byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from completion_moment.cli import main as cli


def run(out: Path, seed: int, n: int, p_inc: float, epochs: int, hidden: int, action: str) -> int:
    steps = [
        ["synth", "--out", str(out / "data"), "--seed", str(seed), "--n", str(n),
         "--p-inc", str(p_inc)],
        ["train", "--data", str(out / "data"), "--out", str(out / "model"), "--seed", str(seed),
         "--epochs", str(epochs), "--hidden", str(hidden)],
        ["eval", "--data", str(out / "data"), "--checkpoint", str(out / "model" / "model.cmp"),
         "--out", str(out / "eval"), "--action", action],
        ["report", str(out / "eval"), "--format", "all"],
    ]
    for argv in steps:
        code = cli(argv)
        if code != 0:
            print(f"step {argv[0]!r} failed with exit code {code}", file=sys.stderr)
            return code
    return 0


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=250)
    p.add_argument("--p-inc", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--action", default="synthetic")
    a = p.parse_args()
    return run(a.out, a.seed, a.n, a.p_inc, a.epochs, a.hidden, a.action)


if __name__ == "__main__":
    sys.exit(main())
