"""Train the sin(x + y^2) anecdote under every condition and dump its activation curves.

Writes, per condition, a checkpoint plus phi.csv with (x, phi(x)) samples of
every open edge, ready for external plotting.

    python3 scripts/anecdote_curves.py --out runs/anecdote_curves --seed 2
"""

import argparse
import sys
from pathlib import Path

from sparse_kan.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/anecdote_curves")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=3000)
    args = ap.parse_args()

    status = 0
    for cond in ("baseline", "fc", "gates", "full"):
        run = Path(args.out) / cond
        rc = cli_main(["train", "--problem", "anecdote", "--condition", cond, "--seed", str(args.seed),
                       "--epochs", str(args.epochs), "--out", str(run)])
        if rc == 0:
            rc = cli_main(["eval", str(run / "checkpoint.json"), "--problem", "anecdote",
                           "--out", str(run / "eval.json"), "--dump-phi", str(run / "phi.csv")])
        status = max(status, rc)
    return status


if __name__ == "__main__":
    sys.exit(main())
