"""Run one or more experiment configs and print their combined table.

    python3 scripts/run_grid.py configs/ikeda.toml --jobs 2
    python3 scripts/run_grid.py table1        # every Nguyen config
    python3 scripts/run_grid.py table2        # Ikeda plus both ecosystem budgets
    python3 scripts/run_grid.py table3        # needs data/*.csv (scripts/fetch_data.py)

Finished cells are skipped on rerun; pass --force to recompute them.
"""

import argparse
import sys
from pathlib import Path

from sparse_kan.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent / "configs"
TABLES = {
    "table1": [ROOT / f"nguyen_f{i}.toml" for i in range(1, 11)],
    "table2": [ROOT / "ikeda.toml", ROOT / "ecosystem_10k.toml", ROOT / "ecosystem_15k.toml"],
    "table3": [ROOT / "concrete.toml", ROOT / "superconductor.toml"],
    "anecdote": [ROOT / "anecdote.toml"],
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("targets", nargs="+", help="config paths or one of " + ", ".join(TABLES))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--force", action="store_true")
    ap.add_argument("--seeds", help="comma-separated seeds overriding the configs")
    args = ap.parse_args()

    configs = [c for t in args.targets for c in TABLES.get(t, [Path(t)])]
    status = 0
    for cfg in configs:
        argv = ["experiment", str(cfg), "--jobs", str(args.jobs)]
        if args.force:
            argv.append("--force")
        if args.seeds:
            argv += ["--seeds", args.seeds]
        print(f"== {cfg.stem}")
        status = max(status, cli_main(argv))
    return status


if __name__ == "__main__":
    sys.exit(main())
