"""Download the two UCI tabular datasets into ./data as CSV.

    python3 scripts/fetch_data.py concrete superconductor

The concrete archive ships an Excel sheet; converting it needs pandas with an
Excel reader (xlrd). Without one, open the sheet and save it as
data/concrete.csv by hand: the loader matches columns by keyword
(cement, slag, ash, water, superplasticizer, coarse, fine, age, strength).
"""

import argparse
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

SOURCES = {
    "concrete": ("https://archive.ics.uci.edu/static/public/165/concrete+compressive+strength.zip",
                 "Concrete_Data.xls"),
    "superconductor": ("https://archive.ics.uci.edu/static/public/464/superconductivty+data.zip", "train.csv"),
}


def fetch(name: str, out_dir: Path) -> Path:
    url, member = SOURCES[name]
    print(f"downloading {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    raw = archive.read(member)
    target = out_dir / f"{name}.csv"
    if member.endswith(".csv"):
        target.write_bytes(raw)
        return target
    try:
        import pandas as pd
    except ImportError:
        (out_dir / member).write_bytes(raw)
        sys.exit(f"saved {out_dir / member}; install pandas+xlrd or export it to {target} manually")
    pd.read_excel(io.BytesIO(raw)).to_csv(target, index=False)
    return target


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("datasets", nargs="+", choices=sorted(SOURCES))
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.datasets:
        print(f"wrote {fetch(name, out)}")


if __name__ == "__main__":
    main()
