"""Run every scenario in scenarios/ and write its report next to the others."""
import argparse
import sys
from pathlib import Path

from sympcocycle.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default=str(ROOT / "reports"))
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    worst = 0
    for cfg in sorted((ROOT / "scenarios").glob("*.toml")):
        ext = "csv" if cfg.stem == "table" else "jsonl"
        status = cli_main(["run", str(cfg), "--out", str(out_dir / f"{cfg.stem}.{ext}")])
        worst = max(worst, status)
    return worst


if __name__ == "__main__":
    sys.exit(main())
