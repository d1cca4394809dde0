"""Run every config in scripts/configs through the CLI and list the report paths."""

import argparse
import sys
from pathlib import Path

from bandinfo.cli import main

HERE = Path(__file__).resolve().parent


def run(args):
    failed = 0
    for cfg in sorted((HERE / "configs").glob("*.ini")):
        argv = ["run", "--config", str(cfg), "--out", str(Path(args.out) / cfg.stem)]
        code = main(argv)
        print(f"{cfg.name}: exit {code}")
        failed += code != 0
    return 1 if failed else 0


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs")
    sys.exit(run(p.parse_args()))
