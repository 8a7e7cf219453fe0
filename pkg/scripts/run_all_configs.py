#!/usr/bin/env python3
"""Run every experiment config under scripts/configs and tabulate the exit codes.

    python scripts/run_all_configs.py [--out DIR] [--skip-slow] [name ...]
"""
import argparse
import sys
import time
from pathlib import Path

from ldp_lab import cli

CONFIGS = Path(__file__).resolve().parent / "configs"
SLOW = {"bounds_tfim", "overlap_tfim", "decoupling_gibbs"}
STATUS = {0: "pass", 1: "fail", 2: "config error", 3: "resource error"}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems to run (default: all)")
    ap.add_argument("--out", default="ldp_lab_out", help="parent directory for run outputs")
    ap.add_argument("--skip-slow", action="store_true", help="skip the dense 4096-dim runs")
    args = ap.parse_args(argv)

    paths = sorted(CONFIGS.glob("*.json"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
    if args.skip_slow:
        paths = [p for p in paths if p.stem not in SLOW]

    rows = []
    for path in paths:
        kind = path.stem.split("_")[0]
        if kind == "overlap":
            kind = "bounds"
        t0 = time.perf_counter()
        code = cli.main([kind, "--config", str(path), "--out", str(Path(args.out) / path.stem)])
        rows.append((path.stem, STATUS.get(code, str(code)), time.perf_counter() - t0))

    width = max((len(r[0]) for r in rows), default=6)
    print(f"\n{'config':<{width}}  status          seconds")
    for name, status, secs in rows:
        print(f"{name:<{width}}  {status:<14}  {secs:8.1f}")
    return 0 if all(r[1] == "pass" for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
