#!/usr/bin/env python3
"""Run the acceptance tests and print only the per-criterion PASS/FAIL lines.

    python scripts/acceptance_report.py [--fast]

--fast skips criteria 7-9, which need minutes of dense linear algebra.
"""
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    cmd = [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q",
           "-p", "no:cacheprovider"]
    if "--fast" in argv:
        cmd += ["-m", "not slow"]
    proc = subprocess.run(cmd, capture_output=True, text=True, cwd=ROOT)
    lines = [ln for ln in proc.stdout.splitlines() if ln.startswith("criterion ")]
    print("\n".join(lines))
    tail = proc.stdout.strip().splitlines()[-1:] or [""]
    print(tail[0])
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
