"""Run the standard experiments through the command line and keep their logs.

Usage: python3 scripts/run_experiments.py [--out DIR] [--only NAME ...]
"""

import argparse
import contextlib
import io
import time
from pathlib import Path

from nearball.cli import main

EXPERIMENTS = {
    "ball": ["ball", "--n", "2", "--K", "600"],
    "audit": ["audit"],
    "sharpness": ["sharpness"],
    "scan": ["scan"],
    "derive": ["derive"],
    "derive-perturbed": ["derive", "--profile", "2:0.1:0", "--direction", "cos2,cos4"],
    "trace": ["trace", "--K", "500"],
}


def run(name, argv, out):
    buf = io.StringIO()
    start = time.perf_counter()
    with contextlib.redirect_stdout(buf):
        code = main(argv + ["--out", str(out / name)])
    elapsed = time.perf_counter() - start
    log = out / name / "stdout.txt"
    log.parent.mkdir(parents=True, exist_ok=True)
    log.write_text(buf.getvalue())
    print(f"{name:18s} exit={code} {elapsed:7.1f}s -> {log}")
    return code


def cli():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="nearball_out")
    p.add_argument("--only", nargs="*", choices=sorted(EXPERIMENTS))
    args = p.parse_args()
    out = Path(args.out)
    codes = [run(n, EXPERIMENTS[n], out) for n in (args.only or EXPERIMENTS)]
    return max(codes)


if __name__ == "__main__":
    raise SystemExit(cli())
