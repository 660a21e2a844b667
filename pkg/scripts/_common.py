"""Shared helpers for the experiment scripts: run one CLI sweep and load its report."""
import argparse
import sys
from pathlib import Path

from zsda import cli
from zsda.evalharness import load_report


def parser(preset: str, out: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=preset)
    ap.add_argument("--out", default=out)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--set", action="append", default=[])
    return ap


def run_sweep(args, *extra):
    argv = ["sweep", "--config", args.config, "--out", args.out, "--threads", str(args.threads), *extra]
    for s in args.set:
        argv += ["--set", s]
    code = cli.run(argv)
    if code:
        sys.exit(code)
    return load_report(Path(args.out) / "sweep_report.jsonl")


def fmt(stat):
    return f"{stat['mean']:.4f} ({stat['std']:.4f}, n={stat['n']})"
