"""Shared argument handling for the experiment scripts."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from specfill.config import load_config, preset
from specfill.experiments import run_experiment


def main(name: str, description: str, target: str | None = None) -> int:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--out-dir", type=Path, default=Path("runs") / name)
    ap.add_argument("--config", type=Path, help="INI overrides applied on top of the preset")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--epochs", type=int)
    if target is not None:
        ap.add_argument("--target", default=target, help="ring, ellipse, qpsk or qpsk-noisy")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    config = preset(name, getattr(args, "target", None))
    if args.config:
        config = load_config(args.config, config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.epochs is not None:
        config = replace(config, epochs=args.epochs)
    report = run_experiment(config, args.out_dir)
    print(f"{name}: {report.seconds / 60:.1f} min, best epoch {report.result.best_epoch}")
    for g in report.gates:
        print(g.line())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit("run one of the run_exp*.py scripts")
