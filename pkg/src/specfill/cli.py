"""Command-line entry point: ``specfill <command> [options]``.

Commands: gen-data, train, sweep, export, shannon. Every command prints its
resolved configuration before doing any work. Exit codes: 0 on success, 1 on a
runtime failure, 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("specfill")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specfill", description="Learned spectral filling over a fixed modulation.")
    ap.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def config_flags(p):
        p.add_argument("--config", type=Path, help="INI experiment file (overrides the preset)")
        p.add_argument("--preset", help="named experiment: exp1-bpsk, exp2-qpsk-mse, exp3-shape")
        p.add_argument("--target", help="shape target for exp3-shape (ring, ellipse, qpsk, qpsk-noisy)")
        p.add_argument("--seed", type=int, help="master seed override")

    p = sub.add_parser("gen-data", help="synthesize a dataset file")
    config_flags(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train modulator and demodulator")
    config_flags(p)
    p.add_argument("--data", type=Path, help="dataset file (synthesized from the config when omitted)")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--resume", action="store_true", help="continue from <out-dir>/last")

    p = sub.add_parser("sweep", help="BER versus Es/N0 for a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--esn0", default="5,8,11,14", help="comma-separated Es/N0 values in dB")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--data", type=Path, help="dataset file; its test split is swept")
    p.add_argument("--min-bits", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export", help="time-domain and constellation CSVs for one example")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--example-index", type=int, default=0)
    p.add_argument("--snr", type=float, default=10.0)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--data", type=Path, help="dataset file; indexes its test split")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("shannon", help="print B log2(1 + S/N)")
    p.add_argument("--bandwidth", type=float, required=True, help="Hz")
    p.add_argument("--snr-db", type=float, required=True)
    return ap


def resolve_config(args):
    from .config import ConfigError, TrainConfig, load_config, preset
    from dataclasses import replace

    if args.target and args.preset != "exp3-shape":
        raise ConfigError("--target only applies to --preset exp3-shape")
    config = preset(args.preset, args.target) if args.preset else TrainConfig()
    if args.config:
        if not args.config.is_file():
            raise ConfigError(f"config file not found: {args.config}")
        config = load_config(args.config, config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def echo(title: str, body: str) -> None:
    print(f"# {title}")
    print(body.rstrip())
    print(flush=True)


def cmd_gen_data(args) -> int:
    from .config import to_ini
    from .training import synthesize_dataset

    config = resolve_config(args)
    echo("resolved config", to_ini(config))
    ds = synthesize_dataset(config)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    ds.save(args.out)
    print(f"wrote {len(ds)} examples to {args.out}")
    return EXIT_OK


def _load_data(path, config):
    from .training import Dataset, split, synthesize_dataset

    ds = Dataset.load(path, config.modulation) if path else synthesize_dataset(config)
    if ds.bits_a.shape[1] != config.bits_a or ds.bits_b.shape[1] != config.length_b:
        raise ValueError(
            f"dataset bit lengths {ds.bits_a.shape[1]}/{ds.bits_b.shape[1]} do not match the config "
            f"({config.bits_a}/{config.length_b})"
        )
    return split(ds, config.train_fraction)


def cmd_train(args) -> int:
    from .config import to_ini
    from .training import (
        TrainingDiverged, load_run_checkpoint, read_history, save_run_checkpoint, train, write_history,
    )

    out = args.out_dir
    last, best, hist_path = out / "last", out / "best", out / "history.csv"
    params = state = None
    start, history, best_loss = 0, [], float("inf")
    if args.resume:
        if not last.exists():
            print(f"error: nothing to resume in {out}", file=sys.stderr)
            return EXIT_FAIL
        config, params, state, meta = load_run_checkpoint(last)
        start, best_loss = meta["epoch"] + 1, meta.get("best_loss", float("inf"))
        history = read_history(hist_path)[:start] if hist_path.exists() else []
    else:
        config = resolve_config(args)
    echo("resolved config", to_ini(config))

    train_set, test_set = _load_data(args.data, config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(to_ini(config), encoding="utf-8")

    def on_epoch(epoch, row, result):
        write_history(hist_path, result.history)
        meta = {"epoch": epoch, "best_epoch": result.best_epoch, "best_loss": result.best_loss}
        if result.best_epoch == epoch:
            save_run_checkpoint(best, result.params, None, config, meta)
        save_run_checkpoint(last, result.params, result.state, config, meta)

    try:
        result = train(
            train_set, config, test_set, params=params, state=state, start_epoch=start,
            history=history, on_epoch=on_epoch, best_loss=best_loss,
        )
    except TrainingDiverged as exc:
        print(f"error: {exc}; history up to the previous epoch is in {hist_path}", file=sys.stderr)
        return EXIT_FAIL
    if not best.exists():
        save_run_checkpoint(best, result.params, None, config, {"epoch": config.epochs - 1})
    print(f"trained to epoch {config.epochs - 1}; best epoch {result.best_epoch}; outputs in {out}")
    return EXIT_OK


def _parse_floats(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"cannot parse Es/N0 list {text!r}") from None
    if not values:
        raise ValueError("empty Es/N0 list")
    return values


def cmd_sweep(args) -> int:
    from .config import to_ini
    from .evaluate import sweep_ber, write_ber_csv
    from .training import load_run_checkpoint

    esn0 = _parse_floats(args.esn0)
    config, params, _, _ = load_run_checkpoint(args.checkpoint)
    echo("resolved config", to_ini(config))
    echo("sweep", f"checkpoint = {args.checkpoint}\nesn0_db = {esn0}\nmin_bits = {args.min_bits}\nseed = {args.seed}")
    _, test_set = _load_data(args.data, config)
    points = sweep_ber(params, config, test_set, esn0, min_bits=args.min_bits, seed=args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_ber_csv(args.out, points)
    for p in points:
        print(f"Es/N0 {p.esn0_db:6.2f} dB  BER_A {p.ber_a:.3e}  BER_B {p.ber_b:.3e}")
    return EXIT_OK


def cmd_export(args) -> int:
    from .config import to_ini
    from .evaluate import export_signals
    from .training import load_run_checkpoint

    config, params, _, _ = load_run_checkpoint(args.checkpoint)
    echo("resolved config", to_ini(config))
    echo("export", f"checkpoint = {args.checkpoint}\nexample_index = {args.example_index}\nsnr_db = {args.snr}\nseed = {args.seed}")
    _, test_set = _load_data(args.data, config)
    paths = export_signals(params, config, test_set, args.example_index, args.snr, args.out_dir, seed=args.seed)
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_shannon(args) -> int:
    from .evaluate import shannon_capacity

    echo("resolved config", f"bandwidth_hz = {args.bandwidth!r}\nsnr_db = {args.snr_db!r}")
    cap = shannon_capacity(args.bandwidth, 10.0 ** (args.snr_db / 10.0), 1.0)
    print(f"capacity = {cap!r} bits/s")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "export": cmd_export,
    "shannon": cmd_shannon,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        # only effective before numpy loads its BLAS, i.e. when run as a fresh process
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")

    from .checkpoint import CheckpointError
    from .config import ConfigError

    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, IndexError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
