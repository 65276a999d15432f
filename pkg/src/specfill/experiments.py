"""End-to-end desk-scale experiments and their pass/fail gates.

``run_experiment`` trains one preset (or any config), writes the usual
artifacts into an output directory and evaluates the gates that belong to the
preset. Scripts in ``scripts/`` and the acceptance tests both go through here.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import TrainConfig, to_ini
from .evaluate import (
    capacity_curve, export_signals, learned_signals, q_component_utilization, sweep_ber, write_ber_csv,
)
from .losses import TargetShape
from .networks import ModelParams
from .training import Dataset, TrainResult, save_run_checkpoint, split, synthesize_dataset, train, write_history

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Gate:
    name: str
    value: float
    threshold: float
    relation: str  # "<=", ">=", ">", "=="

    @property
    def passed(self) -> bool:
        v, t = self.value, self.threshold
        return {"<=": v <= t, ">=": v >= t, ">": v > t, "==": v == t}[self.relation]

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.6g} {self.relation} {self.threshold:g}"


@dataclass
class ExperimentReport:
    config: TrainConfig
    result: TrainResult
    test_set: Dataset
    gates: list[Gate] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


# gates per experiment


def exp1_gates(params: ModelParams, config: TrainConfig, test_set: Dataset, out_dir: Path | None = None) -> list[Gate]:
    """BPSK 32/32: both BERs at 14 dB, Q-rail use and the capacity ratio at >= 12 dB."""
    points = sweep_ber(params, config, test_set, [12.0, 13.0, 14.0, 15.0], min_bits=100_000, seed=11)
    at14 = next(p for p in points if p.esn0_db == 14.0)
    caps = capacity_curve(points, config)
    ratio = min(c.capacity_learned / c.capacity_a_only for c in caps)
    qvar = q_component_utilization(learned_signals(params, config, test_set))
    fixed_qvar = q_component_utilization(test_set.iq_a)
    if out_dir is not None:
        write_ber_csv(out_dir / "ber.csv", points)
        _write_capacity(out_dir / "capacity.csv", caps)
    return [
        Gate("BER_A @ 14 dB", at14.ber_a, 1e-2, "<="),
        Gate("BER_B @ 14 dB", at14.ber_b, 1e-2, "<="),
        Gate("learned Q variance", qvar, 0.01, ">"),
        Gate("fixed BPSK Q variance", fixed_qvar, 0.0, "=="),
        Gate("min capacity ratio learned/A-only over 12-15 dB", ratio, 1.8, ">="),
    ]


def exp2_gates(params: ModelParams, config: TrainConfig, test_set: Dataset, out_dir: Path | None = None) -> list[Gate]:
    """QPSK 256/4 with the MSE auxiliary: BERs at 10 dB and resemblance to QPSK."""
    (p10,) = sweep_ber(params, config, test_set, [10.0], min_bits=10_000, seed=12)
    learned = learned_signals(params, config, test_set)
    mse = float(np.mean((learned.astype(np.float64) - test_set.iq_a) ** 2))
    if out_dir is not None:
        points = sweep_ber(params, config, test_set, [4.0, 6.0, 8.0, 10.0, 12.0, 14.0], min_bits=100_000, seed=12)
        write_ber_csv(out_dir / "ber.csv", points)
    return [
        Gate(f"BER_B @ 10 dB over {p10.bits_counted_b} bits", p10.ber_b, 0.0, "=="),
        Gate("B bits counted", p10.bits_counted_b, 10_000, ">="),
        Gate("BER_A @ 10 dB", p10.ber_a, 1e-2, "<="),
        Gate("mean per-component MSE learned vs QPSK", mse, 0.1, "<="),
    ]


def ring_fraction(points: np.ndarray, shape: TargetShape, k: float = 3.0) -> float:
    """Share of (..., 2, N) samples whose radius lies within r +- k * width."""
    pts = np.asarray(points, dtype=np.float64)
    radius = np.hypot(pts[..., 0, :], pts[..., 1, :])
    return float(np.mean(np.abs(radius - shape.r) <= k * shape.width))


def exp3_gates(params: ModelParams, config: TrainConfig, test_set: Dataset, out_dir: Path | None = None) -> list[Gate]:
    """Shape loss: ring conformance of the learned constellation and BER_B at 10 dB."""
    shape = config.loss.shape_target
    learned = learned_signals(params, config, test_set)
    (p10,) = sweep_ber(params, config, test_set, [10.0], min_bits=10_000, seed=13)
    if out_dir is not None:
        write_ber_csv(out_dir / "ber.csv", [p10])
    gates = [Gate("BER_B @ 10 dB", p10.ber_b, 1e-2, "<=")]
    if shape is not None and shape.kind == "ring":
        lo, hi = shape.r - 3 * shape.width, shape.r + 3 * shape.width
        gates.insert(0, Gate(f"fraction of samples with radius in [{lo:g}, {hi:g}]", ring_fraction(learned, shape), 0.9, ">="))
    return gates


GATES: dict[str, Callable[..., list[Gate]]] = {
    "exp1-bpsk": exp1_gates,
    "exp2-qpsk-mse": exp2_gates,
    "exp3-shape": exp3_gates,
}


def _write_capacity(path: Path, caps) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("snr_db,capacity_a_only,capacity_learned\n")
        for c in caps:
            fh.write(f"{c.snr_db!r},{c.capacity_a_only!r},{c.capacity_learned!r}\n")


# driver


def run_experiment(config: TrainConfig, out_dir=None, gates: Callable[..., list[Gate]] | None = None) -> ExperimentReport:
    """Train ``config`` from scratch, then evaluate the best model's gates.

    With ``out_dir`` the resolved config, history, best/last checkpoints,
    BER (and capacity) CSVs, exported signals and a gates.json are written.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(to_ini(config), encoding="utf-8")
    train_set, test_set = split(synthesize_dataset(config), config.train_fraction)

    def on_epoch(epoch, row, result):
        if out is not None:
            write_history(out / "history.csv", result.history)

    t0 = time.perf_counter()
    result = train(train_set, config, test_set, on_epoch=on_epoch)
    report = ExperimentReport(config, result, test_set, seconds=time.perf_counter() - t0)
    gates = gates or GATES.get(config.name)
    best = result.best_params
    if out is not None:
        meta = {"epoch": config.epochs - 1, "best_epoch": result.best_epoch, "best_loss": result.best_loss}
        save_run_checkpoint(out / "last", result.params, result.state, config, meta)
        save_run_checkpoint(out / "best", best, None, config, meta)
        export_signals(best, config, test_set, 0, 10.0, out / "signals")
    if gates is not None:
        report.gates = gates(best, config, test_set, out)
    if out is not None:
        summary = {
            "name": config.name,
            "seconds": report.seconds,
            "best_epoch": result.best_epoch,
            "gates": [{**asdict(g), "passed": g.passed} for g in report.gates],
        }
        (out / "gates.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for g in report.gates:
        log.info("%s", g.line())
    return report
