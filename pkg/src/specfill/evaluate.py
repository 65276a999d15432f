"""BER sweeps, capacity figures and CSV exports of learned signals."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .channel import awgn_array, make_rng
from .config import TrainConfig
from .modem import IQSignal, ModulationKind, demodulate, modulate, symbol_labels
from .networks import ModelParams, demodulator_forward, modulator_forward
from .training import EVAL_BATCH, Dataset

BER_COLUMNS = ("esn0_db", "ber_a", "ber_b", "bits_a", "bits_b")


@dataclass(frozen=True)
class BerPoint:
    esn0_db: float
    ber_a: float
    ber_b: float
    bits_counted_a: int
    bits_counted_b: int


@dataclass(frozen=True)
class CapacityPoint:
    snr_db: float
    capacity_a_only: float
    capacity_learned: float


def ber(predicted, truth) -> float:
    """Fraction of differing bits."""
    p, t = np.asarray(getattr(predicted, "bits", predicted)), np.asarray(getattr(truth, "bits", truth))
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("cannot take the BER of an empty message")
    return float(np.count_nonzero(p != t)) / p.size


def capacity_empirical(bitrate: float, accuracy: float) -> float:
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must lie in [0, 1], got {accuracy}")
    return bitrate * accuracy


def shannon_capacity(bandwidth_hz: float, signal_power: float, noise_power: float) -> float:
    """B log2(1 + S/N) in bits/sec."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    if signal_power < 0:
        raise ValueError("signal power must be non-negative")
    return bandwidth_hz * math.log2(1.0 + signal_power / noise_power)


def bitrates(config: TrainConfig) -> tuple[float, float]:
    """(A, B) bits/sec at one sample per second."""
    return float(config.modulation.bits_per_symbol), config.length_b / config.length_a


def learned_signals(params: ModelParams, config: TrainConfig, dataset: Dataset) -> np.ndarray:
    """IQ_AB for every example, (N, 2, length_a)."""
    out = []
    with T.no_grad():
        for start in range(0, len(dataset), EVAL_BATCH):
            sl = slice(start, start + EVAL_BATCH)
            out.append(modulator_forward(dataset.iq_a[sl], dataset.bits_b[sl], params, config.modulator).data)
    return np.concatenate(out)


def _decide(params: ModelParams, config: TrainConfig, received: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bits_a = demodulate(IQSignal.from_array(received), config.modulation)
    with T.no_grad():
        logits = demodulator_forward(received, params, config.demodulator, training=False).data
    return bits_a, (logits > 0).astype(np.uint8)


def sweep_ber(
    params: ModelParams,
    config: TrainConfig,
    test_set: Dataset,
    esn0_list_db,
    min_bits: int = 100_000,
    seed: int = 0,
) -> list[BerPoint]:
    """BER of both messages per Es/N0 point.

    The test set is replayed with fresh noise until both messages have at
    least ``min_bits`` counted bits. Every point uses its own noise stream.
    """
    if len(test_set) == 0:
        raise ValueError("empty test set")
    clean = learned_signals(params, config, test_set)
    points = []
    for k, esn0 in enumerate(esn0_list_db):
        rng = make_rng(seed, 100, k)
        err_a = err_b = n_a = n_b = 0
        while n_a < min_bits or n_b < min_bits:
            for start in range(0, len(test_set), EVAL_BATCH):
                sl = slice(start, start + EVAL_BATCH)
                received = awgn_array(clean[sl], float(esn0), rng)
                dec_a, dec_b = _decide(params, config, received)
                err_a += int(np.count_nonzero(dec_a != test_set.bits_a[sl]))
                err_b += int(np.count_nonzero(dec_b != test_set.bits_b[sl]))
                n_a += dec_a.size
                n_b += dec_b.size
        points.append(BerPoint(float(esn0), err_a / n_a, err_b / n_b, n_a, n_b))
    return points


def theoretical_ber(kind: ModulationKind, esn0_db: float) -> float:
    """Uncoded AWGN bit error rate of the fixed modulation at unit symbol energy.

    BPSK puts all of Es on one rail, Q(sqrt(2 Es/N0)); Gray QPSK splits it over
    two independent rails, Q(sqrt(Es/N0)).
    """
    snr = 10.0 ** (esn0_db / 10.0)
    per_rail = 2.0 * snr / kind.bits_per_symbol
    return 0.5 * math.erfc(math.sqrt(per_rail / 2.0))


def capacity_curve(points: list[BerPoint], config: TrainConfig) -> list[CapacityPoint]:
    """Plain fixed-modulation capacity (A only) versus the learned A+B capacity.

    The A-only curve is a vanilla channel carrying message A, so its accuracy
    comes from the closed-form BER of the fixed modulation; the learned curve
    uses the measured accuracies of both messages.
    """
    rate_a, rate_b = bitrates(config)
    out = []
    for p in points:
        plain = capacity_empirical(rate_a, 1.0 - theoretical_ber(config.modulation, p.esn0_db))
        learned = capacity_empirical(rate_a, 1.0 - p.ber_a) + capacity_empirical(rate_b, 1.0 - p.ber_b)
        out.append(CapacityPoint(p.esn0_db, plain, learned))
    return out


def baseline_ber_a(kind: ModulationKind, esn0_db: float, n_bits: int, seed: int = 0) -> float:
    """BER of the plain fixed modulation (no message B) over AWGN."""
    rng = make_rng(seed, 200)
    bits = rng.integers(0, 2, size=n_bits - n_bits % kind.bits_per_symbol, dtype=np.uint8)
    received = awgn_array(modulate(bits, kind).to_array(), esn0_db, rng)
    return ber(demodulate(IQSignal.from_array(received), kind), bits)


def write_ber_csv(path, points: list[BerPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BER_COLUMNS)
        for p in points:
            w.writerow([repr(p.esn0_db), repr(p.ber_a), repr(p.ber_b), p.bits_counted_a, p.bits_counted_b])


def q_component_utilization(iq) -> float:
    """Sample variance of the Q rail (pooled over any batch axes)."""
    q = iq.q if isinstance(iq, IQSignal) else np.asarray(iq)[..., 1, :]
    return float(np.var(np.asarray(q, dtype=np.float64)))


def export_signals(
    params: ModelParams,
    config: TrainConfig,
    dataset: Dataset,
    index: int,
    snr_db: float,
    out_dir,
    seed: int = 0,
) -> tuple[Path, Path]:
    """Write time-domain and constellation CSVs for one example.

    time_domain.csv: index, i_fixed, q_fixed, i_learned, q_learned (pre-channel)
    constellation.csv: i, q, symbol_label (received samples after AWGN at ``snr_db``)
    """
    if not 0 <= index < len(dataset):
        raise IndexError(f"example index {index} outside 0..{len(dataset) - 1}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc}") from exc
    example = dataset[index : index + 1]
    fixed = example.iq_a[0]
    learned = learned_signals(params, config, example)[0]
    received = awgn_array(learned, snr_db, make_rng(seed, 300, index))
    labels = symbol_labels(example.bits_a[0], config.modulation)

    time_path = out_dir / "time_domain.csv"
    const_path = out_dir / "constellation.csv"
    with open(time_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "i_fixed", "q_fixed", "i_learned", "q_learned"))
        for t in range(config.length_a):
            w.writerow([t, repr(float(fixed[0, t])), repr(float(fixed[1, t])),
                        repr(float(learned[0, t])), repr(float(learned[1, t]))])
    with open(const_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("i", "q", "symbol_label"))
        for t in range(config.length_a):
            w.writerow([repr(float(received[0, t])), repr(float(received[1, t])), int(labels[t])])
    return time_path, const_path

