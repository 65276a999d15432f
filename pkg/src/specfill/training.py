"""Dataset synthesis, the joint training loop and per-epoch bookkeeping.

Random streams are derived from the master seed so runs replay exactly:
``(seed, 0)`` dataset bits, ``(seed, 1, epoch)`` shuffling, ``(seed, 2, epoch)``
SNR draws, ``(seed, channel_seed, 3, epoch)`` channel noise, ``(seed, 4, epoch)``
shape-loss sampling, ``(seed, 5, epoch)`` the train-set eval pass,
``(seed, 6, epoch)`` the test-set selection pass and ``(seed, 7)`` parameter
initialisation.

History rows come from a separate pass over the training set with batch norm
in eval mode (the epoch's SNR draws, fresh noise). With ``eval_metrics`` off
they are example-weighted means of the training batches instead, which saves
that pass on long sequences.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import losses as L
from . import tensor as T
from .channel import awgn_tensor, make_rng, sample_snr
from .config import TrainConfig
from .losses import LossMode
from .modem import BitMessage, IQSignal, ModulationKind, demodulate, modulate
from .networks import ModelParams, demodulator_forward, init_params, modulator_forward
from .optim import OptimizerState, adabelief_step, clip_grad_norm, zero_grad

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "alpha", "loss_a", "loss_b", "loss_aux", "loss_total", "ber_a", "ber_b")
EVAL_BATCH = 128


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, detail: str) -> None:
        self.epoch, self.batch = epoch, batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {detail}")


@dataclass(frozen=True)
class Example:
    msg_a: BitMessage
    iq_a: IQSignal
    msg_b: BitMessage


class Dataset:
    """Bits of messages A and B for N examples; IQ_A is derived on demand."""

    def __init__(self, bits_a: np.ndarray, bits_b: np.ndarray, kind: ModulationKind) -> None:
        bits_a, bits_b = np.asarray(bits_a, np.uint8), np.asarray(bits_b, np.uint8)
        if bits_a.ndim != 2 or bits_b.ndim != 2 or len(bits_a) != len(bits_b):
            raise ValueError(f"bit arrays must be (N, bits) with equal N: {bits_a.shape}, {bits_b.shape}")
        self.bits_a, self.bits_b, self.kind = bits_a, bits_b, kind
        self._iq: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.bits_a)

    def __getitem__(self, index):
        if isinstance(index, (int, np.integer)):
            bits_a = self.bits_a[index]
            return Example(BitMessage(bits_a, "A"), modulate(bits_a, self.kind), BitMessage(self.bits_b[index], "B"))
        return Dataset(self.bits_a[index], self.bits_b[index], self.kind)

    def __iter__(self) -> Iterator[Example]:
        return (self[i] for i in range(len(self)))

    @property
    def iq_a(self) -> np.ndarray:
        """(N, 2, length_a) float32 clean signals."""
        if self._iq is None:
            self._iq = modulate(self.bits_a, self.kind, dtype=np.float32).to_array()
        return self._iq

    def save(self, path) -> None:
        """One JSON object per line: {"msg_a": "0101...", "msg_b": "11..."}."""
        with open(path, "w", encoding="utf-8") as fh:
            for a, b in zip(self.bits_a, self.bits_b):
                fh.write(json.dumps({"msg_a": _bitstr(a), "msg_b": _bitstr(b)}) + "\n")

    @classmethod
    def load(cls, path, kind: ModulationKind) -> Dataset:
        rows_a, rows_b = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    rows_a.append(BitMessage.from_string(rec["msg_a"]).bits)
                    rows_b.append(BitMessage.from_string(rec["msg_b"], "B").bits)
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad record ({exc})") from None
        if not rows_a:
            raise ValueError(f"{path}: no records")
        try:
            return cls(np.stack(rows_a), np.stack(rows_b), kind)
        except ValueError:
            raise ValueError(f"{path}: records have inconsistent lengths") from None


def _bitstr(bits: np.ndarray) -> str:
    return (bits.astype(np.uint8) + ord("0")).tobytes().decode()


def synthesize_dataset(config: TrainConfig, rng: np.random.Generator | None = None) -> Dataset:
    """I.i.d. uniform bits for both messages."""
    rng = rng or make_rng(config.seed, 0)
    n = config.dataset_size
    bits_a = rng.integers(0, 2, size=(n, config.bits_a), dtype=np.uint8)
    bits_b = rng.integers(0, 2, size=(n, config.length_b), dtype=np.uint8)
    return Dataset(bits_a, bits_b, config.modulation)


def split(dataset: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    """First floor(f * N) examples train, the rest test."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    k = int(np.floor(train_fraction * len(dataset)))
    return dataset[:k], dataset[k:]


# one batch


@dataclass
class BatchResult:
    total: T.Tensor
    parts: dict[str, T.Tensor]
    errors_a: int
    errors_b: int
    bits_a: int
    bits_b: int


def run_batch(
    params: ModelParams,
    config: TrainConfig,
    iq_a: np.ndarray,
    bits_a: np.ndarray,
    bits_b: np.ndarray,
    snr_db,
    noise_rng: np.random.Generator,
    alpha: float,
    training: bool,
    shape_rng: np.random.Generator | None = None,
) -> BatchResult:
    """Modulator -> AWGN -> (fixed demodulator, Demodulator network) -> losses."""
    iq_ab = modulator_forward(iq_a, bits_b, params, config.modulator)
    iq_ch = awgn_tensor(iq_ab, snr_db, noise_rng)
    logits = demodulator_forward(iq_ch, params, config.demodulator, training=training)
    parts = {"a": L.loss_a(iq_ch, iq_a, config.modulation), "b": L.loss_b(logits, bits_b)}
    mode = config.loss.mode
    if mode is LossMode.MSE_AUX:
        parts["mse"] = L.loss_mse(iq_ab, iq_a)
    elif mode is LossMode.SHAPE:
        rng = shape_rng if shape_rng is not None else noise_rng
        points = L.sample_signal_points(iq_ab, config.loss.shape_sample_n, rng)
        target = L.sample_target(config.loss.shape_target, config.loss.shape_sample_m, rng).astype(iq_ab.dtype)
        parts["shape"] = L.loss_shape(points, target)
    total = L.combined_loss(parts, config.loss, alpha)

    # the fixed demodulator sits outside the graph
    decided_a = demodulate(IQSignal.from_array(iq_ch.data), config.modulation)
    decided_b = (logits.data > 0).astype(np.uint8)
    return BatchResult(
        total,
        parts,
        int(np.count_nonzero(decided_a != bits_a)),
        int(np.count_nonzero(decided_b != bits_b)),
        bits_a.size,
        bits_b.size,
    )


def aux_part(parts: dict[str, T.Tensor]) -> float:
    for key in ("mse", "shape"):
        if key in parts:
            return parts[key].item()
    return 0.0


def evaluate_dataset(
    params: ModelParams,
    config: TrainConfig,
    dataset: Dataset,
    snr_db,
    rng: np.random.Generator,
    alpha: float,
    batch_size: int = EVAL_BATCH,
) -> dict[str, float]:
    """Mean losses and BERs over ``dataset`` with batch norm in eval mode.

    ``snr_db`` is a scalar or one value per example.
    """
    snr = np.broadcast_to(np.asarray(snr_db, dtype=np.float64), (len(dataset),))
    sums = dict.fromkeys(("loss_a", "loss_b", "loss_aux", "loss_total"), 0.0)
    err_a = err_b = nbits_a = nbits_b = 0
    iq_all = dataset.iq_a
    with T.no_grad():
        for start in range(0, len(dataset), batch_size):
            sl = slice(start, start + batch_size)
            res = run_batch(
                params, config, iq_all[sl], dataset.bits_a[sl], dataset.bits_b[sl], snr[sl],
                rng, alpha, training=False,
            )
            w = len(dataset.bits_a[sl])
            sums["loss_a"] += w * res.parts["a"].item()
            sums["loss_b"] += w * res.parts["b"].item()
            sums["loss_aux"] += w * aux_part(res.parts)
            sums["loss_total"] += w * res.total.item()
            err_a += res.errors_a
            err_b += res.errors_b
            nbits_a += res.bits_a
            nbits_b += res.bits_b
    out = {k: v / len(dataset) for k, v in sums.items()}
    out["ber_a"] = err_a / nbits_a
    out["ber_b"] = err_b / nbits_b
    return out


# training loop


class _Tally:
    """Running example-weighted means of the per-batch training metrics."""

    def __init__(self) -> None:
        self.sums = dict.fromkeys(("loss_a", "loss_b", "loss_aux", "loss_total"), 0.0)
        self.n = self.err_a = self.err_b = self.bits_a = self.bits_b = 0

    def add(self, res: BatchResult, w: int) -> None:
        self.sums["loss_a"] += w * res.parts["a"].item()
        self.sums["loss_b"] += w * res.parts["b"].item()
        self.sums["loss_aux"] += w * aux_part(res.parts)
        self.sums["loss_total"] += w * res.total.item()
        self.n += w
        self.err_a += res.errors_a
        self.err_b += res.errors_b
        self.bits_a += res.bits_a
        self.bits_b += res.bits_b

    def means(self) -> dict[str, float]:
        out = {k: v / self.n for k, v in self.sums.items()}
        out["ber_a"] = self.err_a / self.bits_a
        out["ber_b"] = self.err_b / self.bits_b
        return out


@dataclass
class TrainResult:
    params: ModelParams
    state: OptimizerState
    history: list[dict] = field(default_factory=list)
    best_params: ModelParams | None = None
    best_epoch: int = -1
    best_loss: float = float("inf")


EpochCallback = Callable[[int, dict, "TrainResult"], None]


def epoch_alpha(config: TrainConfig, epoch: int) -> float:
    return config.loss.alpha if config.loss.alpha is not None else L.alpha_schedule(epoch)


def train(
    train_set: Dataset,
    config: TrainConfig,
    test_set: Dataset | None = None,
    params: ModelParams | None = None,
    state: OptimizerState | None = None,
    start_epoch: int = 0,
    history: list[dict] | None = None,
    on_epoch: EpochCallback | None = None,
    best_loss: float = float("inf"),
) -> TrainResult:
    """Jointly train Modulator and Demodulator; see the module docstring for RNG streams.

    Pass ``params``/``state``/``start_epoch``/``history`` (and the best
    selection loss so far) to resume.
    """
    if len(train_set) < 2:
        raise ValueError("need at least two training examples")
    seed = config.seed
    if params is None:
        params = init_params(config.modulator, config.demodulator, make_rng(seed, 7))
    if state is None:
        o = config.optimizer
        state = OptimizerState(lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)
    trainable = params.tensors
    result = TrainResult(params, state, list(history or []), best_loss=best_loss)
    if test_set is not None and len(test_set) == 0:
        test_set = None

    n = len(train_set)
    iq_all = train_set.iq_a
    bs = config.batch_size
    for epoch in range(start_epoch, config.epochs):
        alpha = epoch_alpha(config, epoch)
        order = make_rng(seed, 1, epoch).permutation(n)
        snrs = np.asarray(sample_snr(config.channel, make_rng(seed, 2, epoch), n), dtype=np.float64)
        noise_rng = make_rng(seed, config.channel.seed, 3, epoch)
        shape_rng = make_rng(seed, 4, epoch)
        tally = _Tally()
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start : start + bs]
            if len(idx) < 2:
                continue  # batch norm cannot train on a single example
            zero_grad(trainable)
            try:
                res = run_batch(
                    params, config, iq_all[idx], train_set.bits_a[idx], train_set.bits_b[idx],
                    snrs[idx], noise_rng, alpha, training=True, shape_rng=shape_rng,
                )
                res.total.backward()
            except T.NumericalFault as exc:
                raise TrainingDiverged(epoch, b, str(exc)) from exc
            if not np.isfinite(res.total.item()):
                raise TrainingDiverged(epoch, b, f"loss {res.total.item()}")
            if config.grad_clip > 0:
                clip_grad_norm(trainable, config.grad_clip)
            adabelief_step(trainable, state)
            tally.add(res, len(idx))

        if config.eval_metrics:
            metrics = evaluate_dataset(params, config, train_set, snrs, make_rng(seed, 5, epoch), alpha)
        else:
            metrics = tally.means()
        row = {"epoch": epoch, "alpha": alpha, **metrics}
        result.history.append(row)
        msg = "epoch %d alpha=%.2f loss=%.4f (A %.4f B %.4f aux %.4f) ber_a=%.3g ber_b=%.3g"
        log.info(msg, epoch, alpha, row["loss_total"], row["loss_a"], row["loss_b"], row["loss_aux"], row["ber_a"], row["ber_b"])

        if test_set is not None:
            sel = evaluate_dataset(
                params, config, test_set, config.selection_snr_db, make_rng(seed, 6, epoch), config.selection_alpha
            )
            if sel["loss_total"] < result.best_loss:
                result.best_loss = sel["loss_total"]
                result.best_epoch = epoch
                result.best_params = params.copy()
            log.info("epoch %d test@%.1fdB loss=%.4f (best %.4f @ %d)", epoch, config.selection_snr_db,
                     sel["loss_total"], result.best_loss, result.best_epoch)
        if on_epoch is not None:
            on_epoch(epoch, row, result)
    if result.best_params is None:
        result.best_params = params.copy()
        result.best_epoch = config.epochs - 1
    return result


def write_history(path, history: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in HISTORY_COLUMNS[1:]])


def read_history(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in rows]


def save_run_checkpoint(path, params: ModelParams, state: OptimizerState | None, config: TrainConfig, meta: dict) -> None:
    from .checkpoint import save_checkpoint
    from .config import to_ini

    save_checkpoint(path, params, state, {"ini": to_ini(config)}, meta)


def load_run_checkpoint(path) -> tuple[TrainConfig, ModelParams, OptimizerState | None, dict]:
    """Rebuild config and parameters from a self-describing checkpoint."""
    from .checkpoint import CheckpointError, load_checkpoint, read_arrays
    from .config import ConfigError, from_ini

    _, manifest = read_arrays(Path(path))
    try:
        config = from_ini(manifest["config"]["ini"])
    except (KeyError, ConfigError) as exc:
        raise CheckpointError(f"{path}: embedded config unusable ({exc})") from None
    params = init_params(config.modulator, config.demodulator, make_rng(0))
    state, manifest = load_checkpoint(path, params)
    return config, params, state, manifest.get("meta", {})
