"""Experiment configuration: dataclass, INI-style file format and presets.

File format is ``configparser`` INI; every key must be known. Example::

    # desk-scale BPSK run
    [experiment]
    seed = 7
    modulation = bpsk
    length_a = 32
    length_b = 32

    [channel]
    snr_low_db = 5
    snr_high_db = 15
    # empty value = sample the range
    fixed_snr_db =

    [loss]
    mode = base
    alpha =

Sections: experiment, channel, loss, optimizer, modulator, demodulator.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .channel import ChannelConfig
from .losses import LossConfig, LossMode, TargetShape
from .modem import ModulationKind
from .networks import DemodulatorConfig, ModulatorConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    name: str = "custom"
    seed: int = 0
    modulation: ModulationKind = ModulationKind.QPSK
    length_a: int = 1024
    length_b: int = 4
    dataset_size: int = 16384
    train_fraction: float = 0.8
    batch_size: int = 64
    epochs: int = 128
    grad_clip: float = 1.0  # 0 disables
    eval_metrics: bool = True  # False: history from running training-batch means
    selection_snr_db: float = 10.0
    selection_alpha: float = 0.5
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    modulator: ModulatorConfig | None = None
    demodulator: DemodulatorConfig | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "modulation", ModulationKind.parse(self.modulation))
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch norm needs batch statistics)")
        if self.dataset_size < self.batch_size:
            raise ConfigError("dataset_size must be >= batch_size")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        mod = self.modulator or ModulatorConfig(self.length_a, self.length_b)
        demod = self.demodulator or DemodulatorConfig(self.length_a, self.length_b)
        try:
            object.__setattr__(self, "modulator", replace(mod, length_a=self.length_a, length_b=self.length_b))
            object.__setattr__(self, "demodulator", replace(demod, length_a=self.length_a, length_b=self.length_b))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def bits_a(self) -> int:
        return self.length_a * self.modulation.bits_per_symbol


# INI round trip

_SECTIONS = ("experiment", "channel", "loss", "optimizer", "modulator", "demodulator")
_EXPERIMENT_KEYS = (
    "name", "seed", "modulation", "length_a", "length_b", "dataset_size", "train_fraction",
    "batch_size", "epochs", "grad_clip", "eval_metrics", "selection_snr_db", "selection_alpha",
)
_LOSS_KEYS = (
    "mode", "alpha", "beta", "shape_target", "shape_sigma", "shape_a", "shape_b", "shape_r",
    "shape_width", "shape_sample_n", "shape_sample_m",
)
_MOD_KEYS = ("d_model", "layers", "heads", "positional_scale")
_DEMOD_KEYS = ("d_model", "layers", "heads", "hidden", "positional_scale")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (ModulationKind, LossMode)):
        return value.value
    return repr(value) if isinstance(value, float) else str(value)


def to_ini(config: TrainConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {k: _fmt(getattr(config, k)) for k in _EXPERIMENT_KEYS}
    ch = config.channel
    cp["channel"] = {
        "snr_low_db": _fmt(ch.snr_low_db),
        "snr_high_db": _fmt(ch.snr_high_db),
        "fixed_snr_db": _fmt(ch.fixed_snr_db),
        "seed": _fmt(ch.seed),
    }
    loss = config.loss
    shape = loss.shape_target
    cp["loss"] = {
        "mode": _fmt(loss.mode),
        "alpha": _fmt(loss.alpha),
        "beta": _fmt(loss.beta),
        "shape_target": shape.kind if shape else "",
        "shape_sigma": _fmt(shape.sigma if shape else None),
        "shape_a": _fmt(shape.a if shape else None),
        "shape_b": _fmt(shape.b if shape else None),
        "shape_r": _fmt(shape.r if shape else None),
        "shape_width": _fmt(shape.width if shape else None),
        "shape_sample_n": _fmt(loss.shape_sample_n),
        "shape_sample_m": _fmt(loss.shape_sample_m),
    }
    cp["optimizer"] = {f.name: _fmt(getattr(config.optimizer, f.name)) for f in fields(OptimizerConfig)}
    cp["modulator"] = {k: _fmt(getattr(config.modulator, k)) for k in _MOD_KEYS}
    cp["demodulator"] = {k: _fmt(getattr(config.demodulator, k)) for k in _DEMOD_KEYS}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _conv(section: str, key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "optfloat":
            return None if raw == "" else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def from_ini(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse INI text on top of ``base`` (defaults when omitted); unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    allowed = {
        "experiment": _EXPERIMENT_KEYS,
        "channel": ("snr_low_db", "snr_high_db", "fixed_snr_db", "seed"),
        "loss": _LOSS_KEYS,
        "optimizer": tuple(f.name for f in fields(OptimizerConfig)),
        "modulator": _MOD_KEYS,
        "demodulator": _DEMOD_KEYS,
    }
    for section in cp.sections():
        if section not in allowed:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in allowed[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    base = base or TrainConfig()
    get = lambda s, k: cp[s][k] if cp.has_option(s, k) else None  # noqa: E731

    exp_types = {
        "name": str, "seed": int, "modulation": str, "length_a": int, "length_b": int,
        "dataset_size": int, "train_fraction": float, "batch_size": int, "epochs": int,
        "grad_clip": float, "eval_metrics": bool, "selection_snr_db": float, "selection_alpha": float,
    }
    updates = {}
    for key, kind in exp_types.items():
        raw = get("experiment", key)
        if raw is not None:
            updates[key] = _conv("experiment", key, raw, kind)

    ch = base.channel
    ch_updates = {}
    for key, kind in (("snr_low_db", float), ("snr_high_db", float), ("fixed_snr_db", "optfloat"), ("seed", int)):
        raw = get("channel", key)
        if raw is not None:
            ch_updates[key] = _conv("channel", key, raw, kind)

    loss = base.loss
    loss_updates = {}
    for key, kind in (("mode", str), ("alpha", "optfloat"), ("beta", float),
                      ("shape_sample_n", int), ("shape_sample_m", int)):
        raw = get("loss", key)
        if raw is not None:
            loss_updates[key] = _conv("loss", key, raw, kind)
    shape_kind = get("loss", "shape_target")
    shape = loss.shape_target
    shape_fields = {}
    for key in ("sigma", "a", "b", "r", "width"):
        raw = get("loss", f"shape_{key}")
        if raw is not None and raw.strip():
            shape_fields[key] = _conv("loss", f"shape_{key}", raw, float)
    if shape_kind is not None:
        shape_kind = shape_kind.strip()
        if shape_kind:
            try:
                shape = TargetShape(shape_kind, **shape_fields)
            except ValueError as exc:
                raise ConfigError(f"[loss] {exc}") from None
        else:
            shape = None
    elif shape is not None and shape_fields:
        shape = replace(shape, **shape_fields)

    opt_updates = {}
    for f in fields(OptimizerConfig):
        raw = get("optimizer", f.name)
        if raw is not None:
            opt_updates[f.name] = _conv("optimizer", f.name, raw, float)

    mod_updates, demod_updates = {}, {}
    for key in _MOD_KEYS:
        raw = get("modulator", key)
        if raw is not None:
            mod_updates[key] = _conv("modulator", key, raw, float if key == "positional_scale" else int)
    for key in _DEMOD_KEYS:
        raw = get("demodulator", key)
        if raw is not None:
            demod_updates[key] = _conv("demodulator", key, raw, float if key == "positional_scale" else int)

    try:
        length_a = updates.get("length_a", base.length_a)
        length_b = updates.get("length_b", base.length_b)
        mod = replace(base.modulator, length_a=length_a, length_b=length_b, **mod_updates)
        demod = replace(base.demodulator, length_a=length_a, length_b=length_b, **demod_updates)
        return replace(
            base,
            **updates,
            channel=replace(ch, **ch_updates),
            loss=replace(loss, **loss_updates, shape_target=shape),
            optimizer=replace(base.optimizer, **opt_updates),
            modulator=mod,
            demodulator=demod,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    with open(path, encoding="utf-8") as fh:
        return from_ini(fh.read(), base)


# presets: the three experiments scaled to a desktop CPU

RING = TargetShape("ring", r=1.0, width=0.1)
TARGETS = {
    "ring": RING,
    "ellipse": TargetShape("ellipse", a=1.0, b=0.5),
    "qpsk": TargetShape("qpsk_cloud", sigma=0.05),
    "qpsk-noisy": TargetShape("qpsk_cloud", sigma=0.2),
}


def preset(name: str, target: str | None = None) -> TrainConfig:
    """Named desk-scale experiment configurations.

    exp1-bpsk      BPSK, 32/32, 4096 examples, 40 epochs (full runs use 16384/128).
    exp2-qpsk-mse  QPSK, 256/4 instead of 1024/4, 4096 examples, MSE auxiliary loss, 40 epochs.
    exp3-shape     QPSK, 256/4, shape loss at a fixed 10 dB, 60 epochs; ``target``
                   picks ring (default), ellipse, qpsk or qpsk-noisy.
    """
    # Positional encodings are switched off in the presets: the B embedding
    # already tags every sample, and at d_model 2-3 the sinusoids swamp I/Q.
    nets = {"modulator": ModulatorConfig(positional_scale=0.0), "demodulator": DemodulatorConfig(positional_scale=0.0)}
    if name == "exp1-bpsk":
        return TrainConfig(
            name=name, seed=2, modulation=ModulationKind.BPSK, length_a=32, length_b=32,
            dataset_size=4096, epochs=40, **nets,
        )
    if name == "exp2-qpsk-mse":
        return TrainConfig(
            name=name, seed=2, modulation=ModulationKind.QPSK, length_a=256, length_b=4,
            dataset_size=4096, epochs=40, eval_metrics=False, loss=LossConfig(LossMode.MSE_AUX), **nets,
        )
    if name == "exp3-shape":
        shape = TARGETS[target or "ring"] if (target or "ring") in TARGETS else None
        if shape is None:
            raise ConfigError(f"unknown target {target!r}; choose from {sorted(TARGETS)}")
        return TrainConfig(
            name=name, seed=3, modulation=ModulationKind.QPSK, length_a=256, length_b=4,
            dataset_size=4096, epochs=60, eval_metrics=False, **nets,
            channel=ChannelConfig(fixed_snr_db=10.0),
            loss=LossConfig(LossMode.SHAPE, beta=1.0, shape_target=shape),
        )
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")


PRESETS = ("exp1-bpsk", "exp2-qpsk-mse", "exp3-shape")
