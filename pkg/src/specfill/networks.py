"""Learnable Modulator and Demodulator networks.

Layout conventions: signals travel as (batch, 2, length) arrays. Both
transformers run over the time axis, so each of the ``length_a`` samples is a
token of width ``d_model``. Kernel-1 convolutions then mix channels per token.

Attention is exact softmax attention (no kernel approximation). Blocks are
pre-norm: ``x + MHA(LN(x))`` followed by ``h + FFN(LN(h))`` with a 4x GELU
feed-forward.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .tensor import BatchNormStats, Tensor


@dataclass(frozen=True)
class ModulatorConfig:
    length_a: int = 32
    length_b: int = 32
    d_model: int = 3
    layers: int = 3
    heads: int = 3
    positional_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.length_a < 1 or self.length_b < 1:
            raise ValueError("message lengths must be positive")
        if self.length_a % self.length_b:
            raise ValueError(f"length_b={self.length_b} must divide length_a={self.length_a}")
        if self.d_model != 3:
            raise ValueError("the modulator stacks (I, Q, B-embedding): d_model must be 3")
        if self.heads < 1 or self.layers < 0:
            raise ValueError("need heads >= 1 and layers >= 0")

    @property
    def embed_dim(self) -> int:
        return self.length_a // self.length_b


@dataclass(frozen=True)
class DemodulatorConfig:
    length_a: int = 32
    length_b: int = 32
    d_model: int = 2
    layers: int = 4
    heads: int = 2
    hidden: int = 128
    positional_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.length_a < 1 or self.length_b < 1:
            raise ValueError("message lengths must be positive")
        if self.d_model != 2:
            raise ValueError("the demodulator reads (I, Q) tokens: d_model must be 2")
        if self.heads < 1 or self.layers < 0 or self.hidden < 1:
            raise ValueError("need heads >= 1, layers >= 0, hidden >= 1")


@dataclass
class ModelParams:
    """Named trainable tensors plus batch-norm running statistics."""

    tensors: dict[str, Tensor] = field(default_factory=dict)
    bn: dict[str, BatchNormStats] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def arrays(self) -> dict[str, np.ndarray]:
        """Every stored array (parameters and running stats) by name."""
        out = {name: t.data for name, t in self.tensors.items()}
        for name, stats in self.bn.items():
            out[f"{name}.running_mean"] = stats.mean
            out[f"{name}.running_var"] = stats.var
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        expected = self.arrays()
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ValueError(f"parameter names differ: missing {missing}, unexpected {extra}")
        for name, arr in arrays.items():
            if arr.shape != expected[name].shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {expected[name].shape}")
        for name, t in self.tensors.items():
            t.data = np.array(arrays[name], dtype=t.dtype)
        for name, stats in self.bn.items():
            stats.mean = np.array(arrays[f"{name}.running_mean"], dtype=stats.mean.dtype)
            stats.var = np.array(arrays[f"{name}.running_var"], dtype=stats.var.dtype)

    def copy(self) -> ModelParams:
        other = ModelParams(
            {n: Tensor(t.data.copy(), requires_grad=t.requires_grad) for n, t in self.tensors.items()},
            {n: BatchNormStats(s.mean.size, s.momentum, s.eps, s.mean.dtype) for n, s in self.bn.items()},
        )
        for n, s in self.bn.items():
            other.bn[n].mean[...] = s.mean
            other.bn[n].var[...] = s.var
        return other

    def astype(self, dtype) -> ModelParams:
        other = self.copy()
        for t in other.tensors.values():
            t.data = t.data.astype(dtype)
        for s in other.bn.values():
            s.mean, s.var = s.mean.astype(dtype), s.var.astype(dtype)
        return other


# initialisation


def _xavier(rng: np.random.Generator, fan_out: int, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)


def _add_block(store: dict, rng, prefix: str, d: int, heads: int, dtype) -> None:
    hd = max(d // heads, 1)
    inner = hd * heads
    hidden = 4 * d

    def p(name, arr):
        store[f"{prefix}.{name}"] = Tensor(arr, requires_grad=True)

    p("ln1.gamma", np.ones(d, dtype))
    p("ln1.beta", np.zeros(d, dtype))
    for w in ("q", "k", "v"):
        p(f"attn.w{w}", _xavier(rng, inner, d, dtype))
        p(f"attn.b{w}", np.zeros(inner, dtype))
    p("attn.wo", _xavier(rng, d, inner, dtype))
    p("attn.bo", np.zeros(d, dtype))
    p("ln2.gamma", np.ones(d, dtype))
    p("ln2.beta", np.zeros(d, dtype))
    p("ff.w1", _xavier(rng, hidden, d, dtype))
    p("ff.b1", np.zeros(hidden, dtype))
    p("ff.w2", _xavier(rng, d, hidden, dtype))
    p("ff.b2", np.zeros(d, dtype))


def init_params(
    mod_cfg: ModulatorConfig,
    demod_cfg: DemodulatorConfig,
    rng: np.random.Generator,
    dtype=np.float32,
) -> ModelParams:
    """Glorot-uniform weights, zero biases, N(0, 1) embedding rows."""
    if (mod_cfg.length_a, mod_cfg.length_b) != (demod_cfg.length_a, demod_cfg.length_b):
        raise ValueError("modulator and demodulator disagree on message lengths")
    t: dict[str, Tensor] = {}
    t["mod.embed"] = Tensor(rng.standard_normal((2, mod_cfg.embed_dim)).astype(dtype), requires_grad=True)
    for i in range(mod_cfg.layers):
        _add_block(t, rng, f"mod.layers.{i}", mod_cfg.d_model, mod_cfg.heads, dtype)
    t["mod.conv.weight"] = Tensor(_xavier(rng, 2, mod_cfg.d_model, dtype), requires_grad=True)
    t["mod.conv.bias"] = Tensor(np.zeros(2, dtype), requires_grad=True)

    for i in range(demod_cfg.layers):
        _add_block(t, rng, f"demod.layers.{i}", demod_cfg.d_model, demod_cfg.heads, dtype)
    t["demod.conv.weight"] = Tensor(_xavier(rng, 1, demod_cfg.d_model, dtype), requires_grad=True)
    t["demod.conv.bias"] = Tensor(np.zeros(1, dtype), requires_grad=True)
    t["demod.proj.weight"] = Tensor(_xavier(rng, demod_cfg.hidden, demod_cfg.length_a, dtype), requires_grad=True)
    t["demod.proj.bias"] = Tensor(np.zeros(demod_cfg.hidden, dtype), requires_grad=True)
    t["demod.bn.gamma"] = Tensor(np.ones(demod_cfg.hidden, dtype), requires_grad=True)
    t["demod.bn.beta"] = Tensor(np.zeros(demod_cfg.hidden, dtype), requires_grad=True)
    t["demod.head.weight"] = Tensor(_xavier(rng, demod_cfg.length_b, demod_cfg.hidden, dtype), requires_grad=True)
    t["demod.head.bias"] = Tensor(np.zeros(demod_cfg.length_b, dtype), requires_grad=True)
    return ModelParams(t, {"demod.bn": BatchNormStats(demod_cfg.hidden, dtype=dtype)})


# building blocks


def sinusoidal_positions(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    k = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (k // 2)) / d_model)
    return np.where(k % 2 == 0, np.sin(angle), np.cos(angle))


def multi_head_attention(x: Tensor, params: ModelParams, prefix: str, heads: int) -> Tensor:
    """Scaled dot-product self-attention over a (batch, length, d) input."""
    b, n, d = x.shape
    hd = max(d // heads, 1)

    def split(name):
        y = T.linear(x, params[f"{prefix}.w{name}"], params[f"{prefix}.b{name}"])
        return T.transpose(T.reshape(y, (b, n, heads, hd)), (0, 2, 1, 3))

    q, k, v = split("q"), split("k"), split("v")
    ctx = T.reshape(T.transpose(T.attention(q, k, v), (0, 2, 1, 3)), (b, n, heads * hd))
    return T.linear(ctx, params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def transformer_block(x: Tensor, params: ModelParams, prefix: str, heads: int) -> Tensor:
    h = T.layer_norm(x, params[f"{prefix}.ln1.gamma"], params[f"{prefix}.ln1.beta"])
    x = T.add(x, multi_head_attention(h, params, f"{prefix}.attn", heads))
    h = T.layer_norm(x, params[f"{prefix}.ln2.gamma"], params[f"{prefix}.ln2.beta"])
    h = T.gelu(T.linear(h, params[f"{prefix}.ff.w1"], params[f"{prefix}.ff.b1"]))
    return T.add(x, T.linear(h, params[f"{prefix}.ff.w2"], params[f"{prefix}.ff.b2"]))


def _encode(x: Tensor, params: ModelParams, prefix: str, layers: int, heads: int, pos_scale: float) -> Tensor:
    """(batch, channels, length) -> transformer over time -> (batch, channels, length)."""
    _, d, n = x.shape
    h = T.transpose(x, (0, 2, 1))
    if pos_scale:
        h = T.add(h, (pos_scale * sinusoidal_positions(n, d)).astype(x.dtype))
    for i in range(layers):
        h = transformer_block(h, params, f"{prefix}.layers.{i}", heads)
    return T.transpose(h, (0, 2, 1))


def _batched(iq) -> Tensor:
    x = iq if isinstance(iq, Tensor) else Tensor(np.asarray(iq))
    if x.ndim == 2:
        x = T.reshape(x, (1,) + x.shape)
    return x


# networks


def modulator_forward(iq_a, bits_b, params: ModelParams, config: ModulatorConfig) -> Tensor:
    """IQ_A (batch, 2, length_a) and B bits (batch, length_b) -> IQ_AB (batch, 2, length_a)."""
    x = _batched(iq_a)
    bits = np.asarray(bits_b, dtype=np.int64)
    if bits.ndim == 1:
        bits = bits[None, :]
    if x.shape[1:] != (2, config.length_a):
        raise T.ShapeError("modulator_forward", x.shape, (2, config.length_a))
    if bits.shape != (x.shape[0], config.length_b):
        raise T.ShapeError("modulator_forward", bits.shape, (x.shape[0], config.length_b))
    batch = x.shape[0]
    table = params["mod.embed"]
    emb = T.reshape(T.embedding(table, bits), (batch, 1, config.length_a))
    h = T.concat([T.astype(x, table.dtype) if x.dtype != table.dtype else x, emb], axis=1)
    h = _encode(h, params, "mod", config.layers, config.heads, config.positional_scale)
    return T.conv1d_k1(h, params["mod.conv.weight"], params["mod.conv.bias"])


def demodulator_forward(
    iq_channel, params: ModelParams, config: DemodulatorConfig, training: bool = False
) -> Tensor:
    """Received IQ (batch, 2, length_a) -> B-bit logits (batch, length_b)."""
    x = _batched(iq_channel)
    if x.shape[1:] != (2, config.length_a):
        raise T.ShapeError("demodulator_forward", x.shape, (2, config.length_a))
    dtype = params["demod.conv.weight"].dtype
    if x.dtype != dtype:
        x = T.astype(x, dtype)
    h = _encode(x, params, "demod", config.layers, config.heads, config.positional_scale)
    h = T.conv1d_k1(h, params["demod.conv.weight"], params["demod.conv.bias"])
    h = T.reshape(h, (h.shape[0], config.length_a))
    h = T.linear(h, params["demod.proj.weight"], params["demod.proj.bias"])
    h = T.batch_norm(h, params["demod.bn.gamma"], params["demod.bn.beta"], params.bn["demod.bn"], training)
    h = T.gelu(h)
    return T.linear(h, params["demod.head.weight"], params["demod.head.bias"])


def config_dict(mod_cfg: ModulatorConfig, demod_cfg: DemodulatorConfig) -> dict:
    return {"modulator": asdict(mod_cfg), "demodulator": asdict(demod_cfg)}
