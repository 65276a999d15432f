"""AWGN channel with per-example SNR draws.

SNR is measured against the *actual* mean power of the input signal, so a
modulator that rescales its output is noised consistently. At one sample per
symbol with unit symbol energy, SNR and Es/N0 coincide.

Noise draw order for a signal of shape (..., N): one standard-normal array of
shape (..., N, 2) is drawn, sample-major with I before Q within each sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modem import IQSignal
from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class ChannelConfig:
    snr_low_db: float = 5.0
    snr_high_db: float = 15.0
    fixed_snr_db: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.snr_low_db > self.snr_high_db:
            raise ValueError(f"snr_low_db {self.snr_low_db} > snr_high_db {self.snr_high_db}")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for a master seed and optional sub-stream indices."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


def sample_snr(config: ChannelConfig, rng: np.random.Generator, size=None):
    """Uniform SNR in dB, one per example; ``fixed_snr_db`` overrides the range."""
    if config.fixed_snr_db is not None:
        return config.fixed_snr_db if size is None else np.full(size, float(config.fixed_snr_db))
    return rng.uniform(config.snr_low_db, config.snr_high_db, size)


def noise_variance(es, snr_db):
    """Per-real-component noise variance Es / (2 * 10^(snr/10)); 0 for infinite SNR."""
    es = np.asarray(es, dtype=np.float64)
    snr_db = np.asarray(snr_db, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.where(np.isposinf(snr_db), 0.0, es / (2.0 * 10.0 ** (snr_db / 10.0)))


def snr_db_to_esn0_db(snr_db: float) -> float:
    """Es/N0 in dB; equal to SNR at one sample per symbol and unit symbol energy."""
    return float(snr_db)


def _noise(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    # (..., N, 2) then moved to (..., 2, N)
    return np.moveaxis(rng.standard_normal(shape[:-2] + (shape[-1], 2)), -1, -2)


def awgn_array(x: np.ndarray, snr_db, rng: np.random.Generator) -> np.ndarray:
    """Noise a (..., 2, N) array; ``snr_db`` is scalar or one value per leading index."""
    x = np.asarray(x)
    es = (x.astype(np.float64) ** 2).sum(axis=-2).mean(axis=-1)
    sigma = np.sqrt(noise_variance(es, snr_db))[..., None, None]
    return (x + sigma * _noise(x.shape, rng)).astype(x.dtype)


def awgn(signal: IQSignal, snr_db: float, rng: np.random.Generator) -> IQSignal:
    return IQSignal.from_array(awgn_array(signal.to_array(), snr_db, rng))


def awgn_tensor(x: Tensor, snr_db, rng: np.random.Generator, track_power: bool = True) -> Tensor:
    """Differentiable channel for a (batch, 2, N) tensor.

    With ``track_power`` the noise standard deviation sqrt(Es / (2 snr)) is a
    differentiable function of the signal's own power, so the gradient sees
    that a louder signal also draws louder noise. Without it the noise is a
    constant and d(out)/d(in) is the identity.
    """
    data = x.data
    eps = _noise(data.shape, rng).astype(data.dtype)
    ratio = np.where(np.isposinf(np.asarray(snr_db, np.float64)), 0.0, 1.0 / (2.0 * 10.0 ** (np.asarray(snr_db, np.float64) / 10.0)))
    ratio = np.broadcast_to(ratio, data.shape[:-2]).astype(data.dtype)
    if not track_power:
        es = (data.astype(np.float64) ** 2).sum(axis=-2).mean(axis=-1)
        sigma = np.sqrt(es * ratio)[..., None, None]
        return T.add(x, (sigma * eps).astype(data.dtype))
    es = T.mean(T.sum_(T.square(x), axis=-2), axis=-1)
    sigma = _noise_scale(es, ratio)
    return T.add(x, T.mul(T.reshape(sigma, sigma.shape + (1, 1)), eps))


def _noise_scale(es: Tensor, ratio: np.ndarray) -> Tensor:
    """sqrt(es * ratio) with a zero gradient where the scale is zero."""
    out = np.sqrt(es.data * ratio)

    def backward(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * ratio / (2.0 * safe), 0.0).astype(es.dtype),)

    return T._make(out, (es,), backward, "noise_scale")
