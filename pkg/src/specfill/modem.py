"""Fixed BPSK/QPSK modulation of message A at one IQ sample per symbol.

Mapping conventions:

* BPSK: bit 0 -> I = +1, bit 1 -> I = -1, Q = 0.
* QPSK (Gray): bit pair (b_I, b_Q) -> ((1 - 2 b_I)/sqrt2, (1 - 2 b_Q)/sqrt2).

Slicers decide bit 0 on a component >= 0, so the boundary value 0 maps to 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


class ModulationKind(enum.Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"

    @property
    def bits_per_symbol(self) -> int:
        return 1 if self is ModulationKind.BPSK else 2

    @classmethod
    def parse(cls, value: str | ModulationKind) -> ModulationKind:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown modulation {value!r}; expected bpsk or qpsk") from None


@dataclass(frozen=True)
class BitMessage:
    bits: np.ndarray
    role: str = "A"

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size < 1:
            raise ValueError("a bit message is a non-empty 1-D sequence")
        if np.any(bits > 1):
            raise ValueError("bit values must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return self.bits.size

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_string(cls, text: str, role: str = "A") -> BitMessage:
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a bit string: {text!r}")
        return cls(np.frombuffer(text.encode(), dtype=np.uint8) - ord("0"), role)


@dataclass(frozen=True)
class IQSignal:
    """In-phase and quadrature sample sequences.

    ``i`` and ``q`` share a shape; the last axis is time, any leading axes
    are batch axes.
    """

    i: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        i, q = np.asarray(self.i), np.asarray(self.q)
        if i.shape != q.shape:
            raise ValueError(f"I and Q lengths differ: {i.shape} vs {q.shape}")
        if not (np.all(np.isfinite(i)) and np.all(np.isfinite(q))):
            raise ValueError("IQ samples must be finite")
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.i.shape[-1]

    def to_array(self) -> np.ndarray:
        """Stack as (..., 2, N)."""
        return np.stack([self.i, self.q], axis=-2)

    @classmethod
    def from_array(cls, arr) -> IQSignal:
        arr = np.asarray(arr)
        if arr.ndim < 2 or arr.shape[-2] != 2:
            raise ValueError(f"expected (..., 2, N) array, got {arr.shape}")
        return cls(arr[..., 0, :], arr[..., 1, :])


def _bits_array(bits) -> np.ndarray:
    if isinstance(bits, BitMessage):
        return bits.bits
    arr = np.asarray(bits)
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError("bit values must be 0 or 1")
    return arr.astype(np.uint8)


def modulate(bits, kind: ModulationKind, dtype=np.float64) -> IQSignal:
    """Map bits (last axis) onto unit-energy symbols, one IQ sample each."""
    b = _bits_array(bits).astype(dtype)
    if kind is ModulationKind.BPSK:
        return IQSignal(1.0 - 2.0 * b, np.zeros_like(b))
    if b.shape[-1] % 2:
        raise ValueError(f"QPSK needs an even number of bits, got {b.shape[-1]}")
    pairs = b.reshape(b.shape[:-1] + (-1, 2))
    a = np.asarray(_INV_SQRT2, dtype=dtype)
    return IQSignal((1.0 - 2.0 * pairs[..., 0]) * a, (1.0 - 2.0 * pairs[..., 1]) * a)


def demodulate(signal: IQSignal, kind: ModulationKind) -> np.ndarray:
    """Hard-decision slicing back to bits (uint8, last axis)."""
    bit_i = (signal.i < 0).astype(np.uint8)
    if kind is ModulationKind.BPSK:
        return bit_i
    bit_q = (signal.q < 0).astype(np.uint8)
    return np.stack([bit_i, bit_q], axis=-1).reshape(bit_i.shape[:-1] + (-1,))


def symbol_labels(bits, kind: ModulationKind) -> np.ndarray:
    """Integer symbol index per IQ sample (BPSK 0..1, QPSK 2*b_I + b_Q)."""
    b = _bits_array(bits).astype(np.int64)
    if kind is ModulationKind.BPSK:
        return b
    pairs = b.reshape(b.shape[:-1] + (-1, 2))
    return 2 * pairs[..., 0] + pairs[..., 1]
