"""Training objectives and the alpha schedule."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import tensor as T
from .modem import ModulationKind
from .tensor import Tensor


class LossMode(enum.Enum):
    BASE = "base"
    MSE_AUX = "mse_aux"
    SHAPE = "shape"


_SHAPE_KINDS = ("qpsk_cloud", "ellipse", "ring")


@dataclass(frozen=True)
class TargetShape:
    """Target constellation for the shape loss.

    qpsk_cloud uses ``sigma``; ellipse uses semi-axes ``a`` (I) and ``b`` (Q);
    ring uses radius ``r`` and radial ``width``.
    """

    kind: str
    sigma: float = 0.0
    a: float = 1.0
    b: float = 1.0
    r: float = 1.0
    width: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _SHAPE_KINDS:
            raise ValueError(f"unknown target shape {self.kind!r}; expected one of {_SHAPE_KINDS}")
        if self.sigma < 0 or self.width < 0:
            raise ValueError("sigma and width must be >= 0")
        if self.a <= 0 or self.b <= 0 or self.r <= 0:
            raise ValueError("a, b and r must be > 0")


@dataclass(frozen=True)
class LossConfig:
    mode: LossMode = LossMode.BASE
    alpha: float | None = None  # None: follow alpha_schedule
    beta: float = 1.0
    shape_target: TargetShape | None = None
    shape_sample_n: int = 2500
    shape_sample_m: int = 2500

    def __post_init__(self) -> None:
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", LossMode(self.mode))
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.mode is LossMode.SHAPE and self.shape_target is None:
            raise ValueError("shape mode needs a shape_target")
        if self.shape_sample_n < 1 or self.shape_sample_m < 1:
            raise ValueError("shape sample counts must be >= 1")


def _check_pair(op: str, a_shape, b_shape) -> None:
    if tuple(a_shape) != tuple(b_shape):
        raise T.ShapeError(op, a_shape, b_shape)


def loss_a_targets(iq_a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-component BCE targets and mask from a clean signal.

    Target 1 where the clean component is positive, 0 where negative; exact
    zeros (the Q rail of BPSK) are masked out.
    """
    iq_a = np.asarray(iq_a)
    return (iq_a > 0).astype(np.float32), (iq_a != 0).astype(np.float32)


def loss_a(iq_channel: Tensor, iq_a, kind: ModulationKind | None = None) -> Tensor:
    """Received samples read as logits, scored against the clean signal's signs.

    ``kind`` is accepted for symmetry with the modem API; the mask derived from
    the clean signal already handles BPSK's empty Q rail.
    """
    iq_a = np.asarray(iq_a)
    _check_pair("loss_a", iq_channel.shape, iq_a.shape)
    targets, mask = loss_a_targets(iq_a)
    return T.bce_with_logits(iq_channel, targets, mask)


def loss_b(logits: Tensor, bits_b) -> Tensor:
    bits = np.asarray(bits_b)
    _check_pair("loss_b", logits.shape, bits.shape)
    return T.bce_with_logits(logits, bits.astype(np.float32))


def loss_mse(iq_ab: Tensor, iq_a) -> Tensor:
    iq_a = np.asarray(iq_a)
    _check_pair("loss_mse", iq_ab.shape, iq_a.shape)
    return T.mean(T.square(T.sub(iq_ab, iq_a.astype(iq_ab.dtype))))


def pairwise_point_mse(s: np.ndarray, q: np.ndarray) -> np.ndarray:
    """(n, m) matrix of per-point MSE between 2-D points."""
    di = s[:, None, 0] - q[None, :, 0]
    dq = s[:, None, 1] - q[None, :, 1]
    return 0.5 * (di * di + dq * dq)


def loss_shape(signal_points, target_points) -> Tensor:
    """Two-sided nearest-neighbour (Chamfer-style) loss between 2-D point sets.

    mean_i min_j M_ij + mean_j min_i M_ij with M_ij = MSE(s_i, q_j). Gradient
    flows through the selected (arg-min) pairs only.
    """
    s_t, q_t = T.as_tensor(signal_points), T.as_tensor(target_points)
    s, q = s_t.data, q_t.data
    if s.ndim != 2 or q.ndim != 2 or s.shape[1] != 2 or q.shape[1] != 2:
        raise T.ShapeError("loss_shape", s.shape, q.shape)
    n, m = s.shape[0], q.shape[0]
    if n == 0 or m == 0:
        raise ValueError("loss_shape needs non-empty point sets")
    dist = pairwise_point_mse(s, q)
    nearest_q = dist.argmin(axis=1)
    nearest_s = dist.argmin(axis=0)
    value = dist[np.arange(n), nearest_q].mean() + dist[nearest_s, np.arange(m)].mean()

    def backward(g):
        # d/ds of 0.5*|s - q|^2 is (s - q)
        d1 = s - q[nearest_q]
        d2 = s[nearest_s] - q
        gs = d1 / n
        np.add.at(gs, nearest_s, d2 / m)
        gq = -d2 / m
        np.add.at(gq, nearest_q, -d1 / n)
        return g * gs, g * gq

    return T._make(np.asarray(value, dtype=s.dtype), (s_t, q_t), backward, "loss_shape")


def sample_target(shape: TargetShape, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``m`` points (m, 2) from a target constellation."""
    if m < 1:
        raise ValueError("need m >= 1")
    if shape.kind == "qpsk_cloud":
        corners = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]]) / np.sqrt(2.0)
        pts = corners[rng.integers(0, 4, size=m)]
        if shape.sigma > 0:
            pts = pts + rng.normal(0.0, shape.sigma, size=(m, 2))
        return pts
    theta = rng.uniform(0.0, 2.0 * np.pi, size=m)
    if shape.kind == "ellipse":
        return np.stack([shape.a * np.cos(theta), shape.b * np.sin(theta)], axis=1)
    radius = rng.uniform(shape.r - shape.width / 2, shape.r + shape.width / 2, size=m)
    return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)


def sample_signal_points(iq_ab: Tensor, n: int, rng: np.random.Generator) -> Tensor:
    """Pick ``n`` IQ samples (without replacement) from a (batch, 2, L) signal as (n, 2) points."""
    b, _, length = iq_ab.shape
    total = b * length
    flat = rng.choice(total, size=min(n, total), replace=False)
    points = T.transpose(iq_ab, (0, 2, 1))
    points = T.reshape(points, (total, 2))
    return T.take(points, flat)


def combined_loss(parts: Mapping[str, Tensor], config: LossConfig, alpha: float | None = None) -> Tensor:
    """Weighted sum of the parts for the configured mode.

    ``alpha`` defaults to ``config.alpha``; one of them must be set.

    BASE:    a L_A + (1-a) L_B
    MSE_AUX: (a/2) L_A + (1-a) L_B + (a/2) L_MSE
    SHAPE:   a L_A + (1-a) L_B + beta L_shape
    """
    need = {"a", "b"}
    if config.mode is LossMode.MSE_AUX:
        need.add("mse")
    elif config.mode is LossMode.SHAPE:
        need.add("shape")
    missing = sorted(need - set(parts))
    if missing:
        raise ValueError(f"{config.mode.value} loss needs parts {missing}")
    if alpha is None:
        alpha = config.alpha
    if alpha is None:
        raise ValueError("no alpha given and config.alpha is unset")

    if config.mode is LossMode.MSE_AUX:
        total = T.add(T.scale(parts["a"], alpha / 2), T.scale(parts["b"], 1.0 - alpha))
        return T.add(total, T.scale(parts["mse"], alpha / 2))
    total = T.add(T.scale(parts["a"], alpha), T.scale(parts["b"], 1.0 - alpha))
    if config.mode is LossMode.SHAPE:
        total = T.add(total, T.scale(parts["shape"], config.beta))
    return total


def alpha_schedule(epoch: int, hold: int = 3, rate: float = 0.01, floor: float = 0.5) -> float:
    """1.0 for the first ``hold`` epochs, then down by ``rate`` per epoch to ``floor``."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if epoch < hold:
        return 1.0
    # round away float drift so 1 - 0.01*7 reports as 0.93
    return max(floor, round(1.0 - rate * (epoch - hold), 12))
