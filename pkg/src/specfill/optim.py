"""AdaBelief optimiser and gradient clipping over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    s: dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, params: Mapping[str, Tensor]) -> None:
        for name, p in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.s[name] = np.zeros_like(p.data)
            elif self.m[name].shape != p.shape or self.s[name].shape != p.shape:
                raise ValueError(f"optimizer state for {name!r} has shape {self.m[name].shape}, param has {p.shape}")


def adabelief_step(params: Mapping[str, Tensor], state: OptimizerState) -> None:
    """One in-place AdaBelief update.

    m <- b1 m + (1-b1) g
    s <- b2 s + (1-b2) (g-m)^2 + eps
    p <- p - lr * m_hat / (sqrt(s_hat) + eps)
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ValueError(f"missing gradient for: {', '.join(missing)}")
    state.ensure(params)
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = p.grad
        m, s = state.m[name], state.s[name]
        m *= b1
        m += (1.0 - b1) * g
        diff = g - m
        s *= b2
        s += (1.0 - b2) * diff * diff + eps
        step = state.lr * (m / bc1) / (np.sqrt(s / bc2) + eps)
        p.data = (p.data - step).astype(p.data.dtype, copy=False)


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = float(np.sqrt(sum(np.sum(p.grad.astype(np.float64) ** 2) for p in params.values() if p.grad is not None)))
    if total > max_norm > 0:
        factor = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * np.asarray(factor, dtype=p.grad.dtype)
    return total


def zero_grad(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
