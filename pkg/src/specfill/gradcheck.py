"""Central finite-difference gradient oracle.

Deliberately independent of ``Tensor.backward``: it only evaluates forward
passes on perturbed copies of the inputs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grads(f: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = 1e-4) -> list[np.ndarray]:
    grads = []
    for t in inputs:
        g = np.zeros(t.shape, dtype=np.float64)
        flat = t.data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = float(np.sum(f().data))
            flat[k] = orig - step
            down = float(np.sum(f().data))
            flat[k] = orig
            g.reshape(-1)[k] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def relative_error(analytic, numeric) -> float:
    """Norm-wise relative error ||a - n|| / max(||a||, ||n||, 1e-12).

    Arguments may be arrays or sequences of arrays (treated as one flat vector).
    """
    if isinstance(analytic, np.ndarray):
        analytic, numeric = [analytic], [numeric]
    a = np.concatenate([np.ravel(x).astype(np.float64) for x in analytic])
    n = np.concatenate([np.ravel(x).astype(np.float64) for x in numeric])
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def check_gradients(f: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = 1e-4) -> float:
    """Relative error between backward() and finite differences, all ``inputs`` jointly."""
    for t in inputs:
        t.grad = None
    f().backward()
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad for t in inputs]
    numeric = numerical_grads(f, inputs, step)
    return relative_error(analytic, numeric)
