"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, default_dtype


def numerical_grad(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], index: int,
                   h: float = 1e-5) -> np.ndarray:
    base = [np.array(a, dtype=np.float64) for a in arrays]
    grad = np.zeros_like(base[index])
    flat = base[index].reshape(-1)
    g = grad.reshape(-1)
    with default_dtype(np.float64):
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(*[Tensor(a) for a in base]).data.sum()
            flat[i] = orig - h
            fm = fn(*[Tensor(a) for a in base]).data.sum()
            flat[i] = orig
            g[i] = (fp - fm) / (2 * h)
    return grad


def analytic_grad(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    with default_dtype(np.float64):
        inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
        with Tape() as tape:
            out = fn(*inputs)
            loss = out.sum() if out.size != 1 else out
        tape.backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(numeric).max(initial=0.0), np.abs(analytic).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray],
                    h: float = 1e-5) -> float:
    """Largest relative error between tape gradients and central differences.

    ``fn`` maps tensors to a tensor; non-scalar outputs are summed. Runs in
    float64 so the difference quotient is not dominated by rounding.
    """
    analytic = analytic_grad(fn, arrays)
    return max(
        relative_error(a, numerical_grad(fn, arrays, i, h)) for i, a in enumerate(analytic)
    )
