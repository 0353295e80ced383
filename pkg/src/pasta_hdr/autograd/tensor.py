"""Tensor container and the tape that records differentiable operations."""

from __future__ import annotations

import contextlib
import contextvars
import tracemalloc
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "pasta_active_tape", default=None
)
_DTYPE: contextvars.ContextVar[type] = contextvars.ContextVar("pasta_dtype", default=np.float32)
_MEMORY_CAP: contextvars.ContextVar[Optional[int]] = contextvars.ContextVar(
    "pasta_memory_cap", default=None
)


class MemoryCapExceeded(MemoryError):
    """Raised when traced allocations cross the soft cap set by :func:`memory_cap`."""


def get_default_dtype() -> type:
    return _DTYPE.get()


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype new tensors are created with.

    The engine runs in float32. Gradient checks switch to float64 so that
    finite differences are not swamped by rounding.
    """
    token = _DTYPE.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DTYPE.reset(token)


@contextlib.contextmanager
def memory_cap(limit_bytes: Optional[int]):
    """Soft cap on traced memory; requires :mod:`tracemalloc` to be running."""
    token = _MEMORY_CAP.set(limit_bytes)
    try:
        yield
    finally:
        _MEMORY_CAP.reset(token)


def _guard_memory() -> None:
    cap = _MEMORY_CAP.get()
    if cap is None or not tracemalloc.is_tracing():
        return
    current, _ = tracemalloc.get_traced_memory()
    if current > cap:
        raise MemoryCapExceeded(f"traced memory {current} B exceeds cap {cap} B")


class Tensor:
    """Dense float array that can take part in reverse-mode differentiation."""

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        dtype = get_default_dtype()
        if arr.dtype != dtype:
            arr = arr.astype(dtype)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        _guard_memory()

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # Operator sugar; implementations live in ops.py.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A learnable leaf tensor."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.shape})"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class _Record:
    name: str
    inputs: tuple
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered log of the differentiable operations run while it is active.

    Use as a context manager around a forward pass, then call
    :meth:`backward` once on a scalar result.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._replayed = False
        self._token = None
        self.visited = 0

    def __enter__(self) -> "Tape":
        if self._replayed:
            raise RuntimeError("this tape was already replayed; record on a fresh Tape")
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self._records)

    @property
    def ops(self) -> list[str]:
        return [r.name for r in self._records]

    def record(self, name: str, inputs: tuple, output: Tensor, backward: BackwardFn) -> None:
        self._records.append(_Record(name, inputs, output, backward))

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


@contextlib.contextmanager
def no_record():
    """Suspend recording, e.g. for optimizer updates inside a tape block."""
    token = _ACTIVE_TAPE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TAPE.reset(token)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_result(name: str, data: np.ndarray, inputs: tuple, backward_fn: BackwardFn) -> Tensor:
    """Wrap an op's output, validate it and record it on the active tape."""
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{name} produced non-finite values")
    tape = _ACTIVE_TAPE.get()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        tape.record(name, inputs, out, backward_fn)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Replay ``tape`` in reverse and store d(loss)/d(leaf) in each leaf's ``grad``.

    Leaves accumulate: an existing ``grad`` is added to, not replaced.
    """
    if tape._replayed:
        raise RuntimeError("backward called twice on the same tape")
    if not tape._records:
        raise RuntimeError("backward on an empty tape")
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    produced = {id(r.output) for r in tape._records}
    tape.visited = 0
    for rec in reversed(tape._records):
        tape.visited += 1
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.backward(g)
        for t, gi in zip(rec.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise RuntimeError(f"{rec.name}: gradient shape {gi.shape} != input shape {t.shape}")
            key = id(t)
            if key not in produced:
                leaves[key] = t
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi

    for key, t in leaves.items():
        g = grads.get(key)
        if g is None:
            continue
        g = g.astype(t.dtype, copy=False)
        t.grad = g.copy() if t.grad is None else t.grad + g

    tape._records.clear()
    tape._replayed = True
