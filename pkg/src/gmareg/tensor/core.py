"""Dense tensor type and the define-by-run gradient tape."""
from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

_FLOAT_TYPES = (np.float32, np.float64)
_default_dtype = np.float64
_grad_enabled = True


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in _FLOAT_TYPES:
        raise ValueError(f"unsupported tensor dtype {dtype!r}")
    _default_dtype = dtype


def get_default_dtype():
    return _default_dtype


class Tensor:
    """Row-major float array that can take part in reverse-mode differentiation.

    ``grad`` is filled in by :func:`backward` for every tensor with
    ``requires_grad`` that the loss depends on.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype.type in _FLOAT_TYPES:
                dtype = data.dtype
            else:
                dtype = _default_dtype
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

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
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    # operator sugar; the implementations live in ``ops``
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

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
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)

    def mean(self, axis=None):
        from . import ops
        return ops.mean(self, axis)


class Record:
    __slots__ = ("inputs", "output", "backward_fn", "op")

    def __init__(self, inputs, output, backward_fn, op):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.op = op


class Tape:
    """Ordered log of differentiable operations.

    Records are appended as operations execute, so every record's inputs were
    produced before it. ``backward`` replays the log in reverse and clears it.
    """

    def __init__(self):
        self.records: list[Record] = []

    def record(self, inputs, output, backward_fn, op: str) -> None:
        self.records.append(Record(inputs, output, backward_fn, op))

    def clear(self) -> None:
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


_tape = Tape()


def get_tape() -> Tape:
    return _tape


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def make_result(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    op: str,
) -> Tensor:
    """Wrap an op output and record it on the tape when any input is tracked."""
    track = _grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        _tape.record(tuple(inputs), out, backward_fn, op)
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tracked tensor the scalar ``loss`` depends on."""
    if loss.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad or not _tape.records:
        raise RuntimeError("backward() called with an empty tape")
    loss.grad = np.ones_like(loss.data)
    for rec in reversed(_tape.records):
        g = rec.output.grad
        if g is None:
            continue
        grads = rec.backward_fn(g)
        for t, gi in zip(rec.inputs, grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.data.shape:
                raise AssertionError(f"{rec.op}: gradient shape {gi.shape} != {t.data.shape}")
            t.grad = gi if t.grad is None else t.grad + gi
    _tape.clear()


def tensor(data, requires_grad: bool = False, dtype=None, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype, name=name)


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)
