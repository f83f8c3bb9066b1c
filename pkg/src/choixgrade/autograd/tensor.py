"""Tensor container and the tape that records operations for reverse mode.

Usage::

    with Tape() as tape:
        loss = some_ops(x, w)
    backward(loss, tape)      # fills w.grad (and x.grad if it requires grad)

Operations only record while a tape is active and at least one input requires
a gradient.  A tape can be consumed once; it drops its records afterwards.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from ..errors import ChoixgradeError, DoubleBackward, NonScalarLoss

DEFAULT_DTYPE = np.float32


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=DEFAULT_DTYPE):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @classmethod
    def wrap(cls, array: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = array
        t.requires_grad = False
        t.grad = None
        t._tape = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operator sugar; the implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, other)
        return ops.mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        if not np.isscalar(other):
            raise TypeError("only division by a scalar is supported")
        return ops.scale(self, 1.0 / other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def _as_tensor(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_local = threading.local()


def _stack() -> list:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


class Tape:
    """Ordered list of executed operations, confined to the creating thread."""

    def __init__(self):
        self.records: list[Record] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.records)


def active_tape() -> Tape | None:
    st = _stack()
    return st[-1] if st else None


def record(out: Tensor, inputs: tuple[Tensor, ...], fn: BackwardFn) -> Tensor:
    """Attach ``out`` to the active tape when any input needs a gradient."""
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.records.append(Record(out, inputs, fn))
    return out


class no_record:
    """Suspend recording, e.g. for evaluation inside a training step."""

    def __enter__(self):
        self._saved = list(_stack())
        _stack().clear()

    def __exit__(self, *exc):
        _stack().extend(self._saved)


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it.

    Leaves are gradient-requiring tensors not produced on ``tape``
    (parameters, inputs).  Gradients add onto existing ``.grad`` buffers so
    several tapes can be reduced by summation; call ``zero_grad`` between steps.
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss must hold one element, got shape {loss.shape}")
    tape = tape if tape is not None else loss._tape
    if tape is None:
        raise ChoixgradeError("loss has no recorded history; run the forward pass inside a Tape")
    if tape.consumed:
        raise DoubleBackward("this tape was already used for a backward pass")
    tape.consumed = True

    produced = {id(r.out) for r in tape.records}
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    records, tape.records = tape.records, []
    for rec in reversed(records):
        g = pending.pop(id(rec.out), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in produced:
                prev = pending.get(key)
                pending[key] = gi if prev is None else prev + gi
            elif inp.grad is None:
                inp.grad = np.array(gi, dtype=inp.data.dtype, copy=True)
            else:
                inp.grad += gi
        rec.out._tape = None
