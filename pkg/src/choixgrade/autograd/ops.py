"""Differentiable operations on :class:`Tensor`.

Every function computes its forward result with numpy (or the compiled
kernels) and, when recording, registers a closure mapping the upstream
gradient to one gradient per input.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np

from ..errors import BatchTooSmall, NonIntegralOutputSize, ShapeMismatch
from . import kernels
from .tensor import Tensor, record

# -- kink bookkeeping for gradient checks -------------------------------------

_kink_log: list | None = None


@contextmanager
def record_kinks():
    """Collect relu sign patterns and maxpool argmax maps from forward passes.

    Finite-difference checks compare these between perturbed evaluations to
    spot perturbations that cross a non-differentiable point.
    """
    global _kink_log
    saved, _kink_log = _kink_log, []
    try:
        yield _kink_log
    finally:
        _kink_log = saved


_scratch_local = threading.local()


def _scratch(shape, dtype) -> np.ndarray:
    """Per-thread reusable buffer; avoids re-faulting large im2col allocations.

    One flat buffer per dtype, grown to the largest request seen, so memory
    stays bounded however many batch shapes pass through.  The view is only
    valid until the next call on the same thread.
    """
    cache = getattr(_scratch_local, "cache", None)
    if cache is None:
        cache = _scratch_local.cache = {}
    key = np.dtype(dtype).str
    need = math.prod(shape)
    buf = cache.get(key)
    if buf is None or buf.size < need:
        cache[key] = None  # release the old buffer before allocating the new one
        buf = cache[key] = np.empty(need, dtype=dtype)
    return buf[:need].reshape(shape)


# -- elementwise --------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        shape = None
    if shape != a.shape:
        raise ShapeMismatch(f"{op}: cannot broadcast {b.shape} onto {a.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = Tensor.wrap(a.data + b.data)
    return record(out, (a, b), lambda g: (g, _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out = Tensor.wrap(a.data - b.data)
    return record(out, (a, b), lambda g: (g, -_unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    out = Tensor.wrap(a.data * b.data)
    return record(out, (a, b), lambda g: (g * b.data, _unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    out = Tensor.wrap(a.data * c)
    return record(out, (a,), lambda g: (g * c,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return record(Tensor.wrap(y), (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    return record(Tensor.wrap(np.log(a.data)), (a,), lambda g: (g / a.data,))


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at 0 is taken as 0."""
    mask = x.data > 0
    if _kink_log is not None:
        _kink_log.append(mask.copy())
    out = Tensor.wrap(np.where(mask, x.data, x.data.dtype.type(0)))
    return record(out, (x,), lambda g: (g * mask,))


# -- reductions and reshapes --------------------------------------------------

def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = Tensor.wrap(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)))

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return record(out, (a,), bwd)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis, keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor.wrap(a.data.reshape(shape))
    return record(out, (a,), lambda g: (g.reshape(a.shape),))


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.shape[0], -1))


# -- linear algebra -----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    out = Tensor.wrap(a.data @ b.data)

    def bwd(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)
    return record(out, (a, b), bwd)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``(N, C, H, W)`` with ``(F, C, k, k)`` kernels, zero padded.

    Output extents are ``(H + 2*pad - k) // stride + 1``; rows or columns a
    stride cannot reach are dropped.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 4-D input and kernel, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    f, cw, k, k2 = w.shape
    if cw != c or k != k2:
        raise ShapeMismatch(f"conv2d: kernel {w.shape} does not fit input {x.shape}")
    if stride < 1 or pad < 0:
        raise ShapeMismatch(f"conv2d: bad stride {stride} / pad {pad}")
    if h + 2 * pad < k or wd + 2 * pad < k:
        raise NonIntegralOutputSize(f"conv2d: {k}x{k} kernel does not fit {h}x{wd} input with pad {pad}")
    ho, wo = kernels.out_size(h, k, stride, pad), kernels.out_size(wd, k, stride, pad)
    xd = np.ascontiguousarray(x.data)
    w2 = w.data.reshape(f, -1)
    rows_shape = (n * ho * wo, c * k * k)
    rows = kernels.im2col(xd, k, stride, pad, _scratch(rows_shape, xd.dtype))
    out = (rows @ w2.T).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    res = Tensor.wrap(np.ascontiguousarray(out))

    def bwd(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, f)
        dw = dx = None
        if w.requires_grad:
            # patch rows are rebuilt rather than kept: they dominate memory at batch 128
            rows = kernels.im2col(xd, k, stride, pad, _scratch(rows_shape, xd.dtype))
            dw = (g2.T @ rows).reshape(w.shape)
        if x.requires_grad:
            dx = kernels.col2im(g2 @ w2, x.shape, k, stride, pad)
        return dx, dw
    return record(res, (x, w), bwd)


# -- pooling ------------------------------------------------------------------

def maxpool2d(x: Tensor, k: int, stride: int | None = None) -> Tensor:
    """Windowed maximum; ties send the gradient to the first row-major maximum."""
    stride = k if stride is None else stride
    if x.ndim != 4:
        raise ShapeMismatch(f"maxpool2d expects 4-D input, got {x.shape}")
    h, w = x.shape[2:]
    if h < k or w < k or (h - k) % stride or (w - k) % stride:
        raise NonIntegralOutputSize(f"maxpool2d: window {k}/stride {stride} does not tile {h}x{w}")
    out, arg = kernels.maxpool_forward(np.ascontiguousarray(x.data), k, stride)
    if _kink_log is not None:
        _kink_log.append(arg.copy())
    return record(Tensor.wrap(out), (x,), lambda g: (kernels.maxpool_backward(g, arg, x.shape),))


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeMismatch(f"global_avg_pool expects 4-D input, got {x.shape}")
    hw = x.shape[2] * x.shape[3]
    out = Tensor.wrap(x.data.mean(axis=(2, 3)))

    def bwd(g):
        return (np.broadcast_to((g / g.dtype.type(hw))[:, :, None, None], x.shape).copy(),)
    return record(out, (x,), bwd)


# -- normalisation ------------------------------------------------------------

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalisation of ``(N, C)`` or ``(N, C, H, W)`` input.

    Training mode uses the batch statistics and updates the running buffers in
    place (the running variance uses the unbiased batch estimate).
    """
    if x.ndim not in (2, 4):
        raise ShapeMismatch(f"batch_norm expects 2-D or 4-D input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"batch_norm: {c} channels but gamma {gamma.shape}, beta {beta.shape}")
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, c) + (1,) * (x.ndim - 2)
    dt = x.data.dtype.type
    xd = x.data
    if training:
        if x.shape[0] < 2:
            raise BatchTooSmall(f"training-mode batch norm needs batch >= 2, got {x.shape[0]}")
        m = xd.size // c
        # sum * (1/m) rather than mean(): same result, far less per-call overhead
        mu = xd.sum(axis=axes) * dt(1 / m)
        xc = xd - mu.reshape(bshape)
        var = np.square(xc).sum(axis=axes) * dt(1 / m)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * (m / (m - 1))
    else:
        xc = xd - running_mean.astype(xd.dtype).reshape(bshape)
        var = running_var.astype(xd.dtype)
    invstd = (dt(1) / np.sqrt(var + dt(eps))).astype(xd.dtype)
    xhat = xc * invstd.reshape(bshape)
    out = Tensor.wrap(xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape))

    def bwd(g):
        dgamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        dbeta = g.sum(axis=axes) if beta.requires_grad else None
        dx = None
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(bshape)
            if training:
                m = xd.size // c
                s1 = dxhat.sum(axis=axes).reshape(bshape)
                s2 = (dxhat * xhat).sum(axis=axes).reshape(bshape)
                dx = (dxhat - s1 / dt(m) - xhat * (s2 / dt(m))) * invstd.reshape(bshape)
            else:
                dx = dxhat * invstd.reshape(bshape)
        return dx, dgamma, dbeta
    return record(out, (x, gamma, beta), bwd)
