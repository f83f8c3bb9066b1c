"""Numpy implementations of the convolution and pooling kernels.

Used when the compiled extension is unavailable.  Accumulation order matches
``_ckernels.pyx`` so both backends produce bit-identical results.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def im2col(x, k, stride, pad, out=None):
    """``(N, C, H, W)`` -> ``(N*Ho*Wo, C*k*k)`` patch rows."""
    n, c, h, w = x.shape
    ho, wo = out_size(h, k, stride, pad), out_size(w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    win = win.transpose(0, 2, 3, 1, 4, 5)
    if out is None:
        return np.ascontiguousarray(win).reshape(n * ho * wo, c * k * k)
    np.copyto(out.reshape(n, ho, wo, c, k, k), win)
    return out


def col2im(rows, shape, k, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add patch rows back onto the image."""
    n, c, h, w = shape
    ho, wo = out_size(h, k, stride, pad), out_size(w, k, stride, pad)
    r = rows.reshape(n, ho, wo, c, k, k)
    dx = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=rows.dtype)
    # descending offsets: the order the compiled kernel accumulates in
    for ki in reversed(range(k)):
        for kj in reversed(range(k)):
            dx[:, :, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += \
                r[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    if pad:
        dx = dx[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(dx)


def maxpool_forward(x, k, stride):
    """Windowed max. Returns ``(out, argmax)`` with argmax a flat index into each H*W plane."""
    n, c, h, w = x.shape
    ho, wo = out_size(h, k, stride, 0), out_size(w, k, stride, 0)
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    win = win.reshape(n, c, ho, wo, k * k)
    a = win.argmax(axis=-1)
    out = np.take_along_axis(win, a[..., None], axis=-1)[..., 0]
    rows = np.arange(ho)[:, None] * stride + a // k
    cols = np.arange(wo)[None, :] * stride + a % k
    return np.ascontiguousarray(out), (rows * w + cols).astype(np.int64)


def maxpool_backward(dout, argmax, shape):
    n, c, h, w = shape
    dx = np.zeros((n * c, h * w), dtype=dout.dtype)
    flat = argmax.reshape(n * c, -1)
    plane = np.repeat(np.arange(n * c), flat.shape[1])
    np.add.at(dx, (plane, flat.reshape(-1)), dout.reshape(-1))
    return dx.reshape(n, c, h, w)
