# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution and pooling kernels.

Loop orders mirror ``_pykernels`` so every accumulation happens in the same
sequence and both backends agree bit for bit.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _out(Py_ssize_t n, Py_ssize_t k, Py_ssize_t s, Py_ssize_t p) nogil:
    return (n + 2 * p - k) // s + 1


def _im2col(real[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad, real[:, ::1] rows):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = _out(h, k, stride, pad), wo = _out(w, k, stride, pad)
    cdef Py_ssize_t b, oh, ow, ch, ki, kj, r, col, ih, iw, ih0, iw0
    cdef bint inside
    with nogil:
        for b in range(n):
            for oh in range(ho):
                ih0 = oh * stride - pad
                for ow in range(wo):
                    iw0 = ow * stride - pad
                    r = (b * ho + oh) * wo + ow
                    inside = ih0 >= 0 and iw0 >= 0 and ih0 + k <= h and iw0 + k <= w
                    col = 0
                    if inside:
                        for ch in range(c):
                            for ki in range(k):
                                for kj in range(k):
                                    rows[r, col + kj] = x[b, ch, ih0 + ki, iw0 + kj]
                                col = col + k
                        continue
                    for ch in range(c):
                        for ki in range(k):
                            ih = ih0 + ki
                            for kj in range(k):
                                iw = iw0 + kj
                                if 0 <= ih < h and 0 <= iw < w:
                                    rows[r, col] = x[b, ch, ih, iw]
                                else:
                                    rows[r, col] = 0
                                col = col + 1


def im2col(x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad, out=None):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho, wo = _out(h, k, stride, pad), _out(w, k, stride, pad)
    rows = np.empty((n * ho * wo, c * k * k), dtype=x.dtype) if out is None else out
    _im2col(x, k, stride, pad, rows)
    return rows


def _col2im(real[:, ::1] rows, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad, real[:, :, :, ::1] dx):
    # rows are read sequentially; each dx element therefore receives its
    # contributions in descending (ki, kj) order, as in the numpy fallback
    cdef Py_ssize_t n = dx.shape[0], c = dx.shape[1], h = dx.shape[2], w = dx.shape[3]
    cdef Py_ssize_t ho = _out(h, k, stride, pad), wo = _out(w, k, stride, pad)
    cdef Py_ssize_t b, oh, ow, ch, ki, kj, ih, iw, r, col
    with nogil:
        for b in range(n):
            for oh in range(ho):
                for ow in range(wo):
                    r = (b * ho + oh) * wo + ow
                    col = 0
                    for ch in range(c):
                        for ki in range(k):
                            ih = oh * stride + ki - pad
                            for kj in range(k):
                                iw = ow * stride + kj - pad
                                if 0 <= ih < h and 0 <= iw < w:
                                    dx[b, ch, ih, iw] += rows[r, col]
                                col = col + 1


def col2im(rows, shape, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    rows = np.ascontiguousarray(rows)
    dx = np.zeros(tuple(shape), dtype=rows.dtype)
    _col2im(rows, k, stride, pad, dx)
    return dx


def _maxpool_fwd(real[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride,
                 real[:, :, :, ::1] out, cnp.int64_t[:, :, :, ::1] arg):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t b, ch, oh, ow, ki, kj, ih, iw, best_i
    cdef real best, v
    with nogil:
        for b in range(n):
            for ch in range(c):
                for oh in range(ho):
                    for ow in range(wo):
                        ih = oh * stride
                        iw = ow * stride
                        best = x[b, ch, ih, iw]
                        best_i = ih * w + iw
                        for ki in range(k):
                            for kj in range(k):
                                v = x[b, ch, ih + ki, iw + kj]
                                if v > best:
                                    best = v
                                    best_i = (ih + ki) * w + iw + kj
                        out[b, ch, oh, ow] = best
                        arg[b, ch, oh, ow] = best_i


def maxpool_forward(x, Py_ssize_t k, Py_ssize_t stride):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho, wo = _out(h, k, stride, 0), _out(w, k, stride, 0)
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    arg = np.empty((n, c, ho, wo), dtype=np.int64)
    _maxpool_fwd(x, k, stride, out, arg)
    return out, arg


def _maxpool_bwd(real[:, :, :, ::1] dout, cnp.int64_t[:, :, :, ::1] arg, real[:, ::1] dx):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], ho = dout.shape[2], wo = dout.shape[3]
    cdef Py_ssize_t b, ch, oh, ow, p
    with nogil:
        for b in range(n):
            for ch in range(c):
                p = b * c + ch
                for oh in range(ho):
                    for ow in range(wo):
                        dx[p, arg[b, ch, oh, ow]] += dout[b, ch, oh, ow]


def maxpool_backward(dout, arg, shape):
    n, c, h, w = shape
    dout = np.ascontiguousarray(dout)
    dx = np.zeros((n * c, h * w), dtype=dout.dtype)
    _maxpool_bwd(dout, np.ascontiguousarray(arg, dtype=np.int64), dx)
    return dx.reshape(n, c, h, w)
