# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution and pooling kernels.

Single-threaded C loops with the exact call signatures of
``ftso.kernels.reference``; the dispatcher in ``ftso.kernels`` picks one of
the two at import. Inputs are float64 and C-contiguous (the caller
guarantees this); padding is handled by bounds checks instead of copies.
"""

import numpy as np

from libc.math cimport INFINITY
from libc.stdint cimport int64_t

from ftso.errors import ShapeError


cdef inline Py_ssize_t _out_size(Py_ssize_t size, Py_ssize_t k, Py_ssize_t stride,
                                 Py_ssize_t padding, Py_ssize_t dilation) noexcept nogil:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def conv_out_size(size, k, stride, padding, dilation):
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, bias,
                   Py_ssize_t stride, Py_ssize_t padding, Py_ssize_t dilation,
                   Py_ssize_t groups):
    cdef Py_ssize_t n = x.shape[0], c_in = x.shape[1], h = x.shape[2], w_in = x.shape[3]
    cdef Py_ssize_t c_out = w.shape[0], c_g = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t h_out = _out_size(h, kh, stride, padding, dilation)
    cdef Py_ssize_t w_out = _out_size(w_in, kw, stride, padding, dilation)
    if h_out < 1 or w_out < 1:
        raise ShapeError(
            f"conv2d: spatial extent {h}x{w_in} too small for kernel {kh}x{kw} "
            f"(stride={stride}, padding={padding}, dilation={dilation})"
        )

    out = np.empty((n, c_out, h_out, w_out), dtype=np.float64)
    cdef double[:, :, :, ::1] y = out
    cdef bint has_bias = bias is not None
    cdef double[::1] b
    if has_bias:
        b = np.ascontiguousarray(bias, dtype=np.float64)

    cdef Py_ssize_t og = c_out // groups
    cdef Py_ssize_t nb, oc, oh, ow, ic, ki, kj, ih, iw, ic0
    cdef double acc
    with nogil:
        for nb in range(n):
            for oc in range(c_out):
                ic0 = (oc // og) * c_g
                for oh in range(h_out):
                    for ow in range(w_out):
                        acc = b[oc] if has_bias else 0.0
                        for ki in range(kh):
                            ih = oh * stride - padding + ki * dilation
                            if ih < 0 or ih >= h:
                                continue
                            for kj in range(kw):
                                iw = ow * stride - padding + kj * dilation
                                if iw < 0 or iw >= w_in:
                                    continue
                                for ic in range(c_g):
                                    acc += x[nb, ic0 + ic, ih, iw] * w[oc, ic, ki, kj]
                        y[nb, oc, oh, ow] = acc
    return out


def conv2d_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w,
                    double[:, :, :, ::1] gy, Py_ssize_t stride, Py_ssize_t padding,
                    Py_ssize_t dilation, Py_ssize_t groups,
                    bint need_gx, bint need_gw, bint need_gb):
    cdef Py_ssize_t n = x.shape[0], c_in = x.shape[1], h = x.shape[2], w_in = x.shape[3]
    cdef Py_ssize_t c_out = w.shape[0], c_g = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t h_out = gy.shape[2], w_out = gy.shape[3]
    cdef Py_ssize_t og = c_out // groups

    gx_arr = np.zeros((n, c_in, h, w_in), dtype=np.float64) if need_gx else None
    gw_arr = np.zeros((c_out, c_g, kh, kw), dtype=np.float64) if need_gw else None
    gb_arr = np.zeros(c_out, dtype=np.float64) if need_gb else None
    cdef double[:, :, :, ::1] gx = gx_arr if need_gx else x
    cdef double[:, :, :, ::1] gw = gw_arr if need_gw else w
    cdef double[::1] gb
    if need_gb:
        gb = gb_arr

    cdef Py_ssize_t nb, oc, oh, ow, ic, ki, kj, ih, iw, ic0
    cdef double gyv
    with nogil:
        for nb in range(n):
            for oc in range(c_out):
                ic0 = (oc // og) * c_g
                for oh in range(h_out):
                    for ow in range(w_out):
                        gyv = gy[nb, oc, oh, ow]
                        if need_gb:
                            gb[oc] += gyv
                        if not (need_gx or need_gw):
                            continue
                        for ki in range(kh):
                            ih = oh * stride - padding + ki * dilation
                            if ih < 0 or ih >= h:
                                continue
                            for kj in range(kw):
                                iw = ow * stride - padding + kj * dilation
                                if iw < 0 or iw >= w_in:
                                    continue
                                for ic in range(c_g):
                                    if need_gw:
                                        gw[oc, ic, ki, kj] += gyv * x[nb, ic0 + ic, ih, iw]
                                    if need_gx:
                                        gx[nb, ic0 + ic, ih, iw] += gyv * w[oc, ic, ki, kj]
    return gx_arr, gw_arr, gb_arr


def max_pool2d_forward(double[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride,
                       Py_ssize_t padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t h_out = _out_size(h, k, stride, padding, 1)
    cdef Py_ssize_t w_out = _out_size(w, k, stride, padding, 1)
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"max_pool2d: input {h}x{w} too small for window {k} (padding={padding})")

    y_arr = np.empty((n, c, h_out, w_out), dtype=np.float64)
    idx_arr = np.empty((n, c, h_out, w_out), dtype=np.int64)
    cdef double[:, :, :, ::1] y = y_arr
    cdef int64_t[:, :, :, ::1] idx = idx_arr

    cdef Py_ssize_t nb, ch, oh, ow, ki, kj, ih, iw
    cdef double best, v
    cdef int64_t bi
    with nogil:
        for nb in range(n):
            for ch in range(c):
                for oh in range(h_out):
                    for ow in range(w_out):
                        best = -INFINITY
                        bi = 0
                        for ki in range(k):
                            ih = oh * stride - padding + ki
                            if ih < 0 or ih >= h:
                                continue
                            for kj in range(k):
                                iw = ow * stride - padding + kj
                                if iw < 0 or iw >= w:
                                    continue
                                v = x[nb, ch, ih, iw]
                                if v > best:  # first max wins on ties
                                    best = v
                                    bi = ki * k + kj
                        y[nb, ch, oh, ow] = best
                        idx[nb, ch, oh, ow] = bi
    return y_arr, idx_arr


def max_pool2d_backward(x_shape, int64_t[:, :, :, ::1] idx, double[:, :, :, ::1] gy,
                        Py_ssize_t k, Py_ssize_t stride, Py_ssize_t padding):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t h_out = gy.shape[2], w_out = gy.shape[3]
    gx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr

    cdef Py_ssize_t nb, ch, oh, ow, ih, iw
    cdef int64_t s
    with nogil:
        for nb in range(n):
            for ch in range(c):
                for oh in range(h_out):
                    for ow in range(w_out):
                        s = idx[nb, ch, oh, ow]
                        ih = oh * stride - padding + s // k
                        iw = ow * stride - padding + s % k
                        if 0 <= ih < h and 0 <= iw < w:
                            gx[nb, ch, ih, iw] += gy[nb, ch, oh, ow]
    return gx_arr


cdef _pool_counts(Py_ssize_t h, Py_ssize_t w, Py_ssize_t k, Py_ssize_t stride,
                  Py_ssize_t padding, Py_ssize_t h_out, Py_ssize_t w_out):
    """In-bounds cells per pooling window (count_include_pad=False)."""
    counts_arr = np.empty((h_out, w_out), dtype=np.int64)
    cdef int64_t[:, ::1] counts = counts_arr
    cdef Py_ssize_t oh, ow, ki, kj, ih, iw
    cdef int64_t cnt
    for oh in range(h_out):
        for ow in range(w_out):
            cnt = 0
            for ki in range(k):
                ih = oh * stride - padding + ki
                if ih < 0 or ih >= h:
                    continue
                for kj in range(k):
                    iw = ow * stride - padding + kj
                    if 0 <= iw < w:
                        cnt += 1
            counts[oh, ow] = cnt
    return counts_arr


def avg_pool2d_forward(double[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride,
                       Py_ssize_t padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t h_out = _out_size(h, k, stride, padding, 1)
    cdef Py_ssize_t w_out = _out_size(w, k, stride, padding, 1)
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"avg_pool2d: input {h}x{w} too small for window {k} (padding={padding})")

    cdef int64_t[:, ::1] counts = _pool_counts(h, w, k, stride, padding, h_out, w_out)
    y_arr = np.empty((n, c, h_out, w_out), dtype=np.float64)
    cdef double[:, :, :, ::1] y = y_arr

    cdef Py_ssize_t nb, ch, oh, ow, ki, kj, ih, iw
    cdef double acc
    with nogil:
        for nb in range(n):
            for ch in range(c):
                for oh in range(h_out):
                    for ow in range(w_out):
                        acc = 0.0
                        for ki in range(k):
                            ih = oh * stride - padding + ki
                            if ih < 0 or ih >= h:
                                continue
                            for kj in range(k):
                                iw = ow * stride - padding + kj
                                if 0 <= iw < w:
                                    acc += x[nb, ch, ih, iw]
                        y[nb, ch, oh, ow] = acc / counts[oh, ow]
    return y_arr


def avg_pool2d_backward(x_shape, double[:, :, :, ::1] gy, Py_ssize_t k,
                        Py_ssize_t stride, Py_ssize_t padding):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t h_out = gy.shape[2], w_out = gy.shape[3]
    cdef int64_t[:, ::1] counts = _pool_counts(h, w, k, stride, padding, h_out, w_out)
    gx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr

    cdef Py_ssize_t nb, ch, oh, ow, ki, kj, ih, iw
    cdef double v
    with nogil:
        for nb in range(n):
            for ch in range(c):
                for oh in range(h_out):
                    for ow in range(w_out):
                        v = gy[nb, ch, oh, ow] / counts[oh, ow]
                        for ki in range(k):
                            ih = oh * stride - padding + ki
                            if ih < 0 or ih >= h:
                                continue
                            for kj in range(k):
                                iw = ow * stride - padding + kj
                                if 0 <= iw < w:
                                    gx[nb, ch, ih, iw] += v
    return gx_arr
