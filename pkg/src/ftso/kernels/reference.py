"""Pure-NumPy convolution and pooling kernels.

This is the fallback backend: every function here has a drop-in compiled
twin in ``_ckernels``. The convolutions use strided window views plus BLAS
matmuls (im2col without the copy); the backward-by-input pass scatters
gradients back with k*k strided slice additions instead of ``np.add.at``.

All arrays are float64 and C-contiguous on entry (the dispatcher in
``ftso.kernels`` guarantees this).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def conv_out_size(size: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _window_view(xp: np.ndarray, kh: int, kw: int, stride: int, dilation: int,
                 h_out: int, w_out: int) -> np.ndarray:
    """Read-only [N, C, kh, kw, h_out, w_out] view into the padded input."""
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    shape = (n, c, kh, kw, h_out, w_out)
    strides = (sn, sc, sh * dilation, sw * dilation, sh * stride, sw * stride)
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides, writeable=False)


def conv2d_forward(x, w, bias, stride, padding, dilation, groups):
    n, c_in, h, w_in = x.shape
    c_out, c_g, kh, kw = w.shape
    h_out = conv_out_size(h, kh, stride, padding, dilation)
    w_out = conv_out_size(w_in, kw, stride, padding, dilation)
    if h_out < 1 or w_out < 1:
        raise ShapeError(
            f"conv2d: spatial extent {h}x{w_in} too small for kernel {kh}x{kw} "
            f"(stride={stride}, padding={padding}, dilation={dilation})"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    win = _window_view(xp, kh, kw, stride, dilation, h_out, w_out)
    og = c_out // groups
    k = c_g * kh * kw
    length = h_out * w_out
    if groups == 1:
        col = np.ascontiguousarray(win).reshape(n, k, length)
        y = np.matmul(w.reshape(c_out, k), col)  # [N, C_out, L] via broadcasting
    else:
        # [N, G, Cg, kh, kw, Ho, Wo] -> per-group batched matmul
        wing = np.ascontiguousarray(win).reshape(n, groups, c_g, kh, kw, h_out, w_out)
        col = wing.reshape(n, groups, k, length)
        wg = w.reshape(groups, og, k)
        y = np.einsum("gok,ngkl->ngol", wg, col, optimize=True).reshape(n, c_out, length)
    y = y.reshape(n, c_out, h_out, w_out)
    if bias is not None:
        y += bias[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_backward(x, w, gy, stride, padding, dilation, groups,
                    need_gx, need_gw, need_gb):
    n, c_in, h, w_in = x.shape
    c_out, c_g, kh, kw = w.shape
    _, _, h_out, w_out = gy.shape
    og = c_out // groups
    k = c_g * kh * kw
    length = h_out * w_out

    gb = gy.sum(axis=(0, 2, 3)) if need_gb else None

    gx = gw = None
    gyg = gy.reshape(n, groups, og, length)
    if need_gw:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        win = _window_view(xp, kh, kw, stride, dilation, h_out, w_out)
        col = np.ascontiguousarray(win).reshape(n, groups, k, length)
        gw = np.einsum("ngol,ngkl->gok", gyg, col, optimize=True)
        gw = gw.reshape(c_out, c_g, kh, kw)
    if need_gx:
        wg = w.reshape(groups, og, k)
        gcol = np.einsum("gok,ngol->ngkl", wg, gyg, optimize=True)
        gcol = gcol.reshape(n, c_in, kh, kw, h_out, w_out)
        hp, wp = h + 2 * padding, w_in + 2 * padding
        gxp = np.zeros((n, c_in, hp, wp), dtype=x.dtype)
        h_span = (h_out - 1) * stride + 1
        w_span = (w_out - 1) * stride + 1
        for ki in range(kh):
            for kj in range(kw):
                hi = ki * dilation
                wi = kj * dilation
                gxp[:, :, hi:hi + h_span:stride, wi:wi + w_span:stride] += gcol[:, :, ki, kj]
        gx = gxp[:, :, padding:padding + h, padding:padding + w_in]
        gx = np.ascontiguousarray(gx)
    return gx, gw, gb


def max_pool2d_forward(x, k, stride, padding):
    n, c, h, w = x.shape
    h_out = conv_out_size(h, k, stride, padding, 1)
    w_out = conv_out_size(w, k, stride, padding, 1)
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"max_pool2d: input {h}x{w} too small for window {k} (padding={padding})")
    if padding:
        xp = np.full((n, c, h + 2 * padding, w + 2 * padding), -np.inf, dtype=x.dtype)
        xp[:, :, padding:padding + h, padding:padding + w] = x
    else:
        xp = x
    win = _window_view(xp, k, k, stride, 1, h_out, w_out)
    flat = np.ascontiguousarray(win).reshape(n, c, k * k, h_out, w_out)
    idx = flat.argmax(axis=2)  # first max wins on ties
    y = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]
    return np.ascontiguousarray(y), idx.astype(np.int64)


def max_pool2d_backward(x_shape, idx, gy, k, stride, padding):
    n, c, h, w = x_shape
    _, _, h_out, w_out = gy.shape
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gy.dtype)
    h_span = (h_out - 1) * stride + 1
    w_span = (w_out - 1) * stride + 1
    for s in range(k * k):
        mask = idx == s
        if not mask.any():
            continue
        ki, kj = divmod(s, k)
        gxp[:, :, ki:ki + h_span:stride, kj:kj + w_span:stride] += np.where(mask, gy, 0.0)
    gx = gxp[:, :, padding:padding + h, padding:padding + w]
    return np.ascontiguousarray(gx)


def _avg_counts(h, w, k, stride, padding, h_out, w_out):
    """Number of in-bounds cells per pooling window (count_include_pad=False)."""
    ones = np.zeros((1, 1, h + 2 * padding, w + 2 * padding))
    ones[:, :, padding:padding + h, padding:padding + w] = 1.0
    win = _window_view(ones, k, k, stride, 1, h_out, w_out)
    return np.ascontiguousarray(win).reshape(k * k, h_out, w_out).sum(axis=0)


def avg_pool2d_forward(x, k, stride, padding):
    n, c, h, w = x.shape
    h_out = conv_out_size(h, k, stride, padding, 1)
    w_out = conv_out_size(w, k, stride, padding, 1)
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"avg_pool2d: input {h}x{w} too small for window {k} (padding={padding})")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    win = _window_view(xp, k, k, stride, 1, h_out, w_out)
    totals = np.ascontiguousarray(win).reshape(n, c, k * k, h_out, w_out).sum(axis=2)
    counts = _avg_counts(h, w, k, stride, padding, h_out, w_out)
    return np.ascontiguousarray(totals / counts)


def avg_pool2d_backward(x_shape, gy, k, stride, padding):
    n, c, h, w = x_shape
    _, _, h_out, w_out = gy.shape
    counts = _avg_counts(h, w, k, stride, padding, h_out, w_out)
    piece = gy / counts
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gy.dtype)
    h_span = (h_out - 1) * stride + 1
    w_span = (w_out - 1) * stride + 1
    for ki in range(k):
        for kj in range(k):
            gxp[:, :, ki:ki + h_span:stride, kj:kj + w_span:stride] += piece
    gx = gxp[:, :, padding:padding + h, padding:padding + w]
    return np.ascontiguousarray(gx)
