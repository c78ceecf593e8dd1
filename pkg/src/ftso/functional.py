"""Neural-network primitives on top of the kernel backends.

Every function takes and returns :class:`~ftso.tensor.Tensor` and registers
a single backward record, so the tape stays shallow even for structured
operations (convolution, batch norm, channel routing, weighted merges).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .errors import ShapeError
from .tensor import (
    Tensor,
    count_flops,
    margin_hooks_active,
    needs_of,
    record,
    report_margin,
)

__all__ = [
    "conv2d",
    "max_pool2d",
    "avg_pool2d",
    "batch_norm",
    "softmax",
    "log_softmax",
    "cross_entropy",
    "weighted_sum",
    "concat_channels",
    "take_channels",
    "place_channels",
    "take_slice",
    "concat_vector",
    "spatial_crop",
    "global_avg_pool",
    "linear",
]


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, *, stride: int = 1,
           padding: int = 0, dilation: int = 1, groups: int = 1) -> Tensor:
    """2-D convolution, NCHW layout, weight [C_out, C_in/groups, kH, kW]."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {w.shape}")
    n, c_in, _, _ = x.shape
    c_out, c_g, kh, kw = w.shape
    if c_in % groups or c_out % groups or c_g != c_in // groups:
        raise ShapeError(
            f"conv2d channel/group mismatch: input {c_in}, weight {w.shape}, groups {groups}"
        )
    xd, wd = _c(x.data), _c(w.data)
    bd = _c(bias.data) if bias is not None else None
    out = Tensor(kernels.conv2d_forward(xd, wd, bd, stride, padding, dilation, groups))
    count_flops("conv", kh * kw * c_g * out.data.size)
    inputs = (x, w) if bias is None else (x, w, bias)
    needs = needs_of(inputs)

    def backward(gy: np.ndarray):
        gx, gw, gb = kernels.conv2d_backward(
            xd, wd, _c(gy), stride, padding, dilation, groups,
            needs[0], needs[1], bias is not None and needs[2])
        return (gx, gw) if bias is None else (gx, gw, gb)

    return record(out, inputs, backward)


def max_pool2d(x: Tensor, kernel_size: int, *, stride: int | None = None,
               padding: int = 0) -> Tensor:
    """Max pooling; on ties the first window position (row-major) wins."""
    if x.ndim != 4:
        raise ShapeError(f"max_pool2d expects a 4-D input, got {x.shape}")
    stride = kernel_size if stride is None else stride
    xd = _c(x.data)
    yd, idx = kernels.max_pool2d_forward(xd, kernel_size, stride, padding)
    if margin_hooks_active():
        report_margin("max_pool2d", _max_pool_margin(xd, kernel_size, stride, padding, yd))
    out = Tensor(yd)
    count_flops("pool", kernel_size * kernel_size * out.data.size)
    shape = x.shape

    def backward(gy: np.ndarray):
        return (kernels.max_pool2d_backward(shape, idx, _c(gy), kernel_size, stride, padding),)

    return record(out, (x,), backward)


def _max_pool_margin(xd, k, stride, padding, yd) -> float:
    """Smallest gap between a window's max and its runner-up."""
    n, c, h, w = xd.shape
    _, _, h_out, w_out = yd.shape
    xp = np.full((n, c, h + 2 * padding, w + 2 * padding), -np.inf)
    xp[:, :, padding:padding + h, padding:padding + w] = xd
    sn, sc, sh, sw = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (n, c, k, k, h_out, w_out), (sn, sc, sh, sw, sh * stride, sw * stride))
    flat = np.sort(win.reshape(n, c, k * k, h_out, w_out), axis=2)
    gap = flat[:, :, -1] - flat[:, :, -2]
    return float(np.min(gap[np.isfinite(gap)])) if np.isfinite(gap).any() else np.inf


def avg_pool2d(x: Tensor, kernel_size: int, *, stride: int | None = None,
               padding: int = 0) -> Tensor:
    """Average pooling; padded cells are excluded from the denominator."""
    if x.ndim != 4:
        raise ShapeError(f"avg_pool2d expects a 4-D input, got {x.shape}")
    stride = kernel_size if stride is None else stride
    out = Tensor(kernels.avg_pool2d_forward(_c(x.data), kernel_size, stride, padding))
    count_flops("pool", kernel_size * kernel_size * out.data.size)
    shape = x.shape

    def backward(gy: np.ndarray):
        return (kernels.avg_pool2d_backward(shape, _c(gy), kernel_size, stride, padding),)

    return record(out, (x,), backward)


def batch_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, *,
               running: dict | None = None, training: bool = True,
               momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalisation over (N, H, W) per channel.

    In training mode the batch statistics normalise the input and, when a
    ``running`` dict with ``mean``/``var`` arrays is supplied, its entries
    are updated in place (unbiased variance, exponential moving average).
    In eval mode the running statistics are used instead.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm expects a 4-D input, got {x.shape}")
    xd = x.data
    axes = (0, 2, 3)
    count = xd.shape[0] * xd.shape[2] * xd.shape[3]
    if training:
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        if running is not None:
            unbiased = var * count / max(count - 1, 1)
            running["mean"] += momentum * (mean - running["mean"])
            running["var"] += momentum * (unbiased - running["var"])
    else:
        if running is None:
            raise ShapeError("batch_norm in eval mode needs running statistics")
        mean, var = running["mean"], running["var"]
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean[None, :, None, None]) * inv_std[None, :, None, None]
    yd = xhat
    if gamma is not None:
        yd = yd * gamma.data[None, :, None, None]
    if beta is not None:
        yd = yd + beta.data[None, :, None, None]
    out = Tensor(yd)

    inputs: list[Tensor] = [x]
    if gamma is not None:
        inputs.append(gamma)
    if beta is not None:
        inputs.append(beta)
    needs = needs_of(inputs)
    gdata = gamma.data if gamma is not None else None

    def backward(gy: np.ndarray):
        grads: list[np.ndarray | None] = []
        gyh = gy * gdata[None, :, None, None] if gdata is not None else gy
        if needs[0]:
            if training:
                sum_gy = gyh.sum(axis=axes)
                sum_gy_xhat = (gyh * xhat).sum(axis=axes)
                gx = (gyh - (sum_gy[None, :, None, None]
                             + xhat * sum_gy_xhat[None, :, None, None]) / count)
                gx = gx * inv_std[None, :, None, None]
            else:
                gx = gyh * inv_std[None, :, None, None]
            grads.append(gx)
        else:
            grads.append(None)
        pos = 1
        if gamma is not None:
            grads.append((gy * xhat).sum(axis=axes) if needs[pos] else None)
            pos += 1
        if beta is not None:
            grads.append(gy.sum(axis=axes) if needs[pos] else None)
        return grads

    return record(out, inputs, backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    yd = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(yd)

    def backward(gy: np.ndarray):
        dot = (gy * yd).sum(axis=axis, keepdims=True)
        return ((gy - dot) * yd,)

    return record(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    yd = shifted - lse
    out = Tensor(yd)
    soft = np.exp(yd)

    def backward(gy: np.ndarray):
        return (gy - soft * gy.sum(axis=axis, keepdims=True),)

    return record(out, (x,), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits``."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects 2-D logits, got {logits.shape}")
    labels = np.asarray(labels)
    n = logits.shape[0]
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch size {n}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    out = Tensor(-logp[np.arange(n), labels].mean())
    soft = np.exp(logp)

    def backward(gy: np.ndarray):
        g = soft.copy()
        g[np.arange(n), labels] -= 1.0
        return (g * (float(gy) / n),)

    return record(out, (logits,), backward)


def weighted_sum(weights: Tensor, tensors: Sequence[Tensor]) -> Tensor:
    """sum_i weights[i] * tensors[i] for same-shaped tensors, as one record."""
    if weights.ndim != 1 or weights.size != len(tensors):
        raise ShapeError(
            f"weighted_sum needs one weight per tensor, got {weights.shape} "
            f"for {len(tensors)} tensors")
    if not tensors:
        raise ShapeError("weighted_sum of zero tensors")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise ShapeError(f"weighted_sum shape mismatch: {t.shape} vs {shape}")
    wd = weights.data
    stack = [t.data for t in tensors]
    yd = wd[0] * stack[0]
    for i in range(1, len(stack)):
        yd += wd[i] * stack[i]
    out = Tensor(yd)
    count_flops("merge", len(stack) * out.data.size)
    inputs = (weights, *tensors)
    needs = needs_of(inputs)

    def backward(gy: np.ndarray):
        gw = None
        if needs[0]:
            gw = np.array([float((gy * xd).sum()) for xd in stack])
        return (gw, *[gy * wd[i] if needs[1 + i] else None for i in range(len(stack))])

    return record(out, inputs, backward)


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate NCHW tensors along the channel axis."""
    if not tensors:
        raise ShapeError("concat_channels of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1))
    widths = [t.shape[1] for t in tensors]
    needs = needs_of(tensors)

    def backward(gy: np.ndarray):
        grads = []
        start = 0
        for width, need in zip(widths, needs):
            grads.append(gy[:, start:start + width] if need else None)
            start += width
        return grads

    return record(out, tuple(tensors), backward)


def take_channels(x: Tensor, index: np.ndarray) -> Tensor:
    """Select channels ``index`` (any order, no duplicates)."""
    index = np.asarray(index, dtype=np.intp)
    out = Tensor(np.ascontiguousarray(x.data[:, index]))
    shape = x.shape

    def backward(gy: np.ndarray):
        gx = np.zeros(shape)
        gx[:, index] = gy
        return (gx,)

    return record(out, (x,), backward)


def place_channels(parts: Sequence[Tensor], indices: Sequence[np.ndarray],
                   num_channels: int) -> Tensor:
    """Scatter channel groups back into a tensor of ``num_channels`` channels.

    The index arrays must partition ``range(num_channels)``; each part
    supplies the channels at its index positions. Inverse of splitting a
    tensor with :func:`take_channels` per group.
    """
    if len(parts) != len(indices) or not parts:
        raise ShapeError("place_channels needs one index array per part")
    idx_arrays = [np.asarray(ix, dtype=np.intp) for ix in indices]
    total = np.concatenate(idx_arrays)
    if len(np.unique(total)) != num_channels or total.size != num_channels:
        raise ShapeError("place_channels indices must partition the channel range")
    n, _, h, w = parts[0].shape
    yd = np.empty((n, num_channels, h, w))
    for part, ix in zip(parts, idx_arrays):
        if part.shape != (n, len(ix), h, w):
            raise ShapeError(f"place_channels part shape {part.shape} does not match "
                             f"{len(ix)} channels of {(n, h, w)}")
        yd[:, ix] = part.data
    out = Tensor(yd)
    needs = needs_of(parts)

    def backward(gy: np.ndarray):
        return [gy[:, ix] if need else None for ix, need in zip(idx_arrays, needs)]

    return record(out, tuple(parts), backward)


def take_slice(x: Tensor, indices) -> Tensor:
    """Gather entries of a 1-D tensor (duplicates allowed)."""
    if x.ndim != 1:
        raise ShapeError(f"take_slice expects a 1-D tensor, got {x.shape}")
    indices = np.asarray(indices, dtype=np.intp)
    out = Tensor(x.data[indices])
    size = x.size

    def backward(gy: np.ndarray):
        gx = np.zeros(size)
        np.add.at(gx, indices, gy)
        return (gx,)

    return record(out, (x,), backward)


def concat_vector(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    if not tensors:
        raise ShapeError("concat_vector of zero tensors")
    for t in tensors:
        if t.ndim != 1:
            raise ShapeError(f"concat_vector expects 1-D tensors, got {t.shape}")
    out = Tensor(np.concatenate([t.data for t in tensors]))
    sizes = [t.size for t in tensors]
    needs = needs_of(tensors)

    def backward(gy: np.ndarray):
        grads = []
        start = 0
        for size, need in zip(sizes, needs):
            grads.append(gy[start:start + size] if need else None)
            start += size
        return grads

    return record(out, tuple(tensors), backward)


def spatial_crop(x: Tensor, top: int, left: int) -> Tensor:
    """Drop the first ``top`` rows and ``left`` columns of an NCHW tensor."""
    if x.ndim != 4:
        raise ShapeError(f"spatial_crop expects a 4-D input, got {x.shape}")
    if top >= x.shape[2] or left >= x.shape[3]:
        raise ShapeError(f"spatial_crop({top},{left}) empties a {x.shape} tensor")
    out = Tensor(np.ascontiguousarray(x.data[:, :, top:, left:]))
    shape = x.shape

    def backward(gy: np.ndarray):
        gx = np.zeros(shape)
        gx[:, :, top:, left:] = gy
        return (gx,)

    return record(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes: [N, C, H, W] -> [N, C]."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects a 4-D input, got {x.shape}")
    return x.mean(axis=(2, 3))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map [N, F] @ [F, O] (+ bias)."""
    out = x @ weight
    return out + bias if bias is not None else out
