"""Independent brute-force oracles used to pin down kernel behaviour.

Everything here is written as plain nested loops with no shared code with
the package, so a bug in the package cannot hide in its own oracle.
"""

from __future__ import annotations

import numpy as np


def naive_conv2d(x, w, bias=None, stride=1, padding=1, dilation=1, groups=1):
    n, c_in, h, w_in = x.shape
    c_out, c_g, kh, kw = w.shape
    h_out = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    w_out = (w_in + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    og = c_out // groups
    y = np.zeros((n, c_out, h_out, w_out))
    for nb in range(n):
        for oc in range(c_out):
            g = oc // og
            for oh in range(h_out):
                for ow in range(w_out):
                    acc = 0.0 if bias is None else bias[oc]
                    for ic in range(c_g):
                        for ki in range(kh):
                            for kj in range(kw):
                                ih = oh * stride - padding + ki * dilation
                                iw = ow * stride - padding + kj * dilation
                                if 0 <= ih < h and 0 <= iw < w_in:
                                    acc += x[nb, g * c_g + ic, ih, iw] * w[oc, ic, ki, kj]
                    y[nb, oc, oh, ow] = acc
    return y


def naive_max_pool2d(x, k, stride, padding=0):
    n, c, h, w = x.shape
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w + 2 * padding - k) // stride + 1
    y = np.zeros((n, c, h_out, w_out))
    for nb in range(n):
        for ch in range(c):
            for oh in range(h_out):
                for ow in range(w_out):
                    best = -np.inf
                    for ki in range(k):
                        for kj in range(k):
                            ih = oh * stride - padding + ki
                            iw = ow * stride - padding + kj
                            if 0 <= ih < h and 0 <= iw < w:
                                best = max(best, x[nb, ch, ih, iw])
                    y[nb, ch, oh, ow] = best
    return y


def naive_avg_pool2d(x, k, stride, padding=0):
    """Average over in-bounds cells only (padding never enters the mean)."""
    n, c, h, w = x.shape
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w + 2 * padding - k) // stride + 1
    y = np.zeros((n, c, h_out, w_out))
    for nb in range(n):
        for ch in range(c):
            for oh in range(h_out):
                for ow in range(w_out):
                    acc, cnt = 0.0, 0
                    for ki in range(k):
                        for kj in range(k):
                            ih = oh * stride - padding + ki
                            iw = ow * stride - padding + kj
                            if 0 <= ih < h and 0 <= iw < w:
                                acc += x[nb, ch, ih, iw]
                                cnt += 1
                    y[nb, ch, oh, ow] = acc / cnt
    return y


def distinct_array(rng, shape, scale=0.1):
    """Random-signed array whose entries are pairwise distinct.

    Max pooling is not differentiable at ties; finite-difference probes on
    arrays from this helper stay at least ``scale`` away from any tie.
    """
    size = int(np.prod(shape))
    values = (rng.permutation(size) - size / 2.0) * scale
    return values.reshape(shape)
