"""Finite-difference gradient verification utilities.

Central differences with step ``eps`` serve as the independent oracle for
the tape's analytic gradients. For piecewise-linear graphs (relu, max
pooling) a probe that crosses a kink makes the finite difference itself
wrong, so :func:`kink_margin` exposes the smallest distance to a kink seen
during a forward pass: callers reject or resample probes when the margin is
not comfortably larger than ``eps``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, add_margin_hook

__all__ = [
    "finite_diff_gradient",
    "finite_diff_gradients",
    "tape_gradients",
    "max_relative_error",
    "kink_margin",
]


def finite_diff_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                         eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        hi = f(x)
        xf[i] = orig - eps
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * eps)
    return grad


def finite_diff_gradients(f: Callable[[Sequence[np.ndarray]], float],
                          arrays: Sequence[np.ndarray],
                          eps: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradients of a scalar function of several arrays."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    grads = []
    for k in range(len(arrays)):
        grads.append(finite_diff_gradient(lambda a, k=k: f(arrays[:k] + [a] + arrays[k + 1:]),
                                          arrays[k], eps=eps))
    return grads


def tape_gradients(build: Callable[[Sequence[Tensor]], Tensor],
                   arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Analytic gradients of ``build(params)`` with respect to ``arrays``."""
    params = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = build(params)
    return tape.gradient(loss, params)


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-2) -> float:
    """max |a-b| / max(|a|, |b|, floor), element-wise.

    The floor keeps near-zero entries from inflating the ratio: for those,
    this effectively measures absolute error / floor.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


class kink_margin:
    """Context manager recording the smallest kink distance seen.

    Usage::

        with kink_margin() as margin:
            loss = forward(...)
        if margin.value < 100 * eps:  # probe too close to a kink, resample
            ...
    """

    def __init__(self) -> None:
        self.value = np.inf
        self._remove: Callable[[], None] | None = None

    def _observe(self, name: str, margin: float) -> None:
        self.value = min(self.value, margin)

    def __enter__(self) -> "kink_margin":
        self._remove = add_margin_hook(self._observe)
        return self

    def __exit__(self, *exc) -> None:
        if self._remove is not None:
            self._remove()
            self._remove = None
