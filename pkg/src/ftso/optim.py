"""Gradient-descent optimizers and learning-rate schedules.

Optimizers read ``param.grad`` (set by :meth:`ftso.tensor.Tape.backward`)
and update ``param.data`` in place. Parameters whose ``grad`` is ``None``
are skipped.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["SGD", "Adam", "CosineSchedule", "zero_grad"]


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


class SGD:
    """SGD with classical momentum and coupled L2 weight decay.

    Update: ``v <- momentum*v + grad + weight_decay*p``; ``p <- p - lr*v``.
    """

    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0) -> None:
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self._velocity: dict[int, np.ndarray] = {}

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            if self.momentum:
                v = self._velocity.get(id(p))
                v = g if v is None else self.momentum * v + g
                self._velocity[id(p)] = v
            else:
                v = g
            p.data -= self.lr * v


class Adam:
    """Adam with bias correction and coupled L2 weight decay."""

    def __init__(self, params: Sequence[Tensor], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0) -> None:
        self.params = list(params)
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}
        self._t = 0

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self._t
        c2 = 1.0 - b2 ** self._t
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m = self._m.get(id(p), np.zeros_like(p.data))
            v = self._v.get(id(p), np.zeros_like(p.data))
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            self._m[id(p)], self._v[id(p)] = m, v
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class CosineSchedule:
    """Cosine annealing from ``base_lr`` to ``min_lr`` over ``total_steps``.

    ``lr(t)`` for t in [0, total_steps]; t past the end clamps to ``min_lr``.
    """

    def __init__(self, base_lr: float, total_steps: int, min_lr: float = 0.0) -> None:
        if total_steps < 1:
            raise ValueError(f"total_steps must be positive, got {total_steps}")
        self.base_lr = float(base_lr)
        self.min_lr = float(min_lr)
        self.total_steps = int(total_steps)

    def lr(self, step: int) -> float:
        t = min(max(step, 0), self.total_steps)
        cos = math.cos(math.pi * t / self.total_steps)
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + cos)

    def apply(self, optimizer, step: int) -> float:
        value = self.lr(step)
        optimizer.lr = value
        return value
