"""Curvature and correlation instruments for search analysis.

``hessian_max_eigenvalue`` estimates the dominant (largest-magnitude)
eigenvalue of a loss Hessian without second-order autodiff: Hessian-vector
products come from central finite differences of the gradient, and the
spectrum is probed by power iteration with a Rayleigh-quotient stopping
rule. ``pearson_correlation`` is the plain product-moment coefficient with
strict degenerate-input checks. ``arch_loss_gradient`` binds a super-net's
validation loss to a flat architecture-parameter vector so the curvature
of the bilevel objective can be tracked across checkpoints.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .functional import cross_entropy
from .optim import zero_grad
from .tensor import Tape, Tensor

__all__ = [
    "hessian_vector_product",
    "hessian_max_eigenvalue",
    "pearson_correlation",
    "arch_loss_gradient",
]


def _flatten(params) -> np.ndarray:
    if isinstance(params, Tensor):
        arrays = [params.data]
    elif isinstance(params, np.ndarray):
        arrays = [params]
    elif isinstance(params, Sequence):
        arrays = [p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
                  for p in params]
    else:
        raise ConfigError(f"cannot flatten parameters of type {type(params).__name__}")
    if not arrays or sum(a.size for a in arrays) == 0:
        raise ConfigError("need at least one parameter to probe the Hessian")
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def hessian_vector_product(grad_fn, theta: np.ndarray, v: np.ndarray,
                           eps: float) -> np.ndarray:
    """Central-difference estimate of H(theta) @ v from the gradient alone."""
    hv = (grad_fn(theta + eps * v) - grad_fn(theta - eps * v)) / (2.0 * eps)
    if not np.all(np.isfinite(hv)):
        raise NumericalError("Hessian-vector product is not finite")
    return hv


def hessian_max_eigenvalue(grad_fn, params, iters: int = 100,
                           tol: float = 1e-6, *, seed: int = 0) -> float:
    """Largest-magnitude eigenvalue of the Hessian behind ``grad_fn``.

    ``grad_fn`` maps a flat parameter vector to the loss gradient at that
    point; ``params`` fixes the expansion point (any array, tensor, or
    sequence of them). Power iteration stops when either the residual
    ``||Hv - lambda v||`` or the change between successive Rayleigh
    quotients drops below ``tol`` (relative to ``max(1, |lambda|)``), or
    after ``iters`` products.
    """
    if iters < 1:
        raise ConfigError(f"need at least one power iteration, got {iters}")
    theta = _flatten(params)
    eps = 1e-3 * max(1.0, float(np.linalg.norm(theta)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x43AF]))
    v = rng.standard_normal(theta.size)
    v /= np.linalg.norm(v)

    rayleigh = 0.0
    previous = None
    for _ in range(iters):
        hv = hessian_vector_product(grad_fn, theta, v, eps)
        rayleigh = float(v @ hv)
        scale = max(1.0, abs(rayleigh))
        if np.linalg.norm(hv - rayleigh * v) <= tol * scale:
            break
        if previous is not None and abs(rayleigh - previous) <= tol * scale:
            break
        norm_hv = np.linalg.norm(hv)
        if norm_hv == 0.0:
            return 0.0
        v = hv / norm_hv
        previous = rayleigh
    return rayleigh


def pearson_correlation(xs, ys) -> float:
    """Product-moment correlation of two equal-length series."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DataError(f"series lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise DataError(f"need at least 2 points, got {x.size}")
    vx = x - x.mean()
    vy = y - y.mean()
    sx = float(np.sqrt(vx @ vx))
    sy = float(np.sqrt(vy @ vy))
    degenerate = [name for name, s in (("first", sx), ("second", sy)) if s == 0.0]
    if degenerate:
        raise DataError(f"zero variance in the {' and '.join(degenerate)} "
                        f"series; correlation is undefined")
    return float(np.clip((vx @ vy) / (sx * sy), -1.0, 1.0))


def arch_loss_gradient(net, batch):
    """Validation-loss gradient as a function of the flat arch vector.

    Returns ``(grad_fn, theta0)``. ``grad_fn`` temporarily loads a candidate
    vector into the super-net's architecture parameters, differentiates the
    cross-entropy on the frozen batch, and restores the original values, so
    the net is left untouched by every call.
    """
    params = net.arch_parameters()
    if not params:
        raise ConfigError("the super-net has no architecture parameters")
    x, y = batch
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if len(y) == 0:
        raise DataError("cannot probe curvature on an empty batch")
    sizes = [p.data.size for p in params]
    bounds = np.cumsum(sizes)[:-1]
    theta0 = np.concatenate([p.data.ravel() for p in params])

    def grad_fn(theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != theta0.shape:
            raise ConfigError(f"expected a vector of length {theta0.size}, "
                              f"got shape {theta.shape}")
        try:
            for p, chunk in zip(params, np.split(theta, bounds)):
                p.data = chunk.reshape(p.data.shape).copy()
            zero_grad(params)
            with Tape() as tape:
                loss = cross_entropy(net.forward(Tensor(x)), y)
            tape.backward(loss, params)
            return np.concatenate([p.grad.ravel() for p in params])
        finally:
            for p, chunk in zip(params, np.split(theta0, bounds)):
                p.data = chunk.reshape(p.data.shape).copy()
            zero_grad(params)

    return grad_fn, theta0
