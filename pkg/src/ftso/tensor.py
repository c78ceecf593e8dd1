"""Reverse-mode automatic differentiation over float64 NumPy arrays.

The graph is define-by-run: while a :class:`Tape` is active, every primitive
that produces a gradient-relevant output appends one record to it. Calling
:meth:`Tape.gradient` (or :meth:`Tape.backward`) replays the records in
reverse, visiting each exactly once and accumulating gradients by tensor
identity. There is no retained global state — a fresh tape per forward pass
is the expected usage.

The module also hosts :class:`FlopCounter`, a context manager that counts
the multiply-accumulate work of the compute-bearing primitives (matmul,
convolution, pooling, weighted merges) as they execute.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericalError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "FlopCounter",
    "parameter",
    "set_debug_checks",
    "add_margin_hook",
]

_TAPES: list["Tape"] = []
_COUNTERS: list["FlopCounter"] = []
_CHECK_FINITE = False
_MARGIN_HOOKS: list[Callable[[str, float], None]] = []


def set_debug_checks(enabled: bool) -> None:
    """Toggle per-primitive finiteness checks (NaN/inf raise NumericalError)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


def add_margin_hook(hook: Callable[[str, float], None]) -> Callable[[], None]:
    """Register a callback receiving (primitive name, kink distance).

    Piecewise-linear primitives (relu, max pooling) report how far their
    inputs are from a non-differentiable point; gradient-checking code uses
    this to reject finite-difference probes that straddle a kink. Returns a
    function that unregisters the hook.
    """
    _MARGIN_HOOKS.append(hook)

    def remove() -> None:
        _MARGIN_HOOKS.remove(hook)

    return remove


def report_margin(name: str, margin: float) -> None:
    for hook in _MARGIN_HOOKS:
        hook(name, margin)


def margin_hooks_active() -> bool:
    return bool(_MARGIN_HOOKS)


def count_flops(kind: str, amount: int) -> None:
    """Credit `amount` FLOPs of the given kind to every active counter."""
    for counter in _COUNTERS:
        counter._add(kind, amount)


class FlopCounter:
    """Counts multiply-accumulate work of primitives executed in its scope.

    Conventions: one MAC counts as one FLOP; convolutions count
    k*k*(C_in/groups) MACs per output element (bias ignored), matmul counts
    M*K*N, pooling counts k*k per output element, and a weighted merge of m
    tensors counts m per output element. Element-wise arithmetic, batch
    normalisation and data movement are not counted.
    """

    def __init__(self) -> None:
        self.total = 0
        self.by_kind: dict[str, int] = {}

    def _add(self, kind: str, amount: int) -> None:
        self.total += amount
        self.by_kind[kind] = self.by_kind.get(kind, 0) + amount

    def __enter__(self) -> "FlopCounter":
        _COUNTERS.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _COUNTERS.remove(self)


class Tensor:
    """A float64 array plus a gradient slot.

    ``data`` may be mutated in place (optimizers do), but not between a
    forward pass and the corresponding backward pass — backward closures
    capture the arrays they need by reference.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same data, no gradient tracking."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{grad})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, _as_tensor(other))

    def __radd__(self, other) -> "Tensor":
        return add(_as_tensor(other), self)

    def __sub__(self, other) -> "Tensor":
        return sub(self, _as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return sub(_as_tensor(other), self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, _as_tensor(other))

    def __rmul__(self, other) -> "Tensor":
        return mul(_as_tensor(other), self)

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive; multiply by a reciprocal")
        return mul(self, Tensor(1.0 / float(other)))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # -- shape and reductions ----------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape if len(shape) != 1 or isinstance(shape[0], int) else shape[0])

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    # -- element-wise nonlinearities ----------------------------------------

    def relu(self) -> "Tensor":
        return relu(self)

    def log(self) -> "Tensor":
        return log(self)

    def exp(self) -> "Tensor":
        return exp(self)


def parameter(data) -> Tensor:
    """A tensor that participates in gradients (fresh float64 copy)."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Recorder for one forward pass; replays the records for gradients."""

    def __init__(self) -> None:
        self._records: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def gradient(self, loss: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        """d loss / d source for each source; zeros when unreachable.

        ``loss`` must be a scalar. The records are consumed read-only, so
        this may be called repeatedly (e.g. for different source lists).
        """
        if loss.data.size != 1:
            raise ShapeError(f"gradient target must be a scalar, got shape {loss.data.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward in reversed(self._records):
            gy = grads.pop(id(out), None)
            if gy is None:
                continue
            for tensor, grad in zip(inputs, backward(gy)):
                if grad is None:
                    continue
                prev = grads.get(id(tensor))
                grads[id(tensor)] = grad if prev is None else prev + grad
        results = []
        for src in sources:
            g = grads.get(id(src))
            results.append(np.zeros_like(src.data) if g is None else np.asarray(g))
        return results

    def backward(self, loss: Tensor, params: Sequence[Tensor]) -> None:
        """Compute gradients and store them on ``param.grad`` (overwriting)."""
        for param, grad in zip(params, self.gradient(loss, params)):
            param.grad = grad


def record(out: Tensor, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Attach ``out`` to the active tape if gradients can flow to it.

    ``backward`` maps the output gradient to per-input gradients, aligned
    with ``inputs``; it must return ``None`` in the slots whose ``needs``
    flag was false at record time.
    """
    if _CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise NumericalError("non-finite values produced by a primitive")
    out.requires_grad = any(t.requires_grad for t in inputs)
    if _TAPES and out.requires_grad:
        _TAPES[-1]._records.append((out, tuple(inputs), backward))
    return out


def needs_of(inputs: Iterable[Tensor]) -> tuple[bool, ...]:
    return tuple(t.requires_grad for t in inputs)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- primitive implementations ----------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    na, nb = needs_of((a, b))

    def backward(gy: np.ndarray):
        return (unbroadcast(gy, a.data.shape) if na else None,
                unbroadcast(gy, b.data.shape) if nb else None)

    return record(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    na, nb = needs_of((a, b))

    def backward(gy: np.ndarray):
        return (unbroadcast(gy, a.data.shape) if na else None,
                unbroadcast(-gy, b.data.shape) if nb else None)

    return record(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    na, nb = needs_of((a, b))
    ad, bd = a.data, b.data

    def backward(gy: np.ndarray):
        return (unbroadcast(gy * bd, ad.shape) if na else None,
                unbroadcast(gy * ad, bd.shape) if nb else None)

    return record(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return record(out, (a,), lambda gy: (-gy,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)
    m, k = a.data.shape
    n = b.data.shape[1]
    count_flops("matmul", m * k * n)
    na, nb = needs_of((a, b))
    ad, bd = a.data, b.data

    def backward(gy: np.ndarray):
        return (gy @ bd.T if na else None,
                ad.T @ gy if nb else None)

    return record(out, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    if margin_hooks_active() and a.data.size:
        report_margin("relu", float(np.min(np.abs(a.data))))
    out = Tensor(np.maximum(a.data, 0.0))
    mask = a.data > 0.0

    def backward(gy: np.ndarray):
        return (gy * mask,)

    return record(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericalError("log of a non-positive value")
    out = Tensor(np.log(a.data))
    ad = a.data

    def backward(gy: np.ndarray):
        return (gy / ad,)

    return record(out, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))
    od = out.data

    def backward(gy: np.ndarray):
        return (gy * od,)

    return record(out, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    orig = a.data.shape

    def backward(gy: np.ndarray):
        return (gy.reshape(orig),)

    return record(out, (a,), backward)


def _expand_reduced(gy: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(gy.reshape(()), shape) if not keepdims else np.broadcast_to(gy, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    if not keepdims:
        gy = np.expand_dims(gy, axes)
    return np.broadcast_to(gy, shape)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))
    shape = a.data.shape

    def backward(gy: np.ndarray):
        return (_expand_reduced(gy, shape, axis, keepdims).copy(),)

    return record(out, (a,), backward)


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    shape = a.data.shape
    scale = a.data.size / out.data.size

    def backward(gy: np.ndarray):
        return (_expand_reduced(gy, shape, axis, keepdims) / scale,)

    return record(out, (a,), backward)
