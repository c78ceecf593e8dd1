"""Kernel backend dispatch.

Two interchangeable backends provide the convolution and pooling kernels:

* ``compiled`` — the Cython extension ``ftso.kernels._ckernels``.
* ``python``  — the pure-NumPy implementations in ``ftso.kernels.reference``.

Selection happens once at import through the ``FTSO_KERNELS`` environment
variable: ``auto`` (default, compiled when available), ``compiled``
(require the extension, raise if missing), or ``python``.
"""

from __future__ import annotations

import os

from ..errors import ConfigError
from . import reference

_choice = os.environ.get("FTSO_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "compiled", "python"):
    raise ConfigError(f"FTSO_KERNELS must be auto, compiled or python, got {_choice!r}")

_impl = reference
BACKEND = "python"
if _choice in ("auto", "compiled"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise ConfigError(
                "FTSO_KERNELS=compiled but the ftso.kernels._ckernels extension "
                "is not built; reinstall the package or use FTSO_KERNELS=python"
            ) from None

conv_out_size = reference.conv_out_size

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
max_pool2d_forward = _impl.max_pool2d_forward
max_pool2d_backward = _impl.max_pool2d_backward
avg_pool2d_forward = _impl.avg_pool2d_forward
avg_pool2d_backward = _impl.avg_pool2d_backward

__all__ = [
    "BACKEND",
    "conv_out_size",
    "conv2d_forward",
    "conv2d_backward",
    "max_pool2d_forward",
    "max_pool2d_backward",
    "avg_pool2d_forward",
    "avg_pool2d_backward",
]
