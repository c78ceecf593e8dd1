"""The candidate operator library with exact parameter/FLOP accounting.

Eight canonical operator kinds populate the search space; their string
names are the vocabulary of genotype files. A family of vanilla
convolutions (``conv_1x1``, ``conv_3x3``, ``conv_5x5`` — single conv layer
with bias, no normalisation) exists alongside the canonical set as the
uniform operator the analytic cost model assumes; it never appears in
derived genotypes.

Construction is seeded: an operator's weights are a pure function of the
``numpy.random.Generator`` handed to :func:`make_operator`. Operators built
with ``affine=False`` run batch norm in always-batch-statistics mode with
no trainable scale/shift (the search-phase convention); ``affine=True``
adds the affine parameters and tracks running statistics for evaluation
networks.
"""

from __future__ import annotations

import re
from enum import Enum

import numpy as np

from . import functional as F
from .errors import ConfigError, ShapeError
from .tensor import Tensor


class OperatorKind(Enum):
    """The candidate operators, in canonical (tie-break) order."""

    SEP_CONV_3X3 = "sep_conv_3x3"
    SEP_CONV_5X5 = "sep_conv_5x5"
    DIL_CONV_3X3 = "dil_conv_3x3"
    DIL_CONV_5X5 = "dil_conv_5x5"
    MAX_POOL_3X3 = "max_pool_3x3"
    AVG_POOL_3X3 = "avg_pool_3x3"
    SKIP_CONNECT = "skip_connect"
    ZERO = "none"


CANONICAL_OPERATORS: tuple[str, ...] = tuple(kind.value for kind in OperatorKind)

_VANILLA_RE = re.compile(r"^conv_(\d+)x(\d+)$")


def _vanilla_kernel(name: str) -> int | None:
    m = _VANILLA_RE.match(name)
    if m is None:
        return None
    kh, kw = int(m.group(1)), int(m.group(2))
    if kh != kw or kh < 1 or kh % 2 == 0:
        raise ConfigError(f"vanilla convolution {name!r} must have odd square kernels")
    return kh


def is_operator_name(name: str) -> bool:
    return name in CANONICAL_OPERATORS or _VANILLA_RE.match(name) is not None


class _Conv:
    """A single convolution layer with seeded Kaiming-normal weights."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int,
                 stride: int, padding: int, dilation: int = 1, groups: int = 1,
                 bias: bool = False) -> None:
        fan_in = (c_in // groups) * k * k
        scale = np.sqrt(2.0 / fan_in)
        self.weight = Tensor(rng.standard_normal((c_out, c_in // groups, k, k)) * scale,
                             requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True) if bias else None
        self.stride, self.padding, self.dilation, self.groups = stride, padding, dilation, groups

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding, dilation=self.dilation, groups=self.groups)

    def parameters(self) -> list[Tensor]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]


class _BatchNorm:
    """Per-channel batch norm; affine adds gamma/beta and running statistics."""

    def __init__(self, channels: int, affine: bool) -> None:
        self.affine = affine
        if affine:
            self.gamma = Tensor(np.ones(channels), requires_grad=True)
            self.beta = Tensor(np.zeros(channels), requires_grad=True)
            self.running = {"mean": np.zeros(channels), "var": np.ones(channels)}
        else:
            self.gamma = self.beta = None
            self.running = None

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if not self.affine:
            return F.batch_norm(x, training=True)  # always batch statistics
        return F.batch_norm(x, self.gamma, self.beta, running=self.running,
                            training=training)

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta] if self.affine else []


class Operator:
    """Base class: a callable ``x -> y`` with enumerable trainable weights."""

    name: str = ""

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return []

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


class Identity(Operator):
    name = OperatorKind.SKIP_CONNECT.value

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        return x


class FactorizedReduce(Operator):
    """Stride-2 skip connection: two offset 1x1 convolutions, concatenated."""

    name = OperatorKind.SKIP_CONNECT.value

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int,
                 affine: bool) -> None:
        if c_out % 2:
            raise ShapeError(f"factorized reduce needs an even output width, got {c_out}")
        self.conv_a = _Conv(rng, c_in, c_out // 2, 1, stride=2, padding=0)
        self.conv_b = _Conv(rng, c_in, c_out // 2, 1, stride=2, padding=0)
        self.bn = _BatchNorm(c_out, affine)

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeError(f"factorized reduce needs even spatial extents, got {x.shape}")
        h = x.relu()
        y = F.concat_channels([self.conv_a(h), self.conv_b(F.spatial_crop(h, 1, 1))])
        return self.bn(y, training)

    def parameters(self) -> list[Tensor]:
        return self.conv_a.parameters() + self.conv_b.parameters() + self.bn.parameters()


class ReLUConvBN(Operator):
    """relu -> conv -> batch norm; the standard channel-adjusting block."""

    name = "relu_conv_bn"

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int,
                 stride: int, affine: bool) -> None:
        self.conv = _Conv(rng, c_in, c_out, k, stride=stride, padding=k // 2)
        self.bn = _BatchNorm(c_out, affine)

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        return self.bn(self.conv(x.relu()), training)

    def parameters(self) -> list[Tensor]:
        return self.conv.parameters() + self.bn.parameters()


class ZeroOp(Operator):
    """Output is identically zero at the strided output shape."""

    name = OperatorKind.ZERO.value

    def __init__(self, stride: int) -> None:
        self.stride = stride

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        n, c, h, w = x.shape
        s = self.stride
        return Tensor(np.zeros((n, c, (h + s - 1) // s, (w + s - 1) // s)))


class PoolOp(Operator):
    """3x3 max or average pooling, padding 1, no normalisation afterwards."""

    def __init__(self, mode: str, stride: int) -> None:
        self.mode = mode
        self.stride = stride
        self.name = f"{mode}_pool_3x3"

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        if self.mode == "max":
            return F.max_pool2d(x, 3, stride=self.stride, padding=1)
        return F.avg_pool2d(x, 3, stride=self.stride, padding=1)


class SepConv(Operator):
    """Separable convolution: (relu, depthwise, pointwise, BN) twice."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int,
                 stride: int, affine: bool) -> None:
        self.name = f"sep_conv_{k}x{k}"
        pad = k // 2
        self.dw1 = _Conv(rng, c_in, c_in, k, stride=stride, padding=pad, groups=c_in)
        self.pw1 = _Conv(rng, c_in, c_in, 1, stride=1, padding=0)
        self.bn1 = _BatchNorm(c_in, affine)
        self.dw2 = _Conv(rng, c_in, c_in, k, stride=1, padding=pad, groups=c_in)
        self.pw2 = _Conv(rng, c_in, c_out, 1, stride=1, padding=0)
        self.bn2 = _BatchNorm(c_out, affine)

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        y = self.bn1(self.pw1(self.dw1(x.relu())), training)
        return self.bn2(self.pw2(self.dw2(y.relu())), training)

    def parameters(self) -> list[Tensor]:
        return (self.dw1.parameters() + self.pw1.parameters() + self.bn1.parameters()
                + self.dw2.parameters() + self.pw2.parameters() + self.bn2.parameters())


class DilConv(Operator):
    """Dilated separable convolution: relu, dilated depthwise, pointwise, BN."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int,
                 stride: int, affine: bool) -> None:
        self.name = f"dil_conv_{k}x{k}"
        self.dw = _Conv(rng, c_in, c_in, k, stride=stride, padding=k - 1,
                        dilation=2, groups=c_in)
        self.pw = _Conv(rng, c_in, c_out, 1, stride=1, padding=0)
        self.bn = _BatchNorm(c_out, affine)

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        return self.bn(self.pw(self.dw(x.relu())), training)

    def parameters(self) -> list[Tensor]:
        return self.dw.parameters() + self.pw.parameters() + self.bn.parameters()


class VanillaConv(Operator):
    """Plain k x k convolution with bias: (k^2*C_in + 1)*C_out parameters."""

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int,
                 stride: int) -> None:
        self.name = f"conv_{k}x{k}"
        self.conv = _Conv(rng, c_in, c_out, k, stride=stride, padding=k // 2, bias=True)

    def __call__(self, x: Tensor, training: bool = True) -> Tensor:
        return self.conv(x)

    def parameters(self) -> list[Tensor]:
        return self.conv.parameters()


def make_operator(name: str, c_in: int, c_out: int, stride: int,
                  rng: np.random.Generator, affine: bool = False) -> Operator:
    """Build one operator instance; weights drawn from ``rng``."""
    if stride not in (1, 2):
        raise ConfigError(f"operator stride must be 1 or 2, got {stride}")
    k = _vanilla_kernel(name)
    if k is not None:
        return VanillaConv(rng, c_in, c_out, k, stride)
    if name == OperatorKind.SKIP_CONNECT.value:
        if stride == 1 and c_in == c_out:
            return Identity()
        return FactorizedReduce(rng, c_in, c_out, affine)
    if name == OperatorKind.ZERO.value:
        if c_in != c_out:
            raise ShapeError(f"zero operator cannot change channels ({c_in}->{c_out})")
        return ZeroOp(stride)
    if name in (OperatorKind.MAX_POOL_3X3.value, OperatorKind.AVG_POOL_3X3.value):
        if c_in != c_out:
            raise ShapeError(f"pooling cannot change channels ({c_in}->{c_out})")
        return PoolOp(name.split("_")[0], stride)
    if name == OperatorKind.SEP_CONV_3X3.value:
        return SepConv(rng, c_in, c_out, 3, stride, affine)
    if name == OperatorKind.SEP_CONV_5X5.value:
        return SepConv(rng, c_in, c_out, 5, stride, affine)
    if name == OperatorKind.DIL_CONV_3X3.value:
        return DilConv(rng, c_in, c_out, 3, stride, affine)
    if name == OperatorKind.DIL_CONV_5X5.value:
        return DilConv(rng, c_in, c_out, 5, stride, affine)
    raise ConfigError(f"unknown operator name {name!r}")


def operator_param_count(name: str, c_in: int, c_out: int, stride: int = 1,
                         affine: bool = False) -> int:
    """Trainable scalar count of ``make_operator`` with the same arguments."""
    bn = (lambda c: 2 * c) if affine else (lambda c: 0)
    k = _vanilla_kernel(name)
    if k is not None:
        return (k * k * c_in + 1) * c_out
    if name == OperatorKind.SKIP_CONNECT.value:
        if stride == 1 and c_in == c_out:
            return 0
        return c_in * c_out + bn(c_out)  # two c_in -> c_out/2 projections
    if name in (OperatorKind.ZERO.value, OperatorKind.MAX_POOL_3X3.value,
                OperatorKind.AVG_POOL_3X3.value):
        return 0
    if name.startswith("sep_conv"):
        k = int(name[-1])
        return (k * k * c_in + c_in * c_in + bn(c_in)
                + k * k * c_in + c_in * c_out + bn(c_out))
    if name.startswith("dil_conv"):
        k = int(name[-1])
        return k * k * c_in + c_in * c_out + bn(c_out)
    raise ConfigError(f"unknown operator name {name!r}")


def operator_flop_count(name: str, c_in: int, c_out: int, h_out: int, w_out: int,
                        stride: int = 1) -> int:
    """Forward multiply-accumulate count at the operator's output shape.

    Counts convolution MACs and pooling window touches; ReLU, batch norm and
    bias additions are free (the multiply-accumulate convention used
    throughout the cost model).
    """
    area = h_out * w_out
    k = _vanilla_kernel(name)
    if k is not None:
        return k * k * c_in * area * c_out
    if name == OperatorKind.SKIP_CONNECT.value:
        if stride == 1 and c_in == c_out:
            return 0
        return c_in * area * c_out
    if name == OperatorKind.ZERO.value:
        return 0
    if name in (OperatorKind.MAX_POOL_3X3.value, OperatorKind.AVG_POOL_3X3.value):
        return 9 * area * c_out
    if name.startswith("sep_conv"):
        k = int(name[-1])
        return (k * k * c_in * area + c_in * c_in * area
                + k * k * c_in * area + c_in * c_out * area)
    if name.startswith("dil_conv"):
        k = int(name[-1])
        return k * k * c_in * area + c_in * c_out * area
    raise ConfigError(f"unknown operator name {name!r}")
