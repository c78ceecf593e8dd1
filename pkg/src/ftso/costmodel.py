"""Analytic cost formulas for cell super-nets and their enumeration oracle.

The closed forms count one multiply-accumulate as 1 FLOP and each element
of a tensor summation as 1 FLOP, matching the instrumented counters in
:mod:`ftso.tensor`. The analytic DARTS model assumes a uniform candidate
set of ``p`` plain k x k convolutions (bias included in the parameter
count, free in FLOPs); the skip-only model has no kernels at all, so its
forward cost is purely the weighted node merges and its trainable state is
purely beta.

``enumerate_costs`` is the independent oracle: it walks a concrete net,
counts trainable scalars by kind, counts operator instances, and measures
the forward FLOPs of the first cell's body with the instrumented counter.
Where the closed-form model's assumptions hold the walk reproduces it
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .network import Network
from .supernet import SuperNet
from .tensor import FlopCounter, Tensor

__all__ = [
    "CostReport",
    "darts_cost",
    "ftso_cost",
    "operation_counts",
    "enumerate_costs",
]


@dataclass(frozen=True)
class CostReport:
    """Cost of one cell: forward FLOPs, trainable scalars, operator instances.

    ``trainable_params`` always equals ``kernel_params + alpha_params +
    beta_params``. Analytic reports fill only the component their closed
    form speaks about (kernel weights for the uniform-conv model, beta for
    the skip-only model); enumerated reports fill all three from the walk.
    """

    flops_per_forward: int
    trainable_params: int
    operator_instances: int
    kernel_params: int = 0
    alpha_params: int = 0
    beta_params: int = 0

    def compare(self, other: "CostReport") -> dict[str, tuple[int, int]]:
        """Field-by-field (self, other) pairs for the three headline counts."""
        return {
            "flops_per_forward": (self.flops_per_forward, other.flops_per_forward),
            "trainable_params": (self.trainable_params, other.trainable_params),
            "operator_instances": (self.operator_instances, other.operator_instances),
        }


def _edge_count(n: int) -> int:
    return n * (n - 3) // 2


def _check_positive(**kwargs: int) -> None:
    for name, value in kwargs.items():
        if int(value) != value or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value}")


def darts_cost(n: int, p: int, k: int, c_in: int, c_out: int, h_out: int,
               w_out: int) -> CostReport:
    """Cost of a uniform k x k-conv mixed-op cell of n nodes and p candidates.

    FLOPs: p * E * H * W * C_out * (k^2 * c_in + 1) where E = n(n-3)/2 —
    every edge runs p convolutions and every node merge adds one element-wise
    pass per (edge, candidate). Params: E * p * (k^2 * c_in + 1) * c_out
    conv weights and biases. Operator instances: E * p.
    """
    _check_positive(n=n, p=p, k=k, c_in=c_in, c_out=c_out, h_out=h_out, w_out=w_out)
    if n < 3:
        raise ConfigError(f"a cell needs at least 3 nodes, got n={n}")
    edges = _edge_count(n)
    flops = p * edges * h_out * w_out * c_out * (k * k * c_in + 1)
    params = edges * p * (k * k * c_in + 1) * c_out
    return CostReport(
        flops_per_forward=flops,
        trainable_params=params,
        operator_instances=edges * p,
        kernel_params=params,
    )


def ftso_cost(n: int, c_in: int, h_in: int, w_in: int) -> CostReport:
    """Cost of the skip-only topology cell: merges only, beta the only state."""
    _check_positive(n=n, c_in=c_in, h_in=h_in, w_in=w_in)
    if n < 3:
        raise ConfigError(f"a cell needs at least 3 nodes, got n={n}")
    edges = _edge_count(n)
    flops = edges * h_in * w_in * c_in
    return CostReport(
        flops_per_forward=flops,
        trainable_params=edges,
        operator_instances=edges,
        beta_params=edges,
    )


def operation_counts(n: int, p: int) -> tuple[int, int, int]:
    """Operator instances per cell: joint search, topology phase, operator phase.

    Joint search mixes p candidates on every edge (E*p); the topology phase
    carries one simple operator per edge (E); the operator phase mixes p
    candidates on the 2(n-3) retained edges only.
    """
    _check_positive(p=p)
    if int(n) != n or n < 3:
        raise ConfigError(f"n must be an integer >= 3, got {n}")
    edges = _edge_count(n)
    return (edges * p, edges, 2 * (n - 3) * p)


def _enumerate_supernet(net: SuperNet, h: int, w: int, batch: int) -> CostReport:
    cell = net.cells[0]
    kernel = sum(p.size for p in cell.parameters() if p.requires_grad)
    cell_type = cell.cell_type
    beta = sum(t.size for t in net.arch.beta[cell_type].values())
    alpha = sum(t.size for t in net.arch.alpha[cell_type].values())
    rng = np.random.default_rng(0)
    h0 = Tensor(rng.standard_normal((batch, cell.channels, h, w)))
    h1 = Tensor(rng.standard_normal((batch, cell.channels, h, w)))
    with FlopCounter() as counter:
        cell.body(h0, h1, net.arch, training=True)
    return CostReport(
        flops_per_forward=counter.total,
        trainable_params=kernel + alpha + beta,
        operator_instances=cell.operator_instances(),
        kernel_params=kernel,
        alpha_params=alpha,
        beta_params=beta,
    )


def _enumerate_network(net: Network, h: int, w: int, batch: int) -> CostReport:
    cell = net.cells[0]
    kernel = sum(p.size for p in cell.parameters() if p.requires_grad)
    rng = np.random.default_rng(0)
    s0 = Tensor(rng.standard_normal((batch, net.cfg.init_channels, h, w)))
    s1 = Tensor(rng.standard_normal((batch, net.cfg.init_channels, h, w)))
    with FlopCounter() as counter:
        cell.forward(s0, s1, training=True)
    return CostReport(
        flops_per_forward=counter.total,
        trainable_params=kernel,
        operator_instances=len(cell.ops),
        kernel_params=kernel,
    )


def enumerate_costs(net: SuperNet | Network | None, h: int = 8, w: int = 8,
                    batch: int = 1) -> CostReport:
    """Walk a built net's first cell and measure its costs (oracle path).

    The forward FLOPs are measured by an instrumented run of the cell on a
    ``batch`` x channels x ``h`` x ``w`` input, excluding the input
    preprocessing for super-nets so the number is attributable to the cell
    body the closed forms describe. ``None`` (no net) reports all zeros.
    """
    if net is None:
        return CostReport(flops_per_forward=0, trainable_params=0,
                          operator_instances=0)
    _check_positive(h=h, w=w, batch=batch)
    if isinstance(net, SuperNet):
        return _enumerate_supernet(net, h, w, batch)
    if isinstance(net, Network):
        return _enumerate_network(net, h, w, batch)
    raise ConfigError(f"cannot enumerate costs of {type(net).__name__}")
