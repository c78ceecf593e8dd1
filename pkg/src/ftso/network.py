"""Discrete evaluation networks assembled from a genotype.

Unlike the search super-net, an evaluation network is fully trainable:
stem, preprocessing, every retained operator and the classifier all take
gradient steps, and batch norm runs in affine mode with running statistics
so evaluation-mode forwards are deterministic functions of the trained
state.

Each intermediate node simply adds the outputs of its two retained
in-edges; the cell output concatenates all intermediate nodes. Channels
double at every reduction cell, mirroring the super-net layout.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .errors import ConfigError, GenotypeError
from .genotype import Genotype, validate_genotype
from .ops import FactorizedReduce, Identity, Operator, ReLUConvBN, _BatchNorm, \
    _Conv, make_operator
from .supernet import SpaceConfig
from .tensor import Tensor

__all__ = ["DiscreteCell", "Network", "genotype_to_network", "infer_nodes"]


def infer_nodes(genotype: Genotype) -> int:
    """Node count implied by a genotype: max target + the output node."""
    targets = [dst for _, dst, _ in genotype.normal + genotype.reduce]
    if not targets:
        raise GenotypeError("genotype has no edges")
    return max(targets) + 2


class DiscreteCell:
    """One evaluation cell: two preprocessed inputs and the retained edges."""

    def __init__(self, *, edges, nodes: int, channels: int, c_prev_prev: int,
                 c_prev: int, reduction: bool, reduction_prev: bool,
                 seed: np.random.SeedSequence) -> None:
        self.nodes = int(nodes)
        self.channels = int(channels)
        self.reduction = bool(reduction)
        self.edge_list = tuple(sorted(edges, key=lambda e: (e[1], e[0])))
        pre_ss, ops_ss = seed.spawn(2)
        pre_rng = np.random.default_rng(pre_ss)
        self.pre0 = self._preprocess(pre_rng, c_prev_prev, reduction_prev)
        self.pre1 = self._preprocess(pre_rng, c_prev, False)
        self.ops: dict[tuple[int, int], Operator] = {}
        for (src, dst, op_name), child in zip(self.edge_list,
                                              ops_ss.spawn(len(self.edge_list))):
            stride = 2 if self.reduction and src < 2 else 1
            self.ops[(src, dst)] = make_operator(
                op_name, channels, channels, stride,
                np.random.default_rng(child), affine=True)

    def _preprocess(self, rng: np.random.Generator, c_in: int,
                    spatial_halved: bool) -> Operator:
        if spatial_halved:
            return FactorizedReduce(rng, c_in, self.channels, affine=True)
        if c_in == self.channels:
            return Identity()
        return ReLUConvBN(rng, c_in, self.channels, 1, 1, affine=True)

    @property
    def out_channels(self) -> int:
        return (self.nodes - 3) * self.channels

    def parameters(self) -> list[Tensor]:
        params = self.pre0.parameters() + self.pre1.parameters()
        for _, op in sorted(self.ops.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            params.extend(op.parameters())
        return params

    def forward(self, s0: Tensor, s1: Tensor, training: bool = True) -> Tensor:
        states: list[Tensor] = [self.pre0(s0, training), self.pre1(s1, training)]
        for dst in range(2, self.nodes - 1):
            sources = [src for src, d, _ in self.edge_list if d == dst]
            parts = [self.ops[(src, dst)](states[src], training) for src in sources]
            node = parts[0]
            for part in parts[1:]:
                node = node + part
            states.append(node)
        return F.concat_channels(states[2:])


class Network:
    """A trainable stack of discrete cells topped by a linear classifier."""

    def __init__(self, genotype: Genotype, cfg: SpaceConfig, seed: int = 0) -> None:
        cfg.validate()
        self.genotype = validate_genotype(genotype, nodes=cfg.n)
        self.cfg = cfg
        self.seed = int(seed)
        root = np.random.SeedSequence(self.seed)
        stem_ss, cls_ss, cells_ss = root.spawn(3)

        c = cfg.init_channels
        stem_rng = np.random.default_rng(stem_ss)
        self.stem_conv = _Conv(stem_rng, cfg.in_channels, c, 3, stride=1, padding=1)
        self.stem_bn = _BatchNorm(c, affine=True)

        reductions = set(cfg.resolved_reductions())
        self.cells: list[DiscreteCell] = []
        c_prev_prev, c_prev = c, c
        c_curr = c
        reduction_prev = False
        for index, cell_ss in enumerate(cells_ss.spawn(cfg.cells)):
            reduction = index in reductions
            if reduction:
                c_curr *= 2
            cell = DiscreteCell(
                edges=self.genotype.reduce if reduction else self.genotype.normal,
                nodes=cfg.n,
                channels=c_curr,
                c_prev_prev=c_prev_prev,
                c_prev=c_prev,
                reduction=reduction,
                reduction_prev=reduction_prev,
                seed=cell_ss,
            )
            self.cells.append(cell)
            c_prev_prev, c_prev = c_prev, cell.out_channels
            reduction_prev = reduction
        self.out_channels = c_prev

        cls_rng = np.random.default_rng(cls_ss)
        scale = 1.0 / np.sqrt(self.out_channels)
        self.classifier_w = Tensor(
            cls_rng.standard_normal((self.out_channels, cfg.num_classes)) * scale,
            requires_grad=True)
        self.classifier_b = Tensor(np.zeros(cfg.num_classes), requires_grad=True)

    def forward(self, x, training: bool = True) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ConfigError(f"expected input of shape (N, {self.cfg.in_channels}, "
                              f"H, W), got {x.shape}")
        s = self.stem_bn(self.stem_conv(x), training)
        s0 = s1 = s
        for cell in self.cells:
            s0, s1 = s1, cell.forward(s0, s1, training)
        pooled = F.global_avg_pool(s1)
        return F.linear(pooled, self.classifier_w, self.classifier_b)

    def parameters(self) -> list[Tensor]:
        params = self.stem_conv.parameters() + self.stem_bn.parameters()
        for cell in self.cells:
            params.extend(cell.parameters())
        params.extend([self.classifier_w, self.classifier_b])
        return params

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


def genotype_to_network(genotype: Genotype, cfg: SpaceConfig | None = None,
                        seed: int = 0) -> Network:
    """Build a trainable network; ``cfg=None`` infers the node count."""
    if cfg is None:
        cfg = SpaceConfig(n=infer_nodes(genotype))
    return Network(genotype, cfg, seed)
