"""The continuous search space: cell super-nets over a DAG of latent states.

A cell is a DAG on ``n`` nodes: nodes 0 and 1 are inputs inherited from the
two previous cells, nodes ``2 .. n-2`` are intermediate states, and node
``n-1`` is the output (the channel concatenation of all intermediate
states). Every intermediate node receives one candidate edge from each
earlier node; an edge carries ``p`` candidate operators mixed by
softmax(alpha), and a node merges its in-edges by softmax(beta). With
``partial_channel_K > 1`` only a fixed ``ceil(C/K)``-channel subset flows
through the operator mix while the remaining channels bypass unchanged
(downsampled by a 2x2 max pool on stride-2 edges).

Search-phase convention: the stem, the cell preprocessing blocks and the
classifier are built with seeded weights and kept frozen, so the trainable
state of a super-net is exactly the architecture weights plus the candidate
operators' own kernels. In particular a skip-only super-net trains nothing
but beta. Evaluation networks (see :mod:`ftso.network`) are fully
trainable instead.

Derivation prunes every intermediate node to its ``retain`` strongest
in-edges by beta (ties prefer the lower source index) and labels each kept
edge with its argmax-alpha operator, excluding ``none`` (ties prefer the
earlier operator in the candidate list). The result depends only on the
ordering of the architecture weights, never on their magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .errors import ConfigError, GenotypeError, ShapeError
from .genotype import Genotype
from .ops import (
    FactorizedReduce,
    Identity,
    Operator,
    OperatorKind,
    ReLUConvBN,
    _BatchNorm,
    _Conv,
    is_operator_name,
    make_operator,
)
from .tensor import Tensor

__all__ = [
    "CELL_TYPES",
    "SpaceConfig",
    "ArchParams",
    "MixedEdge",
    "Cell",
    "SuperNet",
    "build_supernet",
    "derive_genotype",
    "edge_list",
    "edges_from_genotype",
    "group_in_edges",
]

CELL_TYPES: tuple[str, str] = ("normal", "reduce")

EdgeId = tuple[int, int]


def edge_list(nodes: int) -> tuple[EdgeId, ...]:
    """All candidate edges ``(source, target)`` of an ``nodes``-node cell.

    Targets are the intermediate nodes ``2 .. nodes-2``; each receives one
    edge from every earlier node. Sorted by (target, source).
    """
    if nodes < 4:
        raise ConfigError(f"a cell needs at least 4 nodes, got {nodes}")
    return tuple((src, dst) for dst in range(2, nodes - 1) for src in range(dst))


def group_in_edges(edges: tuple[EdgeId, ...]) -> dict[int, tuple[EdgeId, ...]]:
    """Group a (target, source)-sorted edge tuple by target node."""
    grouped: dict[int, list[EdgeId]] = {}
    for src, dst in edges:
        grouped.setdefault(dst, []).append((src, dst))
    return {dst: tuple(lst) for dst, lst in grouped.items()}


def _normalize_edges(edges, nodes: int) -> tuple[EdgeId, ...]:
    seen = set()
    for edge in edges:
        src, dst = int(edge[0]), int(edge[1])
        if not 0 <= src < dst:
            raise ConfigError(f"edge ({src}, {dst}) does not run forward")
        if not 2 <= dst <= nodes - 2:
            raise ConfigError(f"edge target {dst} is not an intermediate node of a "
                              f"{nodes}-node cell")
        if (src, dst) in seen:
            raise ConfigError(f"duplicate edge ({src}, {dst})")
        seen.add((src, dst))
    targets = {dst for _, dst in seen}
    missing = sorted(set(range(2, nodes - 1)) - targets)
    if missing:
        raise ConfigError(f"intermediate nodes {missing} have no in-edges")
    return tuple(sorted(seen, key=lambda e: (e[1], e[0])))


def edges_from_genotype(genotype: Genotype) -> dict[str, tuple[EdgeId, ...]]:
    """The retained ``(source, target)`` pairs of each cell type."""
    return {
        "normal": tuple((src, dst) for src, dst, _ in genotype.normal),
        "reduce": tuple((src, dst) for src, dst, _ in genotype.reduce),
    }


def _normalize_op_names(candidate_ops) -> tuple[str, ...]:
    # Repeats are allowed: a uniform-cost space (the analytic model's
    # assumption) is p independently seeded copies of the same operator.
    names: list[str] = []
    for op in candidate_ops:
        name = op.value if isinstance(op, OperatorKind) else str(op)
        if not is_operator_name(name):
            raise ConfigError(f"unknown operator name: {name!r}")
        names.append(name)
    if not names:
        raise ConfigError("the candidate operator set is empty")
    return tuple(names)


@dataclass(frozen=True)
class SpaceConfig:
    """Static description of a cell search space.

    ``n`` is the per-cell node count (two inputs, ``n - 3`` intermediates,
    one output). ``p`` is the candidate-operator count; ``None`` means
    "take it from the candidate list at build time". ``reduction_positions``
    of ``None`` selects the thirds rule: cells ``cells // 3`` and
    ``2 * cells // 3`` reduce when there are at least three cells, none
    otherwise. ``arch_noise > 0`` initialises the architecture weights with
    seeded Gaussian noise of that scale instead of zeros.
    """

    n: int = 7
    p: int | None = None
    cells: int = 1
    reduction_positions: tuple[int, ...] | None = None
    init_channels: int = 16
    partial_channel_K: int = 1
    in_channels: int = 3
    num_classes: int = 10
    arch_noise: float = 0.0

    def validate(self) -> None:
        if self.n < 4:
            raise ConfigError(f"a cell needs at least 4 nodes, got n={self.n}")
        if self.p is not None and self.p < 1:
            raise ConfigError(f"candidate-operator count must be >= 1, got p={self.p}")
        if self.cells < 1:
            raise ConfigError(f"need at least one cell, got cells={self.cells}")
        if self.init_channels < 1:
            raise ConfigError(f"init_channels must be >= 1, got {self.init_channels}")
        if self.partial_channel_K < 1:
            raise ConfigError(
                f"partial_channel_K must be >= 1, got {self.partial_channel_K}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if not (self.arch_noise >= 0.0 and math.isfinite(self.arch_noise)):
            raise ConfigError(f"arch_noise must be a finite value >= 0, "
                              f"got {self.arch_noise}")
        for pos in self.resolved_reductions():
            if not 0 <= pos < self.cells:
                raise ConfigError(f"reduction position {pos} outside 0..{self.cells - 1}")

    def resolved_reductions(self) -> tuple[int, ...]:
        if self.reduction_positions is not None:
            positions = tuple(sorted(set(int(p) for p in self.reduction_positions)))
            return positions
        if self.cells >= 3:
            return (self.cells // 3, 2 * self.cells // 3)
        return ()


class ArchParams:
    """Architecture weights for both cell types of one search space.

    ``beta[cell_type][node]`` is a vector over the node's in-edges (in
    (target, source) order); ``alpha[cell_type][(src, dst)]`` is a vector
    over the candidate operators. With a single candidate operator no alpha
    is allocated — the operator choice carries no degrees of freedom.
    """

    def __init__(self, nodes: int, op_names, *,
                 edges_by_type: dict[str, tuple[EdgeId, ...]] | None = None,
                 rng: np.random.Generator | None = None,
                 noise: float = 0.0) -> None:
        if nodes < 4:
            raise ConfigError(f"a cell needs at least 4 nodes, got {nodes}")
        self.nodes = int(nodes)
        self.op_names = _normalize_op_names(op_names)
        if noise > 0.0 and rng is None:
            raise ConfigError("noisy initialisation needs a random generator")
        full = edge_list(self.nodes)
        self.edges: dict[str, tuple[EdgeId, ...]] = {}
        self.in_edges: dict[str, dict[int, tuple[EdgeId, ...]]] = {}
        self.beta: dict[str, dict[int, Tensor]] = {}
        self.alpha: dict[str, dict[EdgeId, Tensor]] = {}

        def init(size: int) -> np.ndarray:
            if noise > 0.0:
                return rng.normal(0.0, noise, size)
            return np.zeros(size)

        for cell_type in CELL_TYPES:
            if edges_by_type is None:
                edges = full
            elif cell_type not in edges_by_type:
                raise ConfigError(f"edges_by_type is missing the {cell_type!r} group")
            else:
                edges = _normalize_edges(edges_by_type[cell_type], self.nodes)
            self.edges[cell_type] = edges
            self.in_edges[cell_type] = group_in_edges(edges)
            self.beta[cell_type] = {
                dst: Tensor(init(len(in_edges)), requires_grad=True)
                for dst, in_edges in self.in_edges[cell_type].items()
            }
            self.alpha[cell_type] = {}
            if self.num_ops > 1:
                for edge in edges:
                    self.alpha[cell_type][edge] = Tensor(init(self.num_ops),
                                                         requires_grad=True)

    @property
    def num_ops(self) -> int:
        return len(self.op_names)

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for cell_type in CELL_TYPES:
            for dst in sorted(self.beta[cell_type]):
                params.append(self.beta[cell_type][dst])
            for edge in self.edges[cell_type]:
                if edge in self.alpha[cell_type]:
                    params.append(self.alpha[cell_type][edge])
        return params

    def snapshot(self) -> dict[str, np.ndarray]:
        state: dict[str, np.ndarray] = {}
        for cell_type in CELL_TYPES:
            for dst, beta in self.beta[cell_type].items():
                state[f"beta.{cell_type}.{dst}"] = beta.data.copy()
            for (src, dst), alpha in self.alpha[cell_type].items():
                state[f"alpha.{cell_type}.{src}.{dst}"] = alpha.data.copy()
        return state

    def load(self, state: dict[str, np.ndarray]) -> None:
        expected = self.snapshot().keys()
        if set(state.keys()) != set(expected):
            raise ConfigError("architecture snapshot does not match this space")
        for cell_type in CELL_TYPES:
            for dst, beta in self.beta[cell_type].items():
                value = np.asarray(state[f"beta.{cell_type}.{dst}"], dtype=np.float64)
                if value.shape != beta.data.shape:
                    raise ConfigError(f"bad shape for beta.{cell_type}.{dst}")
                beta.data = value.copy()
            for (src, dst), alpha in self.alpha[cell_type].items():
                value = np.asarray(state[f"alpha.{cell_type}.{src}.{dst}"],
                                   dtype=np.float64)
                if value.shape != alpha.data.shape:
                    raise ConfigError(f"bad shape for alpha.{cell_type}.{src}.{dst}")
                alpha.data = value.copy()


def derive_genotype(arch: ArchParams, retain: int = 2) -> Genotype:
    """Discretise architecture weights into a genotype.

    Per intermediate node keep the ``retain`` in-edges with the largest
    beta (ties: lower source index first); per kept edge assign the
    operator with the largest alpha, excluding ``none`` (ties: earlier
    position in the candidate list). Depends only on the ordering of the
    weights, so any strictly increasing transform of beta or alpha leaves
    the result unchanged.
    """
    if retain < 1:
        raise GenotypeError(f"retain must be >= 1, got {retain}")
    sections: dict[str, tuple] = {}
    for cell_type in CELL_TYPES:
        chosen = []
        for dst in sorted(arch.in_edges[cell_type]):
            in_edges = arch.in_edges[cell_type][dst]
            if retain > len(in_edges):
                raise GenotypeError(
                    f"retain={retain} exceeds the {len(in_edges)} predecessors of "
                    f"node {dst} in the {cell_type} cell")
            beta = arch.beta[cell_type][dst].data
            order = sorted(range(len(in_edges)),
                           key=lambda pos: (-beta[pos], in_edges[pos][0]))
            for pos in sorted(order[:retain]):
                src, _ = in_edges[pos]
                chosen.append((src, dst, _best_operator(arch, cell_type, (src, dst))))
        sections[cell_type] = tuple(chosen)
    return Genotype(normal=sections["normal"], reduce=sections["reduce"])


def _best_operator(arch: ArchParams, cell_type: str, edge: EdgeId) -> str:
    none = OperatorKind.ZERO.value
    candidates = [(idx, name) for idx, name in enumerate(arch.op_names) if name != none]
    if not candidates:
        raise GenotypeError("cannot derive a genotype: every candidate operator "
                            "is 'none'")
    if arch.num_ops == 1:
        return candidates[0][1]
    alpha = arch.alpha[cell_type][edge].data
    best_idx, best_name = candidates[0]
    for idx, name in candidates[1:]:
        if alpha[idx] > alpha[best_idx]:
            best_idx, best_name = idx, name
    return best_name


class MixedEdge:
    """One candidate edge: ``p`` operator instances plus the channel mask.

    With ``k == 1`` every channel flows through the operator mix and the
    forward equals the plain mixture sum(softmax(alpha)_o * o(x)) — no
    routing happens, so the two are bitwise identical. With ``k > 1`` a
    fixed, seeded ``ceil(C/k)``-channel subset feeds the mix while the
    remaining channels bypass unchanged (2x2 max-pooled on stride-2 edges);
    each channel keeps its original position in the output.
    """

    def __init__(self, op_names, channels: int, stride: int, k: int,
                 rng: np.random.Generator, affine: bool = False) -> None:
        self.op_names = _normalize_op_names(op_names)
        self.channels = int(channels)
        self.stride = int(stride)
        self.k = int(k)
        if self.k < 1:
            raise ConfigError(f"partial-channel divisor must be >= 1, got {k}")
        if self.k == 1:
            self.selected = np.arange(self.channels, dtype=np.intp)
            self.bypassed = np.empty(0, dtype=np.intp)
        else:
            count = -(-self.channels // self.k)
            if count >= self.channels:
                raise ConfigError(f"partial channels need at least 2 channels at "
                                  f"k={self.k}, got {self.channels}")
            perm = rng.permutation(self.channels)
            self.selected = np.sort(perm[:count]).astype(np.intp)
            self.bypassed = np.sort(perm[count:]).astype(np.intp)
        width = len(self.selected)
        self.ops: list[Operator] = [
            make_operator(name, width, width, self.stride, rng, affine=affine)
            for name in self.op_names
        ]

    @property
    def mask(self) -> np.ndarray:
        mask = np.zeros(self.channels, dtype=bool)
        mask[self.selected] = True
        return mask

    def parameters(self) -> list[Tensor]:
        return [p for op in self.ops for p in op.parameters()]

    def op_outputs(self, x: Tensor, training: bool = True) -> list[Tensor]:
        """Each candidate's output on the full input (only valid at k=1)."""
        if self.k != 1:
            raise ConfigError("full-width operator outputs need k=1")
        self._check_input(x)
        return [op(x, training) for op in self.ops]

    def forward(self, x: Tensor, alpha_row: Tensor | None,
                training: bool = True) -> Tensor:
        self._check_input(x)
        weights = self._mix_weights(alpha_row)
        if self.k == 1:
            if weights is None:
                return self.ops[0](x, training)
            return F.weighted_sum(weights, [op(x, training) for op in self.ops])
        selected = F.take_channels(x, self.selected)
        if weights is None:
            mixed = self.ops[0](selected, training)
        else:
            mixed = F.weighted_sum(weights, [op(selected, training) for op in self.ops])
        bypass = F.take_channels(x, self.bypassed)
        if self.stride == 2:
            if x.shape[2] % 2 or x.shape[3] % 2:
                raise ShapeError(
                    f"partial-channel bypass on a stride-2 edge needs even spatial "
                    f"extents, got {x.shape}")
            bypass = F.max_pool2d(bypass, 2, stride=2)
        return F.place_channels([mixed, bypass], [self.selected, self.bypassed],
                                self.channels)

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"mixed edge expects {self.channels} channels, "
                             f"got input of shape {x.shape}")

    def _mix_weights(self, alpha_row: Tensor | None) -> Tensor | None:
        if len(self.ops) == 1:
            return None
        if alpha_row is None:
            raise ShapeError(f"an alpha row of length {len(self.ops)} is required")
        if alpha_row.ndim != 1 or alpha_row.size != len(self.ops):
            raise ShapeError(f"alpha row must have length {len(self.ops)}, "
                             f"got shape {alpha_row.shape}")
        return F.softmax(alpha_row, axis=-1)


class Cell:
    """One cell instance: preprocessing of the two inputs plus the edge DAG.

    ``body`` runs the DAG on already-preprocessed inputs; ``forward``
    applies the preprocessing first. The split lets cost accounting
    attribute exactly the in-cell work to the cell.

    With ``k == 1`` each node is computed as a single weighted merge over
    all (in-edge, operator) outputs with flattened weights
    softmax(beta)_i * softmax(alpha_i)_o, which is numerically the nested
    two-level mixture and makes the measured merge cost exactly
    (in-degree * p) additions per output element.
    """

    def __init__(self, *, nodes: int, op_names, channels: int, c_prev_prev: int,
                 c_prev: int, reduction: bool, reduction_prev: bool,
                 edges: tuple[EdgeId, ...], k: int, seed: np.random.SeedSequence,
                 affine: bool = False) -> None:
        self.nodes = int(nodes)
        self.channels = int(channels)
        self.reduction = bool(reduction)
        self.cell_type = "reduce" if reduction else "normal"
        self.edge_ids = edges
        self.in_edges = group_in_edges(edges)
        pre_ss, edges_ss = seed.spawn(2)
        pre_rng = np.random.default_rng(pre_ss)
        self.pre0 = self._preprocess(pre_rng, c_prev_prev, reduction_prev, affine)
        self.pre1 = self._preprocess(pre_rng, c_prev, False, affine)
        children = edges_ss.spawn(len(edges))
        self.edges: dict[EdgeId, MixedEdge] = {}
        for (src, dst), child in zip(edges, children):
            stride = 2 if self.reduction and src < 2 else 1
            self.edges[(src, dst)] = MixedEdge(op_names, channels, stride, k,
                                               np.random.default_rng(child),
                                               affine=affine)

    def _preprocess(self, rng: np.random.Generator, c_in: int,
                    spatial_halved: bool, affine: bool) -> Operator:
        if spatial_halved:
            return FactorizedReduce(rng, c_in, self.channels, affine)
        if c_in == self.channels:
            return Identity()
        return ReLUConvBN(rng, c_in, self.channels, 1, 1, affine)

    @property
    def out_channels(self) -> int:
        return (self.nodes - 3) * self.channels

    def operator_instances(self) -> int:
        return sum(len(edge.ops) for edge in self.edges.values())

    def parameters(self) -> list[Tensor]:
        return [p for edge in self.edges.values() for p in edge.parameters()]

    def preprocess_parameters(self) -> list[Tensor]:
        return self.pre0.parameters() + self.pre1.parameters()

    def forward(self, s0: Tensor, s1: Tensor, arch: ArchParams,
                training: bool = True) -> Tensor:
        return self.body(self.pre0(s0, training), self.pre1(s1, training),
                         arch, training)

    def body(self, h0: Tensor, h1: Tensor, arch: ArchParams,
             training: bool = True) -> Tensor:
        if arch.edges[self.cell_type] != self.edge_ids:
            raise ConfigError("architecture parameters do not match this cell's edges")
        states: list[Tensor] = [h0, h1]
        flat = all(edge.k == 1 for edge in self.edges.values())
        for dst in range(2, self.nodes - 1):
            in_edges = self.in_edges[dst]
            beta_weights = F.softmax(arch.beta[self.cell_type][dst], axis=-1)
            if flat:
                states.append(self._node_flat(states, in_edges, beta_weights,
                                              arch, training))
            else:
                merged = [
                    self.edges[edge].forward(
                        states[edge[0]],
                        arch.alpha[self.cell_type].get(edge),
                        training,
                    )
                    for edge in in_edges
                ]
                states.append(F.weighted_sum(beta_weights, merged))
        return F.concat_channels(states[2:])

    def _node_flat(self, states: list[Tensor], in_edges: tuple[EdgeId, ...],
                   beta_weights: Tensor, arch: ArchParams,
                   training: bool) -> Tensor:
        terms: list[Tensor] = []
        parts: list[Tensor] = []
        for pos, edge in enumerate(in_edges):
            mixed_edge = self.edges[edge]
            terms.extend(mixed_edge.op_outputs(states[edge[0]], training))
            if arch.num_ops > 1:
                alpha_w = F.softmax(arch.alpha[self.cell_type][edge], axis=-1)
                parts.append(F.take_slice(beta_weights, [pos]) * alpha_w)
        weights = beta_weights if arch.num_ops == 1 else F.concat_vector(parts)
        return F.weighted_sum(weights, terms)


def _freeze(params: list[Tensor]) -> None:
    for p in params:
        p.requires_grad = False


class SuperNet:
    """A stack of cells sharing one set of architecture weights per type.

    The stem (3x3 conv + batch norm), the per-cell preprocessing and the
    linear classifier are seeded and frozen; gradient steps reach only the
    architecture weights and the candidate operators' kernels. Channels
    double at every reduction cell.
    """

    def __init__(self, cfg: SpaceConfig, candidate_ops, seed: int = 0, *,
                 edges_by_type: dict[str, tuple[EdgeId, ...]] | None = None) -> None:
        cfg.validate()
        self.cfg = cfg
        self.op_names = _normalize_op_names(candidate_ops)
        if cfg.p is not None and cfg.p != len(self.op_names):
            raise ConfigError(f"cfg.p={cfg.p} but {len(self.op_names)} candidate "
                              f"operators were given")
        self.seed = int(seed)
        root = np.random.SeedSequence(self.seed)
        stem_ss, arch_ss, cls_ss, cells_ss = root.spawn(4)

        stem_rng = np.random.default_rng(stem_ss)
        c = cfg.init_channels
        self.stem_conv = _Conv(stem_rng, cfg.in_channels, c, 3, stride=1, padding=1)
        self.stem_bn = _BatchNorm(c, affine=False)

        self.arch = ArchParams(cfg.n, self.op_names, edges_by_type=edges_by_type,
                               rng=np.random.default_rng(arch_ss),
                               noise=cfg.arch_noise)

        reductions = set(cfg.resolved_reductions())
        self.cells: list[Cell] = []
        c_prev_prev, c_prev = c, c
        c_curr = c
        reduction_prev = False
        for index, cell_ss in enumerate(cells_ss.spawn(cfg.cells)):
            reduction = index in reductions
            if reduction:
                c_curr *= 2
            cell = Cell(
                nodes=cfg.n,
                op_names=self.op_names,
                channels=c_curr,
                c_prev_prev=c_prev_prev,
                c_prev=c_prev,
                reduction=reduction,
                reduction_prev=reduction_prev,
                edges=self.arch.edges["reduce" if reduction else "normal"],
                k=cfg.partial_channel_K,
                seed=cell_ss,
                affine=False,
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

        _freeze(self.stem_conv.parameters())
        for cell in self.cells:
            _freeze(cell.preprocess_parameters())
        _freeze([self.classifier_w, self.classifier_b])

    def forward(self, x, training: bool = True) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"expected input of shape (N, {self.cfg.in_channels}, "
                             f"H, W), got {x.shape}")
        s = self.stem_bn(self.stem_conv(x), training)
        s0 = s1 = s
        for cell in self.cells:
            s0, s1 = s1, cell.forward(s0, s1, self.arch, training)
        pooled = F.global_avg_pool(s1)
        return F.linear(pooled, self.classifier_w, self.classifier_b)

    def arch_parameters(self) -> list[Tensor]:
        return self.arch.parameters()

    def weight_parameters(self) -> list[Tensor]:
        return [p for cell in self.cells for p in cell.parameters()]

    def trainable_parameters(self) -> list[Tensor]:
        return self.arch_parameters() + self.weight_parameters()

    def operator_instances(self) -> int:
        return self.cells[0].operator_instances()

    def derive(self, retain: int = 2) -> Genotype:
        return derive_genotype(self.arch, retain)


def build_supernet(cfg: SpaceConfig, candidate_ops, seed: int = 0, *,
                   edges_by_type: dict[str, tuple[EdgeId, ...]] | None = None
                   ) -> SuperNet:
    """Construct a super-net with seeded weights and zero (or noisy) arch params."""
    return SuperNet(cfg, candidate_ops, seed, edges_by_type=edges_by_type)
