"""Search algorithms: topology phase, operator phase, baseline, evaluation.

The pipeline searches in two phases. The topology phase builds a super-net
whose edges carry only a simple operator set (default: just the skip
connection, so the trainable state is beta alone), alternates
arch-on-validation / weights-on-training steps, and prunes each node to
its top-2 in-edges by beta. The operator phase either relabels every
retained edge with a fixed operator (``direct_replace``, the default
strategy — no training at all) or builds a mixed-operator super-net on the
retained edges only and searches alpha (``operator_search``). The joint
baseline (``darts_baseline_search``) runs the same loop on the full
edge-set super-net with the full candidate list; with a single-operator
candidate set it degenerates to the topology phase exactly, step for step.

All loops are first-order and deterministic per (config, seed): batch
order, initial weights and every update depend only on seeded generators.
Wall-clock time is measured but kept out of the loss traces.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError, GenotypeError, NumericalError
from .functional import cross_entropy
from .genotype import Genotype, validate_genotype
from .optim import SGD, Adam, CosineSchedule, zero_grad
from .supernet import (
    SpaceConfig,
    SuperNet,
    build_supernet,
    edges_from_genotype,
)
from .tensor import Tape, Tensor

__all__ = [
    "SearchBudget",
    "OptimizerSettings",
    "StepReport",
    "PhaseResult",
    "EvalReport",
    "bilevel_step",
    "topology_search",
    "operator_search",
    "direct_replace",
    "darts_baseline_search",
    "evaluate_architecture",
    "random_genotype",
    "parameter_free_fraction",
    "DEFAULT_TOPOLOGY_OPS",
    "PARAMETER_FREE_OPERATORS",
]

DEFAULT_TOPOLOGY_OPS = ("skip_connect",)
DEFAULT_REPLACE_OP = "sep_conv_3x3"
PARAMETER_FREE_OPERATORS = frozenset(
    {"skip_connect", "max_pool_3x3", "avg_pool_3x3", "none"})

BUDGET_UNITS = ("iterations", "epochs")


@dataclass(frozen=True)
class SearchBudget:
    """How long a search phase runs and how its data pool is divided."""

    unit: str = "iterations"
    amount: int = 1
    batch_size: int = 64
    train_fraction: float = 0.5
    val_fraction: float = 0.5

    def validate(self) -> None:
        if self.unit not in BUDGET_UNITS:
            raise ConfigError(f"budget unit must be one of {BUDGET_UNITS}, "
                              f"got {self.unit!r}")
        if int(self.amount) != self.amount or self.amount < 1:
            raise ConfigError(f"budget amount must be an integer >= 1, "
                              f"got {self.amount}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.train_fraction <= 0 or self.val_fraction <= 0:
            raise ConfigError("split fractions must be positive")
        if abs(self.train_fraction + self.val_fraction - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got "
                              f"{self.train_fraction} + {self.val_fraction}")


@dataclass(frozen=True)
class OptimizerSettings:
    """Learning hyperparameters: Adam for arch weights, SGD for kernels."""

    arch_lr: float = 3e-4
    arch_betas: tuple[float, float] = (0.5, 0.999)
    arch_weight_decay: float = 1e-3
    w_lr: float = 0.025
    w_momentum: float = 0.9
    w_weight_decay: float = 3e-4
    w_min_lr: float = 0.0


@dataclass(frozen=True)
class StepReport:
    """Losses of one alternating update."""

    train_loss: float
    val_loss: float
    arch_updated: bool
    w_updated: bool


@dataclass
class PhaseResult:
    """Outcome of one search phase."""

    phase: str
    genotype: Genotype
    steps: int
    wall_seconds: float
    loss_trace: list[dict] = field(default_factory=list)
    arch_snapshot: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class EvalReport:
    """From-scratch training record of a discrete architecture."""

    per_epoch: list[dict]
    final: dict
    wall_seconds: float

    def as_dict(self) -> dict:
        return {"per_epoch": self.per_epoch, "final": self.final,
                "wall_seconds": self.wall_seconds}


def _loss_value(loss) -> float:
    value = loss.item()
    if not np.isfinite(value):
        raise NumericalError(f"loss diverged to {value!r}")
    return value


def bilevel_step(net: SuperNet, train_batch, val_batch, arch_opt=None,
                 w_opt=None) -> StepReport:
    """One alternating update: arch params on the validation batch, then
    kernel weights on the training batch (first-order).

    When no optimizer is supplied a fresh plain-SGD one is used for that
    sub-step, which is only meaningful for single-step experiments. A
    skip-only net has no kernel weights, so its w sub-step reports the
    training loss without updating anything.
    """
    x_train, y_train = train_batch
    x_val, y_val = val_batch
    if len(y_train) == 0 or len(y_val) == 0:
        raise DataError("bilevel step needs nonempty train and validation batches")

    arch_params = net.arch_parameters()
    if arch_opt is None:
        arch_opt = SGD(arch_params, lr=0.01)
    with Tape() as tape:
        val_loss = cross_entropy(net.forward(Tensor(x_val)), y_val)
    value_val = _loss_value(val_loss)
    tape.backward(val_loss, arch_params)
    arch_opt.step()
    zero_grad(arch_params)

    w_params = net.weight_parameters()
    if w_params:
        if w_opt is None:
            w_opt = SGD(w_params, lr=0.01)
        with Tape() as tape:
            train_loss = cross_entropy(net.forward(Tensor(x_train)), y_train)
        value_train = _loss_value(train_loss)
        tape.backward(train_loss, w_params)
        w_opt.step()
        zero_grad(w_params)
        return StepReport(train_loss=value_train, val_loss=value_val,
                          arch_updated=True, w_updated=True)

    train_loss = cross_entropy(net.forward(Tensor(x_train)), y_train)
    return StepReport(train_loss=_loss_value(train_loss), val_loss=value_val,
                      arch_updated=True, w_updated=False)


def _check_data_shapes(data: Dataset, cfg: SpaceConfig) -> None:
    channels = data.image_shape[0]
    if channels != cfg.in_channels:
        raise ConfigError(f"dataset has {channels} channels but the space expects "
                          f"{cfg.in_channels}")
    if data.num_classes != cfg.num_classes:
        raise ConfigError(f"dataset has {data.num_classes} classes but the "
                          f"classifier expects {cfg.num_classes}")


def _search_pool(data: Dataset, budget: SearchBudget):
    x_a, y_a = data.split("search-train")
    x_b, y_b = data.split("search-val")
    x = np.concatenate([x_a, x_b])
    y = np.concatenate([y_a, y_b])
    if len(y) < 2:
        raise DataError("search pool is empty or too small to split")
    n_train = int(round(budget.train_fraction * len(y)))
    n_train = min(max(n_train, 1), len(y) - 1)
    return (x[:n_train], y[:n_train]), (x[n_train:], y[n_train:])


def _epoch_batches(count: int, batch_size: int, seed: int, stream: int,
                   epoch: int) -> list[np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream, epoch]))
    order = rng.permutation(count)
    return [order[i:i + batch_size] for i in range(0, count, batch_size)]


def _batch_stream(x: np.ndarray, y: np.ndarray, batch_size: int, seed: int,
                  stream: int):
    epoch = 0
    while True:
        for idx in _epoch_batches(len(y), batch_size, seed, stream, epoch):
            yield x[idx], y[idx]
        epoch += 1


def _run_search(phase: str, data: Dataset, cfg: SpaceConfig, op_names,
                budget: SearchBudget, seed: int, optim: OptimizerSettings,
                edges_by_type=None) -> PhaseResult:
    budget.validate()
    _check_data_shapes(data, cfg)
    (x_train, y_train), (x_val, y_val) = _search_pool(data, budget)

    steps_per_epoch = -(-len(y_train) // budget.batch_size)
    total_steps = (budget.amount if budget.unit == "iterations"
                   else budget.amount * steps_per_epoch)

    started = time.perf_counter()
    net = build_supernet(cfg, op_names, seed, edges_by_type=edges_by_type)
    arch_opt = Adam(net.arch_parameters(), lr=optim.arch_lr,
                    betas=optim.arch_betas, weight_decay=optim.arch_weight_decay)
    w_params = net.weight_parameters()
    w_opt = None
    w_schedule = None
    if w_params:
        w_opt = SGD(w_params, lr=optim.w_lr, momentum=optim.w_momentum,
                    weight_decay=optim.w_weight_decay)
        w_schedule = CosineSchedule(optim.w_lr, total_steps, min_lr=optim.w_min_lr)

    train_stream = _batch_stream(x_train, y_train, budget.batch_size, seed, 1)
    val_stream = _batch_stream(x_val, y_val, budget.batch_size, seed, 2)

    trace: list[dict] = []
    try:
        for step in range(total_steps):
            if w_opt is not None:
                w_schedule.apply(w_opt, step)
            report = bilevel_step(net, next(train_stream), next(val_stream),
                                  arch_opt, w_opt)
            trace.append({"step": step + 1,
                          "train_loss": report.train_loss,
                          "val_loss": report.val_loss})
    except NumericalError as exc:
        failure = NumericalError(f"{phase} phase aborted at step "
                                 f"{len(trace) + 1}: {exc}")
        failure.trace = trace
        raise failure from exc

    return PhaseResult(
        phase=phase,
        genotype=net.derive(),
        steps=total_steps,
        wall_seconds=time.perf_counter() - started,
        loss_trace=trace,
        arch_snapshot=net.arch.snapshot(),
    )


def topology_search(data: Dataset, cfg: SpaceConfig, budget: SearchBudget, *,
                    topo_ops=DEFAULT_TOPOLOGY_OPS, seed: int = 0,
                    optim: OptimizerSettings = OptimizerSettings()) -> PhaseResult:
    """First phase: learn beta over a simple-operator super-net, prune top-2."""
    return _run_search("topology", data, cfg, tuple(topo_ops), budget, seed, optim)


def darts_baseline_search(data: Dataset, cfg: SpaceConfig, budget: SearchBudget, *,
                          candidate_ops, seed: int = 0,
                          optim: OptimizerSettings = OptimizerSettings()
                          ) -> PhaseResult:
    """Joint alpha/beta/w search on the full super-net (first-order)."""
    return _run_search("joint", data, cfg, tuple(candidate_ops), budget, seed, optim)


def _checked_topology(topology: Genotype, cfg: SpaceConfig) -> Genotype:
    try:
        return validate_genotype(topology, nodes=cfg.n)
    except GenotypeError as exc:
        raise GenotypeError(f"invalid pruned topology: {exc}") from exc


def operator_search(topology: Genotype, data: Dataset, cfg: SpaceConfig,
                    budget: SearchBudget, *, candidate_ops, seed: int = 0,
                    optim: OptimizerSettings = OptimizerSettings()) -> PhaseResult:
    """Second phase (gradient strategy): alpha search on the retained edges."""
    topology = _checked_topology(topology, cfg)
    return _run_search("operator", data, cfg, tuple(candidate_ops), budget, seed,
                       optim, edges_by_type=edges_from_genotype(topology))


def direct_replace(topology: Genotype, op: str = DEFAULT_REPLACE_OP, *,
                   cfg: SpaceConfig | None = None) -> Genotype:
    """Second phase (default strategy): relabel every retained edge with ``op``."""
    if cfg is not None:
        topology = _checked_topology(topology, cfg)
    else:
        topology = validate_genotype(topology)
    name = op.value if hasattr(op, "value") else str(op)
    return topology.with_operator(name)


def random_genotype(nodes: int, seed: int, op_name: str = DEFAULT_REPLACE_OP
                    ) -> Genotype:
    """A uniformly random valid topology with every edge labeled ``op_name``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x70D0]))
    sections = []
    for _ in range(2):
        edges = []
        for dst in range(2, nodes - 1):
            for src in sorted(rng.choice(dst, size=2, replace=False).tolist()):
                edges.append((int(src), dst, op_name))
        sections.append(tuple(edges))
    return validate_genotype(Genotype(normal=sections[0], reduce=sections[1]),
                             nodes=nodes)


def parameter_free_fraction(genotype: Genotype) -> float:
    """Share of edges labeled with operators that carry no kernel weights."""
    ops = [op for _, _, op in genotype.normal + genotype.reduce]
    if not ops:
        raise GenotypeError("genotype has no edges")
    return sum(op in PARAMETER_FREE_OPERATORS for op in ops) / len(ops)


def _accuracy(net, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    if len(y) == 0:
        raise DataError("cannot score an empty split")
    correct = 0
    for start in range(0, len(y), batch_size):
        xb = x[start:start + batch_size]
        yb = y[start:start + batch_size]
        logits = net.forward(Tensor(xb), training=False)
        correct += int((np.argmax(logits.data, axis=1) == yb).sum())
    return correct / len(y)


def evaluate_architecture(genotype: Genotype, data: Dataset, cfg: SpaceConfig, *,
                          epochs: int = 20, batch_size: int = 64,
                          lr: float = 0.025, momentum: float = 0.9,
                          weight_decay: float = 3e-4, seed: int = 0) -> EvalReport:
    """Train the discrete network from scratch and score it per epoch.

    Scores are computed in evaluation mode on the ``eval-train``,
    ``search-val`` and ``test`` splits. Epoch 0 in the report is the
    untrained network. Deterministic per (genotype, cfg, seed).
    """
    from .network import Network

    _check_data_shapes(data, cfg)
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    started = time.perf_counter()
    net = Network(genotype, cfg, seed=seed)
    x_train, y_train = data.split("eval-train")
    x_val, y_val = data.split("search-val")
    x_test, y_test = data.split("test")

    params = net.parameters()
    opt = SGD(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    steps_per_epoch = -(-len(y_train) // batch_size)
    schedule = CosineSchedule(lr, max(epochs * steps_per_epoch, 1))

    # batch-norm running statistics need one training-mode pass before the
    # untrained network can be scored in evaluation mode
    warm = _epoch_batches(len(y_train), batch_size, seed, 3, 0)[0]
    net.forward(Tensor(x_train[warm]), training=True)

    def snapshot(epoch: int, train_loss: float | None) -> dict:
        entry = {
            "epoch": epoch,
            "train_acc": _accuracy(net, x_train, y_train),
            "val_acc": _accuracy(net, x_val, y_val),
            "test_acc": _accuracy(net, x_test, y_test),
        }
        if train_loss is not None:
            entry["train_loss"] = train_loss
        return entry

    per_epoch = [snapshot(0, None)]
    step = 0
    for epoch in range(1, epochs + 1):
        losses = []
        for idx in _epoch_batches(len(y_train), batch_size, seed, 4, epoch):
            schedule.apply(opt, step)
            with Tape() as tape:
                loss = cross_entropy(net.forward(Tensor(x_train[idx])),
                                     y_train[idx])
            losses.append(_loss_value(loss))
            tape.backward(loss, params)
            opt.step()
            zero_grad(params)
            step += 1
        per_epoch.append(snapshot(epoch, float(np.mean(losses))))

    return EvalReport(
        per_epoch=per_epoch,
        final=dict(per_epoch[-1]),
        wall_seconds=time.perf_counter() - started,
    )
