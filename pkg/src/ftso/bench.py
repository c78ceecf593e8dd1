"""Tabular search-policy harness over a tiny fixed cell space.

The space has one input node, three intermediate nodes, an output node,
and an operator-bearing edge from every predecessor to every intermediate
node: six edges, five candidate operators, 5**6 = 15,625 cells. An
:class:`AccuracyTable` maps every cell to a precomputed accuracy triple
(one value per dataset key), so search policies can be compared without
training anything.

Policies share one update rule — replicator ascent on per-edge marginal
utilities read from the table — and differ only in how fast each
operator's utility becomes visible. Joint-relaxation baselines
(``darts1st``, ``darts2nd-proxy``) see an operator's utility through a
maturity curve ``1 - exp(-(t+1)/tau)``: parameter-free operators mature
immediately while convolutions ramp slowly, which reproduces the
rich-get-richer pathology on tables where convolutions ultimately win.
The ``ftso`` policy fixes the topology up front and either relabels every
edge with the strongest operator (default) or runs the same ascent with
maturities switched off, since a per-edge search trains each candidate
equally.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, GenotypeError

__all__ = [
    "TABULAR_OPS",
    "TABULAR_EDGES",
    "DATASET_KEYS",
    "POLICIES",
    "cell_string",
    "parse_cell",
    "enumerate_space",
    "AccuracyTable",
    "load_table",
    "save_table",
    "monotone_table",
    "skip_biased_table",
    "exhaustive_best",
    "regret",
    "tabular_search",
    "TabularResult",
]

TABULAR_OPS = ("none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3",
               "avg_pool_3x3")
# every intermediate node (1..3) receives one operator edge per predecessor
TABULAR_EDGES = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))
DATASET_KEYS = ("cifar10", "cifar100", "imagenet16")
POLICIES = ("ftso", "darts1st", "darts2nd-proxy", "random")

SPACE_SIZE = len(TABULAR_OPS) ** len(TABULAR_EDGES)

# maturity time constants: how many surrogate steps an operator needs
# before its table utility is actually visible to a joint relaxation
_MATURITY_TAU = {"none": 1.0, "skip_connect": 1.0, "avg_pool_3x3": 1.0,
                 "nor_conv_1x1": 10.0, "nor_conv_3x3": 40.0}
_STRONGEST_OP = "nor_conv_3x3"


def cell_string(ops) -> str:
    """Canonical text form, e.g. ``|none~0|+|none~0|none~1|+|...|``."""
    ops = tuple(ops)
    if len(ops) != len(TABULAR_EDGES):
        raise GenotypeError(f"need {len(TABULAR_EDGES)} operators, got {len(ops)}")
    unknown = [op for op in ops if op not in TABULAR_OPS]
    if unknown:
        raise GenotypeError(f"unknown operator {unknown[0]!r}")
    groups = []
    position = 0
    for node in (1, 2, 3):
        entries = [f"{ops[position + src]}~{src}" for src in range(node)]
        position += node
        groups.append("|" + "|".join(entries) + "|")
    return "+".join(groups)


def parse_cell(text: str) -> tuple[str, ...]:
    """Inverse of :func:`cell_string`, with precise complaints."""
    groups = text.strip().split("+")
    if len(groups) != 3:
        raise GenotypeError(f"expected 3 node groups separated by '+', "
                            f"got {len(groups)}")
    ops: list[str] = []
    for node, group in enumerate(groups, start=1):
        if not (group.startswith("|") and group.endswith("|") and len(group) > 2):
            raise GenotypeError(f"node {node} group must be enclosed in '|', "
                                f"got {group!r}")
        entries = group[1:-1].split("|")
        if len(entries) != node:
            raise GenotypeError(f"node {node} must have {node} entries, "
                                f"got {len(entries)}")
        for src, entry in enumerate(entries):
            op, sep, tag = entry.partition("~")
            if not sep or tag != str(src):
                raise GenotypeError(f"entry {entry!r} in node {node} must be "
                                    f"tagged '~{src}'")
            if op not in TABULAR_OPS:
                raise GenotypeError(f"unknown operator {op!r} in node {node}")
            ops.append(op)
    return tuple(ops)


@functools.lru_cache(maxsize=1)
def enumerate_space() -> tuple[str, ...]:
    """All 15,625 cells in canonical (lexicographic operator-index) order."""
    return tuple(cell_string(ops) for ops
                 in itertools.product(TABULAR_OPS, repeat=len(TABULAR_EDGES)))


@dataclass
class AccuracyTable:
    """Total map from cell string to a per-dataset accuracy triple."""

    accuracies: dict[str, tuple[float, float, float]]

    def __post_init__(self) -> None:
        space = enumerate_space()
        missing = [cell for cell in space if cell not in self.accuracies]
        if missing:
            raise DataError(f"table is missing {len(missing)} of {SPACE_SIZE} "
                            f"cells (first missing: {missing[0]})")
        if len(self.accuracies) != SPACE_SIZE:
            extra = sorted(set(self.accuracies) - set(space))
            raise DataError(f"table has {len(extra)} entries outside the space "
                            f"(first: {extra[0]})")
        for cell, triple in self.accuracies.items():
            triple = tuple(float(v) for v in triple)
            if len(triple) != 3:
                raise DataError(f"cell {cell} needs 3 accuracies, got {len(triple)}")
            if any(not (0.0 <= v <= 100.0) for v in triple):
                raise DataError(f"cell {cell} has accuracy outside [0, 100]: {triple}")
            self.accuracies[cell] = triple
        self._vectors: dict[int, np.ndarray] = {}

    def lookup(self, cell: str, dataset: str | None = None):
        if cell not in self.accuracies:
            raise DataError(f"unknown cell: {cell}")
        triple = self.accuracies[cell]
        return triple if dataset is None else triple[_dataset_index(dataset)]

    def vector(self, dataset: str) -> np.ndarray:
        """Accuracies of the whole space in canonical order."""
        idx = _dataset_index(dataset)
        if idx not in self._vectors:
            self._vectors[idx] = np.array(
                [self.accuracies[cell][idx] for cell in enumerate_space()])
        return self._vectors[idx]


def _dataset_index(dataset: str) -> int:
    if dataset not in DATASET_KEYS:
        raise ConfigError(f"unknown dataset key {dataset!r}; expected one of "
                          f"{DATASET_KEYS}")
    return DATASET_KEYS.index(dataset)


def save_table(table: AccuracyTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cell in enumerate_space():
            a, b, c = table.accuracies[cell]
            fh.write(f"{cell}\t{a!r}\t{b!r}\t{c!r}\n")


def load_table(path) -> AccuracyTable:
    accuracies: dict[str, tuple[float, float, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise DataError(f"line {number}: expected 4 tab-separated "
                                f"fields, got {len(fields)}")
            try:
                cell = cell_string(parse_cell(fields[0]))
            except GenotypeError as exc:
                raise DataError(f"line {number}: {exc}") from exc
            try:
                triple = tuple(float(v) for v in fields[1:])
            except ValueError as exc:
                raise DataError(f"line {number}: invalid accuracy value: "
                                f"{exc}") from exc
            if cell in accuracies:
                raise DataError(f"line {number}: duplicate cell {cell}")
            accuracies[cell] = triple
    return AccuracyTable(accuracies)


def _counts(ops, target: str) -> int:
    return sum(op == target for op in ops)


def monotone_table() -> AccuracyTable:
    """Accuracy = 10 x (number of 3x3 convolution edges), every dataset."""
    accuracies = {}
    for cell, ops in zip(enumerate_space(),
                         itertools.product(TABULAR_OPS, repeat=len(TABULAR_EDGES))):
        value = 10.0 * _counts(ops, "nor_conv_3x3")
        accuracies[cell] = (value, value, value)
    return AccuracyTable(accuracies)


def skip_biased_table(seed: int = 0) -> AccuracyTable:
    """Skip connections look strong per edge, but convolutions win overall."""
    weight = {"none": 0.0, "skip_connect": 4.5, "nor_conv_1x1": 3.0,
              "nor_conv_3x3": 6.0, "avg_pool_3x3": 1.0}
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7AB]))
    noise = rng.normal(0.0, 0.2, size=(SPACE_SIZE, 3))
    accuracies = {}
    cells = enumerate_space()
    for row, ops in enumerate(itertools.product(TABULAR_OPS,
                                                repeat=len(TABULAR_EDGES))):
        base = 40.0 + sum(weight[op] for op in ops)
        accuracies[cells[row]] = tuple(
            float(np.clip(base + noise[row, col], 0.0, 100.0)) for col in range(3))
    return AccuracyTable(accuracies)


def exhaustive_best(table: AccuracyTable, dataset: str) -> str:
    """Argmax cell over the whole space; ties go to canonical order."""
    values = table.vector(dataset)
    return enumerate_space()[int(np.argmax(values))]


def regret(table: AccuracyTable, dataset: str, cell: str) -> float:
    """Accuracy gap to the exhaustive optimum (always >= 0)."""
    best = table.lookup(exhaustive_best(table, dataset), dataset)
    return float(best - table.lookup(cell_string(parse_cell(cell)), dataset))


@dataclass(frozen=True)
class TabularResult:
    policy: str
    dataset: str
    cell: str
    accuracies: tuple[float, float, float]


def _marginal_utilities(table: AccuracyTable, dataset: str) -> np.ndarray:
    """[edges, ops] mean accuracy of all cells holding that op on that edge."""
    grid = table.vector(dataset).reshape((len(TABULAR_OPS),) * len(TABULAR_EDGES))
    utilities = np.empty((len(TABULAR_EDGES), len(TABULAR_OPS)))
    for edge in range(len(TABULAR_EDGES)):
        axes = tuple(ax for ax in range(len(TABULAR_EDGES)) if ax != edge)
        utilities[edge] = grid.mean(axis=axes)
    return utilities


def _replicator_choice(utilities: np.ndarray, budget: int, tau_scale: float,
                       lr: float = 0.05) -> tuple[str, ...]:
    """Per-edge replicator ascent on maturity-filtered utilities."""
    taus = np.array([_MATURITY_TAU[op] for op in TABULAR_OPS]) * tau_scale
    alphas = np.zeros_like(utilities)
    for t in range(budget):
        if tau_scale <= 0.0:
            visible = utilities
        else:
            visible = utilities * (1.0 - np.exp(-(t + 1) / taus))
        probs = np.exp(alphas - alphas.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        mean = (probs * visible).sum(axis=1, keepdims=True)
        alphas += lr * probs * (visible - mean)
    return tuple(TABULAR_OPS[int(np.argmax(row))] for row in alphas)


def tabular_search(policy: str, dataset: str, table: AccuracyTable,
                   budget: int = 25, seed: int = 0, *,
                   ftso_strategy: str = "replace") -> TabularResult:
    """Run one search policy against the table and return its chosen cell."""
    _dataset_index(dataset)
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")

    if policy == "random":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBE7]))
        ops = tuple(TABULAR_OPS[i] for i in
                    rng.integers(0, len(TABULAR_OPS), size=len(TABULAR_EDGES)))
    elif policy == "ftso":
        if ftso_strategy == "replace":
            ops = (_STRONGEST_OP,) * len(TABULAR_EDGES)
        elif ftso_strategy == "gradient":
            # the topology is fixed, so every operator trains equally:
            # same ascent, maturities switched off
            utilities = _marginal_utilities(table, dataset)
            ops = _replicator_choice(utilities, budget, tau_scale=0.0)
        else:
            raise ConfigError(f"unknown ftso strategy {ftso_strategy!r}; "
                              f"expected 'replace' or 'gradient'")
    else:
        tau_scale = 1.0 if policy == "darts1st" else 0.25
        utilities = _marginal_utilities(table, dataset)
        ops = _replicator_choice(utilities, budget, tau_scale=tau_scale)

    cell = cell_string(ops)
    return TabularResult(policy=policy, dataset=dataset, cell=cell,
                         accuracies=table.lookup(cell))
