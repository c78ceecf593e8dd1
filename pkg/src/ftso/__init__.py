"""Two-phase differentiable architecture search over DAG cell super-nets.

The package searches the topology of a cell first (with every edge carrying
one simple operator) and assigns operators second, instead of relaxing both
at once. It ships its own float64 autodiff core with compiled and
pure-NumPy kernel backends, an analytic cost model for both search regimes,
curvature/correlation diagnostics, a tabular benchmark harness, and a CLI
(``ftso``).
"""

from __future__ import annotations

from . import errors
from .errors import (
    ConfigError,
    DataError,
    FtsoError,
    GenotypeError,
    NumericalError,
    ShapeError,
)
from .tensor import FlopCounter, Tape, Tensor, parameter

__version__ = "0.1.0"

_SUBMODULE_OF = {
    "conv2d": "functional",
    "max_pool2d": "functional",
    "avg_pool2d": "functional",
    "batch_norm": "functional",
    "softmax": "functional",
    "log_softmax": "functional",
    "cross_entropy": "functional",
    "weighted_sum": "functional",
    "SGD": "optim",
    "Adam": "optim",
    "CosineSchedule": "optim",
    "OperatorKind": "ops",
    "make_operator": "ops",
    "Genotype": "genotype",
    "SpaceConfig": "supernet",
    "SuperNet": "supernet",
    "derive_genotype": "supernet",
    "Network": "network",
    "darts_cost": "costmodel",
    "ftso_cost": "costmodel",
    "operation_counts": "costmodel",
    "enumerate_costs": "costmodel",
    "SearchBudget": "engine",
    "OptimizerSettings": "engine",
    "PhaseResult": "engine",
    "EvalReport": "engine",
    "bilevel_step": "engine",
    "topology_search": "engine",
    "operator_search": "engine",
    "direct_replace": "engine",
    "darts_baseline_search": "engine",
    "evaluate_architecture": "engine",
    "random_genotype": "engine",
    "parameter_free_fraction": "engine",
    "Dataset": "data",
    "load_dataset": "data",
    "make_blobs": "data",
    "make_stripes": "data",
    "hessian_max_eigenvalue": "diagnostics",
    "pearson_correlation": "diagnostics",
    "ExperimentConfig": "config",
    "parse_config": "config",
    "serialize_config": "config",
    "load_config": "config",
    "config_digest": "config",
    "RunRecord": "runner",
    "run_experiment": "runner",
    "run_many": "runner",
    "curvature_trace": "runner",
    "read_report": "runner",
    "AccuracyTable": "bench",
    "load_table": "bench",
    "save_table": "bench",
    "monotone_table": "bench",
    "skip_biased_table": "bench",
    "tabular_search": "bench",
    "exhaustive_best": "bench",
    "serialize_genotype": "genotype",
    "parse_genotype": "genotype",
    "validate_genotype": "genotype",
}


def __getattr__(name: str):
    module_name = _SUBMODULE_OF.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


__all__ = [
    "__version__",
    "errors",
    "FtsoError",
    "ShapeError",
    "NumericalError",
    "DataError",
    "ConfigError",
    "GenotypeError",
    "Tensor",
    "Tape",
    "FlopCounter",
    "parameter",
    *_SUBMODULE_OF.keys(),
]
