"""Experiment orchestration and run-directory persistence.

A run directory is the complete, re-derivable record of one experiment:

- ``config.txt`` — canonical config snapshot (the run id is its digest)
- ``topology.genotype`` / ``final.genotype`` — phase outputs
- ``topology.snapshot.txt`` / ``operator.snapshot.txt`` — arch parameters
- ``trace.jsonl`` — one record per bilevel step (never wall-clock times,
  so identical config+seed reruns are byte-identical)
- ``report.json`` — final accuracies plus per-phase wall-clock seconds
- ``failure.json`` — present only when a phase aborted

Runs resume at phase boundaries: an existing genotype file skips its
phase, and a directory holding a different config snapshot is refused.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, config_digest, serialize_config
from .data import load_dataset
from .diagnostics import arch_loss_gradient, hessian_max_eigenvalue
from .engine import (
    OptimizerSettings,
    SearchBudget,
    _batch_stream,
    _search_pool,
    bilevel_step,
    direct_replace,
    evaluate_architecture,
    operator_search,
    parameter_free_fraction,
    topology_search,
)
from .errors import ConfigError, FtsoError, NumericalError
from .functional import cross_entropy
from .genotype import Genotype, parse_genotype, serialize_genotype, validate_genotype
from .optim import SGD, Adam, CosineSchedule
from .supernet import build_supernet
from .tensor import Tensor

__all__ = ["RunRecord", "run_experiment", "run_many", "curvature_trace",
           "read_report", "prepare_run_dir"]

_TRACE_PHASES = ("topology", "operator")


@dataclass
class RunRecord:
    """What one experiment produced and where it lives."""

    run_id: str
    out_dir: Path
    topology: Genotype
    genotype: Genotype
    report: dict
    resumed: tuple[str, ...]


def _trace_line(run_id: str, phase: str, entry: dict) -> str:
    record = {"run_id": run_id, "phase": phase, **entry}
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def _read_trace(path: Path) -> dict[str, list[str]]:
    lines: dict[str, list[str]] = {phase: [] for phase in _TRACE_PHASES}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            phase = json.loads(line).get("phase")
            if phase in lines:
                lines[phase].append(line)
    return lines


def _write_trace(path: Path, lines: dict[str, list[str]]) -> None:
    chunks = [line for phase in _TRACE_PHASES for line in lines[phase]]
    path.write_text("".join(chunk + "\n" for chunk in chunks), encoding="utf-8")


def _write_snapshot(path: Path, snapshot: dict[str, np.ndarray]) -> None:
    rows = []
    for key in sorted(snapshot):
        values = ",".join(repr(float(v)) for v in snapshot[key].ravel())
        rows.append(f"{key}\t{values}\n")
    path.write_text("".join(rows), encoding="utf-8")


def _record_failure(out: Path, phase: str, exc: Exception,
                    trace_lines: dict[str, list[str]], run_id: str) -> None:
    partial = getattr(exc, "trace", None)
    if partial is not None and phase in trace_lines:
        trace_lines[phase] = [_trace_line(run_id, phase, entry)
                              for entry in partial]
        _write_trace(out / "trace.jsonl", trace_lines)
    payload = {"phase": phase, "error": str(exc),
               "steps_completed": len(partial) if partial is not None else None}
    (out / "failure.json").write_text(json.dumps(payload, indent=2, sort_keys=True)
                                      + "\n", encoding="utf-8")


def prepare_run_dir(cfg: ExperimentConfig, out_dir=None) -> tuple[Path, str]:
    """Create/validate a run directory and persist the config snapshot.

    A directory that already holds a *different* config snapshot is
    refused, so resumed phases always belong to the same experiment.
    """
    run_id = config_digest(cfg)
    out = Path(out_dir) if out_dir is not None else Path(cfg["out"] or f"runs/{run_id}")
    out.mkdir(parents=True, exist_ok=True)
    snapshot = serialize_config(cfg)
    config_path = out / "config.txt"
    if config_path.exists() and config_path.read_text(encoding="utf-8") != snapshot:
        raise ConfigError(f"run directory {out} holds a different config; "
                          f"refusing to mix artifacts")
    config_path.write_text(snapshot, encoding="utf-8")
    return out, run_id


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunRecord:
    """Topology search, operator assignment, then from-scratch evaluation."""
    out, run_id = prepare_run_dir(cfg, out_dir)

    space = cfg.space()
    optim = cfg.optimizer_settings()
    seed = cfg["seed"]

    data_started = time.perf_counter()
    data = load_dataset(cfg.data_spec())
    dataset_seconds = time.perf_counter() - data_started

    trace_lines = _read_trace(out / "trace.jsonl")
    resumed: list[str] = []
    seconds: dict[str, float | None] = {"dataset": dataset_seconds}

    # phase 1: topology
    topo_path = out / "topology.genotype"
    if topo_path.exists():
        topology = validate_genotype(
            parse_genotype(topo_path.read_text(encoding="utf-8")), nodes=space.n)
        resumed.append("topology")
        seconds["topology"] = None
    else:
        try:
            phase1 = topology_search(data, space, cfg.topology_budget(),
                                     topo_ops=cfg["topology.ops"], seed=seed,
                                     optim=optim)
        except NumericalError as exc:
            _record_failure(out, "topology", exc, trace_lines, run_id)
            raise
        topology = phase1.genotype
        topo_path.write_text(serialize_genotype(topology), encoding="utf-8")
        _write_snapshot(out / "topology.snapshot.txt", phase1.arch_snapshot)
        trace_lines["topology"] = [_trace_line(run_id, "topology", entry)
                                   for entry in phase1.loss_trace]
        _write_trace(out / "trace.jsonl", trace_lines)
        seconds["topology"] = phase1.wall_seconds

    # phase 2: operator assignment
    final_path = out / "final.genotype"
    if final_path.exists():
        final = validate_genotype(
            parse_genotype(final_path.read_text(encoding="utf-8")), nodes=space.n)
        resumed.append("operator")
        seconds["operator"] = None
    else:
        phase_started = time.perf_counter()
        if cfg["operator.strategy"] == "direct-replace":
            final = direct_replace(topology, cfg["operator.replace_op"], cfg=space)
        else:
            try:
                phase2 = operator_search(topology, data, space,
                                         cfg.operator_budget(),
                                         candidate_ops=cfg["operator.ops"],
                                         seed=seed, optim=optim)
            except NumericalError as exc:
                _record_failure(out, "operator", exc, trace_lines, run_id)
                raise
            final = phase2.genotype
            _write_snapshot(out / "operator.snapshot.txt", phase2.arch_snapshot)
            trace_lines["operator"] = [_trace_line(run_id, "operator", entry)
                                       for entry in phase2.loss_trace]
            _write_trace(out / "trace.jsonl", trace_lines)
        final_path.write_text(serialize_genotype(final), encoding="utf-8")
        seconds["operator"] = time.perf_counter() - phase_started

    # phase 3: from-scratch evaluation
    report_path = out / "report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text(encoding="utf-8"))
        resumed.append("eval")
    else:
        try:
            evaluation = evaluate_architecture(
                final, data, space, epochs=cfg["eval.epochs"],
                batch_size=cfg["eval.batch_size"], lr=cfg["eval.lr"],
                momentum=cfg["eval.momentum"],
                weight_decay=cfg["eval.weight_decay"], seed=seed)
        except NumericalError as exc:
            _record_failure(out, "eval", exc, trace_lines, run_id)
            raise
        seconds["eval"] = evaluation.wall_seconds
        report = {
            "run_id": run_id,
            "strategy": cfg["operator.strategy"],
            "topology": serialize_genotype(topology),
            "genotype": serialize_genotype(final),
            "parameter_free_fraction": parameter_free_fraction(final),
            "seconds": seconds,
            "eval": evaluation.as_dict(),
        }
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")

    return RunRecord(run_id=run_id, out_dir=out, topology=topology,
                     genotype=final, report=report, resumed=tuple(resumed))


def run_many(cfg: ExperimentConfig, seeds, base_dir) -> list[RunRecord]:
    """Independent runs, one isolated subdirectory per seed."""
    base = Path(base_dir)
    records = []
    for seed in seeds:
        per_seed = cfg.updated({"seed": int(seed), "out": None})
        records.append(run_experiment(per_seed, base / f"seed-{int(seed)}"))
    return records


def read_report(run_dir) -> dict:
    path = Path(run_dir) / "report.json"
    if not path.exists():
        raise FtsoError(f"no report.json in {run_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def curvature_trace(cfg: ExperimentConfig, *, phase: str = "topology",
                    checkpoint_every: int = 1, probe_iters: int = 30,
                    probe_tol: float = 1e-4) -> list[dict]:
    """Dominant Hessian eigenvalue of the validation loss along a search.

    Runs the chosen phase's search loop and, every ``checkpoint_every``
    steps plus once at the end, estimates the largest-magnitude eigenvalue
    of the validation-loss Hessian with respect to the architecture
    parameters on a frozen probe batch. Returns one record per checkpoint.
    """
    if phase == "topology":
        op_names, budget = cfg["topology.ops"], cfg.topology_budget()
    elif phase == "joint":
        op_names, budget = cfg["operator.ops"], cfg.operator_budget()
    else:
        raise ConfigError(f"phase must be 'topology' or 'joint', got {phase!r}")
    if checkpoint_every < 1:
        raise ConfigError(f"checkpoint_every must be >= 1, got {checkpoint_every}")

    budget.validate()
    space = cfg.space()
    optim: OptimizerSettings = cfg.optimizer_settings()
    seed = cfg["seed"]
    data = load_dataset(cfg.data_spec())
    (x_train, y_train), (x_val, y_val) = _search_pool(data, budget)

    steps_per_epoch = -(-len(y_train) // budget.batch_size)
    total_steps = (budget.amount if budget.unit == "iterations"
                   else budget.amount * steps_per_epoch)

    net = build_supernet(space, op_names, seed)
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
    probe = (x_val[:budget.batch_size], y_val[:budget.batch_size])

    def checkpoint(step: int) -> dict:
        grad_fn, theta0 = arch_loss_gradient(net, probe)
        top = hessian_max_eigenvalue(grad_fn, theta0, iters=probe_iters,
                                     tol=probe_tol, seed=seed)
        loss = cross_entropy(net.forward(Tensor(probe[0])), probe[1]).item()
        return {"step": step, "val_loss": loss, "eigenvalue": top}

    records = []
    for step in range(total_steps):
        if step % checkpoint_every == 0:
            records.append(checkpoint(step))
        if w_opt is not None:
            w_schedule.apply(w_opt, step)
        bilevel_step(net, next(train_stream), next(val_stream), arch_opt, w_opt)
    records.append(checkpoint(total_steps))
    return records
