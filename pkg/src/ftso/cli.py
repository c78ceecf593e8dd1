"""Command-line surface.

Subcommands::

    search-topology    phase 1 only: learn beta, prune, persist the topology
    search-operators   phase 2 only: assign operators to a saved topology
    derive             re-derive a genotype from persisted arch snapshots
    eval               train a saved genotype from scratch and score it
    run                full pipeline (optionally fanned out over seeds)
    cost               analytic vs enumerated cost model, with ratios
    bench              tabular search-policy comparison
    diag               Hessian eigenvalue trace along a search, as CSV

Exit codes: 0 success, 1 usage/config problems, 2 data or genotype
problems, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    DATASET_KEYS,
    POLICIES,
    load_table,
    monotone_table,
    regret,
    skip_biased_table,
    tabular_search,
)
from .config import ExperimentConfig, load_config, parse_config
from .costmodel import darts_cost, enumerate_costs, ftso_cost, operation_counts
from .data import load_dataset
from .engine import (
    direct_replace,
    evaluate_architecture,
    operator_search,
    random_genotype,
    topology_search,
)
from .errors import (
    ConfigError,
    DataError,
    FtsoError,
    GenotypeError,
    NumericalError,
    ShapeError,
)
from .genotype import parse_genotype, serialize_genotype, validate_genotype
from .runner import (
    _read_trace,
    _trace_line,
    _write_snapshot,
    _write_trace,
    curvature_trace,
    prepare_run_dir,
    run_experiment,
    run_many,
)
from .supernet import ArchParams, SpaceConfig, build_supernet, derive_genotype, edges_from_genotype

_BUDGET_UNITS = {"iter": "iterations", "epoch": "epochs"}
_STRATEGIES = {"replace": "direct-replace", "gradient": "gradient-op-search"}


def _ops_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _resolve_config(args, budget_sections=()) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig({})
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    # --out is deliberately NOT written into the config: where artifacts
    # live is not part of the experiment's identity (or its run id).
    if getattr(args, "budget_unit", None):
        for section in budget_sections:
            overrides[f"{section}.budget.unit"] = _BUDGET_UNITS[args.budget_unit]
    if getattr(args, "budget", None) is not None:
        for section in budget_sections:
            overrides[f"{section}.budget.amount"] = args.budget
    if getattr(args, "topo_ops", None):
        overrides["topology.ops"] = _ops_list(args.topo_ops)
    if getattr(args, "strategy", None):
        overrides["operator.strategy"] = _STRATEGIES[args.strategy]
    if getattr(args, "replace_op", None):
        overrides["operator.replace_op"] = args.replace_op
    return cfg.updated(overrides)


def _print_genotype(genotype) -> None:
    sys.stdout.write(serialize_genotype(genotype))


# ------------------------------------------------------------ subcommands

def cmd_search_topology(args) -> int:
    cfg = _resolve_config(args, budget_sections=("topology",))
    out, run_id = prepare_run_dir(cfg, args.out)
    data = load_dataset(cfg.data_spec())
    result = topology_search(data, cfg.space(), cfg.topology_budget(),
                             topo_ops=cfg["topology.ops"], seed=cfg["seed"],
                             optim=cfg.optimizer_settings())
    (out / "topology.genotype").write_text(serialize_genotype(result.genotype),
                                           encoding="utf-8")
    _write_snapshot(out / "topology.snapshot.txt", result.arch_snapshot)
    lines = _read_trace(out / "trace.jsonl")
    lines["topology"] = [_trace_line(run_id, "topology", entry)
                         for entry in result.loss_trace]
    _write_trace(out / "trace.jsonl", lines)
    print(f"run {run_id}: topology phase, {result.steps} steps, "
          f"{result.wall_seconds:.3f}s wall clock")
    print(f"final val loss {result.loss_trace[-1]['val_loss']:.6f}")
    print(f"artifacts in {out}")
    _print_genotype(result.genotype)
    return 0


def cmd_search_operators(args) -> int:
    cfg = _resolve_config(args, budget_sections=("operator",))
    try:
        out, run_id = prepare_run_dir(cfg, args.out)
    except ConfigError as exc:
        raise ConfigError(
            f"{exc}; to vary phase 2 against a saved topology, pass a fresh "
            f"--out together with --topology") from None
    topo_path = Path(args.topology) if args.topology else out / "topology.genotype"
    if not topo_path.exists():
        raise ConfigError(f"no topology genotype at {topo_path}; run "
                          f"search-topology first or pass --topology")
    topology = parse_genotype(topo_path.read_text(encoding="utf-8"))
    if cfg["operator.strategy"] == "direct-replace":
        final = direct_replace(topology, cfg["operator.replace_op"],
                               cfg=cfg.space())
        print(f"run {run_id}: direct replacement with "
              f"{cfg['operator.replace_op']}")
    else:
        data = load_dataset(cfg.data_spec())
        result = operator_search(topology, data, cfg.space(),
                                 cfg.operator_budget(),
                                 candidate_ops=cfg["operator.ops"],
                                 seed=cfg["seed"], optim=cfg.optimizer_settings())
        final = result.genotype
        _write_snapshot(out / "operator.snapshot.txt", result.arch_snapshot)
        lines = _read_trace(out / "trace.jsonl")
        lines["operator"] = [_trace_line(run_id, "operator", entry)
                             for entry in result.loss_trace]
        _write_trace(out / "trace.jsonl", lines)
        print(f"run {run_id}: operator phase, {result.steps} steps, "
              f"{result.wall_seconds:.3f}s wall clock")
    (out / "final.genotype").write_text(serialize_genotype(final),
                                        encoding="utf-8")
    print(f"artifacts in {out}")
    _print_genotype(final)
    return 0


def _parse_snapshot_file(path: Path) -> dict[str, np.ndarray]:
    snapshot: dict[str, np.ndarray] = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(),
                                  start=1):
        if not line.strip():
            continue
        key, sep, values = line.partition("\t")
        if not sep:
            raise DataError(f"{path.name} line {number}: expected "
                            f"'key<TAB>values'")
        try:
            snapshot[key] = np.array([float(v) for v in values.split(",")])
        except ValueError as exc:
            raise DataError(f"{path.name} line {number}: {exc}") from None
    return snapshot


def cmd_derive(args) -> int:
    run = Path(args.run_dir)
    config_path = run / "config.txt"
    if not config_path.exists():
        raise ConfigError(f"no config.txt in {run}")
    cfg = parse_config(config_path.read_text(encoding="utf-8"))
    space = cfg.space()

    operator_snapshot = run / "operator.snapshot.txt"
    if operator_snapshot.exists():
        topology = parse_genotype((run / "topology.genotype")
                                  .read_text(encoding="utf-8"))
        arch = ArchParams(space.n, cfg["operator.ops"],
                          edges_by_type=edges_from_genotype(topology))
        snapshot_path = operator_snapshot
        persisted = run / "final.genotype"
    else:
        snapshot_path = run / "topology.snapshot.txt"
        if not snapshot_path.exists():
            raise ConfigError(f"no arch snapshot in {run}")
        arch = ArchParams(space.n, cfg["topology.ops"])
        persisted = run / "topology.genotype"

    arch.load(_parse_snapshot_file(snapshot_path))
    genotype = derive_genotype(arch, retain=args.retain)
    if persisted.exists() and args.retain == 2:
        match = persisted.read_text(encoding="utf-8") == serialize_genotype(genotype)
        print(f"re-derived from {snapshot_path.name}; matches "
              f"{persisted.name}: {str(match).lower()}")
    else:
        print(f"re-derived from {snapshot_path.name}")
    if args.out:
        Path(args.out).write_text(serialize_genotype(genotype), encoding="utf-8")
    _print_genotype(genotype)
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    genotype_path = Path(args.genotype)
    genotype = validate_genotype(
        parse_genotype(genotype_path.read_text(encoding="utf-8")),
        nodes=cfg.space().n)
    data = load_dataset(cfg.data_spec())
    report = evaluate_architecture(
        genotype, data, cfg.space(), epochs=cfg["eval.epochs"],
        batch_size=cfg["eval.batch_size"], lr=cfg["eval.lr"],
        momentum=cfg["eval.momentum"], weight_decay=cfg["eval.weight_decay"],
        seed=cfg["seed"])
    for entry in report.per_epoch:
        loss = entry.get("train_loss")
        loss_text = f" train_loss {loss:.4f}" if loss is not None else ""
        print(f"epoch {entry['epoch']:3d}: train {entry['train_acc']:.4f} "
              f"val {entry['val_acc']:.4f} test {entry['test_acc']:.4f}"
              f"{loss_text}")
    print(f"final test accuracy {report.final['test_acc']:.4f} "
          f"({report.wall_seconds:.1f}s)")
    if args.out:
        Path(args.out).write_text(json.dumps(report.as_dict(), indent=2,
                                             sort_keys=True) + "\n",
                                  encoding="utf-8")
    return 0


def cmd_run(args) -> int:
    sections = ("topology", "operator")
    cfg = _resolve_config(args, budget_sections=sections)
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError(f"--seeds must be >= 1, got {args.seeds}")
        base = Path(args.out or cfg["out"] or "runs/sweep")
        records = run_many(cfg, range(args.seeds), base)
        accs = [r.report["eval"]["final"]["test_acc"] for r in records]
        for record, acc in zip(records, accs):
            print(f"{record.out_dir}: run {record.run_id} "
                  f"test accuracy {acc:.4f}")
        print(f"mean test accuracy over {len(records)} seeds: "
              f"{float(np.mean(accs)):.4f}")
        return 0
    record = run_experiment(cfg, args.out)
    phase_list = ", ".join(record.resumed) if record.resumed else "none"
    print(f"run {record.run_id} in {record.out_dir} (resumed phases: "
          f"{phase_list})")
    print(f"final test accuracy "
          f"{record.report['eval']['final']['test_acc']:.4f}")
    _print_genotype(record.genotype)
    return 0


def cmd_cost(args) -> int:
    cfg = _resolve_config(args)
    space = cfg.space()
    n, c = space.n, space.init_channels
    p = args.p if args.p is not None else len(cfg["operator.ops"])
    k, h, w = args.k, args.height, args.width

    analytic_darts = darts_cost(n, p, k, c, c, h, w)
    analytic_ftso = ftso_cost(n, c, h, w)
    base = SpaceConfig(n=n, cells=1, init_channels=c,
                       in_channels=space.in_channels,
                       num_classes=space.num_classes)
    enum_darts = enumerate_costs(build_supernet(base, (f"conv_{k}x{k}",) * p,
                                                seed=cfg["seed"]), h=h, w=w)
    enum_ftso = enumerate_costs(build_supernet(base, ("skip_connect",),
                                               seed=cfg["seed"]), h=h, w=w)
    restricted = build_supernet(
        base, ("conv_3x3",) * p, seed=cfg["seed"],
        edges_by_type=edges_from_genotype(random_genotype(n, seed=cfg["seed"])))

    counts = operation_counts(n, p)
    rows = [
        ("uniform-conv flops/fwd", analytic_darts.flops_per_forward,
         enum_darts.flops_per_forward),
        ("uniform-conv kernel params", analytic_darts.kernel_params,
         enum_darts.kernel_params),
        ("uniform-conv instances", counts[0], enum_darts.operator_instances),
        ("topology flops/fwd", analytic_ftso.flops_per_forward,
         enum_ftso.flops_per_forward),
        ("topology trainable params", analytic_ftso.trainable_params,
         enum_ftso.trainable_params),
        ("topology instances", counts[1], enum_ftso.operator_instances),
        ("operator-phase instances", counts[2],
         restricted.operator_instances()),
    ]
    print(f"n={n} p={p} k={k} channels={c} spatial={h}x{w}")
    print(f"{'metric':<28}{'analytic':>14}{'enumerated':>14}{'ratio':>10}")
    for name, analytic, enumerated in rows:
        ratio = enumerated / analytic if analytic else float("nan")
        print(f"{name:<28}{analytic:>14}{enumerated:>14}{ratio:>10.4f}")

    reference_params = (ftso_cost(7, 512, 32, 32).trainable_params
                        / darts_cost(7, 8, 5, 512, 512, 32, 32).trainable_params)
    reference_flops = (ftso_cost(7, 512, 32, 32).flops_per_forward
                       / darts_cost(7, 8, 5, 512, 512, 32, 32).flops_per_forward)
    print(f"reference scale (n=7 p=8 k=5 C=512): params ratio "
          f"{reference_params:.1e}, flops ratio {reference_flops:.1e}")

    if args.out:
        payload = {"n": n, "p": p, "k": k, "channels": c,
                   "spatial": [h, w],
                   "rows": [{"metric": name, "analytic": analytic,
                             "enumerated": enumerated}
                            for name, analytic, enumerated in rows],
                   "reference_ratios": {"params": reference_params,
                                        "flops": reference_flops}}
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True)
                                  + "\n", encoding="utf-8")
    return 0


def _bench_table(name: str, seed: int):
    if name == "synthetic-monotone":
        return monotone_table()
    if name == "synthetic-skip-biased":
        return skip_biased_table(seed)
    return load_table(name)


def cmd_bench(args) -> int:
    policies = POLICIES if args.policy == "all" else (args.policy,)
    fixed_table = None
    if args.table not in ("synthetic-monotone", "synthetic-skip-biased"):
        fixed_table = load_table(args.table)

    records = []
    summary: dict[str, list[float]] = {policy: [] for policy in policies}
    for seed in range(args.seeds):
        table = fixed_table if fixed_table is not None \
            else _bench_table(args.table, seed)
        for policy in policies:
            result = tabular_search(policy, args.dataset, table,
                                    budget=args.budget, seed=seed)
            gap = regret(table, args.dataset, result.cell)
            summary[policy].append(gap)
            records.append({
                "policy": policy, "seed": seed, "dataset": args.dataset,
                "cell": result.cell,
                "accuracy": result.accuracies[DATASET_KEYS.index(args.dataset)],
                "regret": gap,
            })

    print(f"table={args.table} dataset={args.dataset} seeds={args.seeds} "
          f"budget={args.budget}")
    print(f"{'policy':<16}{'mean regret':>12}{'max regret':>12}{'zero':>6}")
    for policy in policies:
        gaps = summary[policy]
        zeros = sum(1 for g in gaps if g == 0.0)
        print(f"{policy:<16}{float(np.mean(gaps)):>12.3f}"
              f"{float(np.max(gaps)):>12.3f}{zeros:>6}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def cmd_diag(args) -> int:
    run = Path(args.run_dir)
    config_path = run / "config.txt"
    if not config_path.exists():
        raise ConfigError(f"no config.txt in {run}")
    cfg = parse_config(config_path.read_text(encoding="utf-8"))
    records = curvature_trace(cfg, phase=args.phase,
                              checkpoint_every=args.every,
                              probe_iters=args.probe_iters)
    out_path = Path(args.out) if args.out else run / "diag.csv"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("step,val_loss,eigenvalue\n")
        for entry in records:
            fh.write(f"{entry['step']},{entry['val_loss']!r},"
                     f"{entry['eigenvalue']!r}\n")
    first, last = records[0], records[-1]
    print(f"{len(records)} checkpoints -> {out_path}")
    print(f"eigenvalue {first['eigenvalue']:.6g} (step {first['step']}) -> "
          f"{last['eigenvalue']:.6g} (step {last['step']})")
    return 0


# ------------------------------------------------------------- the parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ftso",
                     description="two-phase differentiable architecture search")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p, budget=False, search=False):
        p.add_argument("--config", metavar="FILE",
                       help="flat key=value experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory or file")
        if budget:
            p.add_argument("--budget-unit", choices=("iter", "epoch"))
            p.add_argument("--budget", type=int, metavar="N")
        if search:
            p.add_argument("--topo-ops", metavar="LIST",
                           help="comma-separated topology-phase operator set")
            p.add_argument("--strategy", choices=("replace", "gradient"))
            p.add_argument("--replace-op", metavar="NAME")

    p = sub.add_parser("search-topology", help="run phase 1 and persist it")
    common(p, budget=True, search=True)
    p.set_defaults(func=cmd_search_topology)

    p = sub.add_parser("search-operators",
                       help="assign operators to a saved topology")
    common(p, budget=True, search=True)
    p.add_argument("--topology", metavar="FILE",
                   help="topology genotype (default: <out>/topology.genotype)")
    p.set_defaults(func=cmd_search_operators)

    p = sub.add_parser("derive",
                       help="re-derive a genotype from persisted snapshots")
    p.add_argument("run_dir", help="run directory with config.txt + snapshots")
    p.add_argument("--retain", type=int, default=2,
                   help="in-edges kept per node (default 2)")
    p.add_argument("--out", help="also write the genotype to this file")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("eval", help="train a genotype from scratch and score")
    common(p)
    p.add_argument("--genotype", metavar="FILE", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="full two-phase pipeline plus evaluation")
    common(p, budget=True, search=True)
    p.add_argument("--seeds", type=int, metavar="N",
                   help="fan out N independent seeded runs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("cost", help="analytic vs enumerated cost model")
    common(p)
    p.add_argument("--p", type=int, help="operators per edge "
                                         "(default: len(operator.ops))")
    p.add_argument("--k", type=int, default=3, help="kernel size (default 3)")
    p.add_argument("--height", type=int, default=8)
    p.add_argument("--width", type=int, default=8)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("bench", help="tabular search-policy comparison")
    p.add_argument("--table", required=True,
                   help="TSV path, 'synthetic-monotone', or "
                        "'synthetic-skip-biased'")
    p.add_argument("--policy", default="all", choices=POLICIES + ("all",))
    p.add_argument("--dataset", default="cifar10", choices=DATASET_KEYS)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--budget", type=int, default=25)
    p.add_argument("--out", help="write per-run records as JSONL")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diag", help="Hessian eigenvalue trace along a search")
    p.add_argument("run_dir", help="run directory with config.txt")
    p.add_argument("--phase", default="topology", choices=("topology", "joint"))
    p.add_argument("--every", type=int, default=1,
                   help="checkpoint stride in steps")
    p.add_argument("--probe-iters", type=int, default=30)
    p.add_argument("--out", help="CSV destination (default <run>/diag.csv)")
    p.set_defaults(func=cmd_diag)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, GenotypeError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FtsoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
