"""End-to-end tests for the command-line interface.

Every test drives ``ftso.cli.main`` in-process with an argv list and
asserts on exit codes, captured stdout/stderr, and the artifacts left on
disk.  Exit-code contract: 0 success, 1 usage/config, 2 data/genotype,
3 numerical failure.
"""

import json

import numpy as np
import pytest

from ftso.cli import main
from ftso.genotype import parse_genotype

SMOKE_CFG = """\
seed = 3
space.n = 4
space.init_channels = 4
space.in_channels = 1
space.num_classes = 2
topology.budget.unit = iterations
topology.budget.amount = 2
topology.budget.batch_size = 16
operator.budget.unit = iterations
operator.budget.amount = 1
operator.budget.batch_size = 16
eval.epochs = 0
data.count = 96
data.classes = 2
data.channels = 1
data.height = 8
data.width = 8
data.margin = 3.0
data.noise = 0.5
"""


@pytest.fixture
def smoke_cfg(tmp_path):
    path = tmp_path / "smoke.cfg"
    path.write_text(SMOKE_CFG)
    return str(path)


# ------------------------------------------------------------ cost / bench

def test_cost_table_matches_enumeration(capsys):
    assert main(["cost", "--p", "8"]) == 0
    out = capsys.readouterr().out
    for metric in ("uniform-conv flops/fwd", "topology trainable params",
                   "operator-phase instances"):
        line = next(l for l in out.splitlines() if l.startswith(metric))
        assert line.endswith("1.0000"), line
    assert "112" in out and "14" in out and "64" in out
    assert "params ratio 1.9e-08" in out
    assert "flops ratio 9.8e-06" in out


def test_cost_json_rows_agree(tmp_path, capsys):
    dest = tmp_path / "cost.json"
    assert main(["cost", "--p", "3", "--k", "5", "--out", str(dest)]) == 0
    payload = json.loads(dest.read_text())
    assert payload["p"] == 3 and payload["k"] == 5
    for row in payload["rows"]:
        assert row["analytic"] == row["enumerated"], row["metric"]


def test_bench_monotone_summary_and_jsonl(tmp_path, capsys):
    dest = tmp_path / "bench.jsonl"
    assert main(["bench", "--table", "synthetic-monotone", "--seeds", "2",
                 "--budget", "10", "--out", str(dest)]) == 0
    out = capsys.readouterr().out
    ftso_line = next(l for l in out.splitlines() if l.startswith("ftso"))
    assert ftso_line.split()[-1] == "2"  # zero-regret count == seeds
    records = [json.loads(line) for line in dest.read_text().splitlines()]
    assert len(records) == 2 * 4  # seeds x policies
    assert all(r["regret"] == 0.0 for r in records if r["policy"] == "ftso")


def test_bench_single_policy(capsys):
    assert main(["bench", "--table", "synthetic-skip-biased",
                 "--policy", "ftso", "--seeds", "1"]) == 0
    out = capsys.readouterr().out
    assert "darts1st" not in out


def test_bench_rejects_unknown_policy(capsys):
    assert main(["bench", "--table", "synthetic-monotone",
                 "--policy", "greedy"]) == 1


def test_bench_missing_table_file(capsys):
    assert main(["bench", "--table", "/nonexistent/table.tsv"]) == 2


def test_bench_malformed_table_line(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("not-a-cell\t1\t2\t3\n")
    assert main(["bench", "--table", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err


# ------------------------------------------------------------ run pipeline

def test_run_pipeline_artifacts_and_resume(tmp_path, smoke_cfg, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", smoke_cfg, "--out", str(out)]) == 0
    first = capsys.readouterr().out
    assert "resumed phases: none" in first
    assert "final test accuracy" in first
    for name in ("config.txt", "topology.genotype", "final.genotype",
                 "topology.snapshot.txt", "trace.jsonl", "report.json"):
        assert (out / name).exists(), name
    genotype_text = first[first.index("genotype v1"):]
    parse_genotype(genotype_text)  # printed genotype round-trips

    assert main(["run", "--config", smoke_cfg, "--out", str(out)]) == 0
    second = capsys.readouterr().out
    assert "resumed phases: topology, operator, eval" in second


def test_run_reruns_are_byte_identical(tmp_path, smoke_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", smoke_cfg, "--out", str(a)]) == 0
    assert main(["run", "--config", smoke_cfg, "--out", str(b)]) == 0
    for name in ("config.txt", "final.genotype", "topology.genotype",
                 "trace.jsonl", "topology.snapshot.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_run_seed_fanout(tmp_path, smoke_cfg, capsys):
    base = tmp_path / "sweep"
    assert main(["run", "--config", smoke_cfg, "--out", str(base),
                 "--seeds", "2"]) == 0
    out = capsys.readouterr().out
    assert (base / "seed-0" / "report.json").exists()
    assert (base / "seed-1" / "report.json").exists()
    assert "mean test accuracy over 2 seeds" in out


def test_run_rejects_nonpositive_seeds(tmp_path, smoke_cfg, capsys):
    assert main(["run", "--config", smoke_cfg, "--out",
                 str(tmp_path / "x"), "--seeds", "0"]) == 1


def test_flag_overrides_reach_the_config_snapshot(tmp_path, smoke_cfg):
    out = tmp_path / "run"
    assert main(["run", "--config", smoke_cfg, "--out", str(out),
                 "--budget-unit", "iter", "--budget", "1",
                 "--seed", "9"]) == 0
    snapshot = (out / "config.txt").read_text()
    assert "seed = 9\n" in snapshot
    assert "topology.budget.unit = iterations\n" in snapshot
    assert "topology.budget.amount = 1\n" in snapshot
    assert "operator.budget.amount = 1\n" in snapshot


# ------------------------------------------------------- split-phase flow

def test_split_phases_share_one_run_dir(tmp_path, smoke_cfg, capsys):
    out = tmp_path / "split"
    assert main(["search-topology", "--config", smoke_cfg,
                 "--out", str(out)]) == 0
    topo_out = capsys.readouterr().out
    assert "topology phase, 2 steps" in topo_out
    assert (out / "topology.genotype").exists()
    assert (out / "topology.snapshot.txt").exists()

    assert main(["search-operators", "--config", smoke_cfg,
                 "--out", str(out)]) == 0
    final = parse_genotype((out / "final.genotype").read_text())
    topology = parse_genotype((out / "topology.genotype").read_text())
    for cell_type in ("normal", "reduce"):
        topo_pairs = [(s, d) for s, d, _ in getattr(topology, cell_type)]
        final_cell = getattr(final, cell_type)
        assert [(s, d) for s, d, _ in final_cell] == topo_pairs
        assert all(op == "sep_conv_3x3" for _, _, op in final_cell)


def test_operator_overrides_need_fresh_dir(tmp_path, smoke_cfg, capsys):
    out = tmp_path / "split"
    assert main(["search-topology", "--config", smoke_cfg,
                 "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["search-operators", "--config", smoke_cfg,
                 "--out", str(out), "--replace-op", "dil_conv_3x3"]) == 1
    assert "--topology" in capsys.readouterr().err

    fresh = tmp_path / "variant"
    assert main(["search-operators", "--config", smoke_cfg,
                 "--out", str(fresh), "--replace-op", "dil_conv_3x3",
                 "--topology", str(out / "topology.genotype")]) == 0
    final = parse_genotype((fresh / "final.genotype").read_text())
    assert all(op == "dil_conv_3x3" for _, _, op in final.normal)


def test_gradient_strategy_writes_operator_snapshot(tmp_path, smoke_cfg,
                                                    capsys):
    out = tmp_path / "topo"
    assert main(["search-topology", "--config", smoke_cfg,
                 "--out", str(out)]) == 0
    fresh = tmp_path / "grad"
    assert main(["search-operators", "--config", smoke_cfg,
                 "--out", str(fresh), "--strategy", "gradient",
                 "--topology", str(out / "topology.genotype")]) == 0
    assert (fresh / "operator.snapshot.txt").exists()
    assert (fresh / "final.genotype").exists()
    trace = [json.loads(line)
             for line in (fresh / "trace.jsonl").read_text().splitlines()]
    assert {entry["phase"] for entry in trace} == {"operator"}


def test_search_operators_without_topology(tmp_path, smoke_cfg, capsys):
    assert main(["search-operators", "--config", smoke_cfg,
                 "--out", str(tmp_path / "empty")]) == 1
    assert "no topology genotype" in capsys.readouterr().err


# ------------------------------------------------------------ derive/eval

def test_derive_matches_persisted_genotypes(tmp_path, smoke_cfg, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", smoke_cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    dest = tmp_path / "derived.genotype"
    assert main(["derive", str(out), "--out", str(dest)]) == 0
    printed = capsys.readouterr().out
    assert "matches topology.genotype: true" in printed
    assert dest.read_bytes() == (out / "topology.genotype").read_bytes()


def test_derive_prefers_operator_snapshot(tmp_path, smoke_cfg, capsys):
    topo = tmp_path / "topo"
    assert main(["search-topology", "--config", smoke_cfg,
                 "--out", str(topo)]) == 0
    grad = tmp_path / "grad"
    assert main(["search-operators", "--config", smoke_cfg,
                 "--out", str(grad), "--strategy", "gradient",
                 "--topology", str(topo / "topology.genotype")]) == 0
    # the operator snapshot needs the topology file beside it to re-derive
    (grad / "topology.genotype").write_bytes(
        (topo / "topology.genotype").read_bytes())
    capsys.readouterr()
    assert main(["derive", str(grad)]) == 0
    printed = capsys.readouterr().out
    assert "re-derived from operator.snapshot.txt" in printed
    assert "matches final.genotype: true" in printed


def test_derive_needs_a_run_directory(tmp_path, capsys):
    assert main(["derive", str(tmp_path)]) == 1
    assert "no config.txt" in capsys.readouterr().err


def test_eval_prints_report_and_writes_json(tmp_path, smoke_cfg, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", smoke_cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    dest = tmp_path / "eval.json"
    assert main(["eval", "--config", smoke_cfg,
                 "--genotype", str(out / "final.genotype"),
                 "--out", str(dest)]) == 0
    printed = capsys.readouterr().out
    assert printed.startswith("epoch   0:")
    assert "final test accuracy" in printed
    payload = json.loads(dest.read_text())
    assert payload["final"]["test_acc"] == payload["per_epoch"][-1]["test_acc"]


def test_eval_rejects_malformed_genotype(tmp_path, smoke_cfg, capsys):
    bad = tmp_path / "bad.genotype"
    bad.write_text("garbage\n")
    assert main(["eval", "--config", smoke_cfg,
                 "--genotype", str(bad)]) == 2


# ------------------------------------------------------------------- diag

def test_diag_emits_csv(tmp_path, smoke_cfg, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", smoke_cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["diag", str(out), "--probe-iters", "5"]) == 0
    lines = (out / "diag.csv").read_text().splitlines()
    assert lines[0] == "step,val_loss,eigenvalue"
    assert len(lines) == 1 + 3  # checkpoints at steps 0, 1, 2
    for line in lines[1:]:
        step, val_loss, eig = line.split(",")
        assert np.isfinite(float(val_loss)) and np.isfinite(float(eig))
    assert "3 checkpoints" in capsys.readouterr().out


def test_diag_requires_run_dir(tmp_path, capsys):
    assert main(["diag", str(tmp_path / "nope")]) == 1


# ------------------------------------------------------------- exit codes

def test_unknown_flag_is_usage_error():
    assert main(["run", "--bogus"]) == 1


def test_missing_subcommand_is_usage_error():
    assert main([]) == 1


def test_help_and_version_exit_zero(capsys):
    assert main(["--help"]) == 0
    assert "search-topology" in capsys.readouterr().out
    assert main(["--version"]) == 0


def test_unknown_config_key_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("space.m = 7\n")
    assert main(["run", "--config", str(cfg),
                 "--out", str(tmp_path / "x")]) == 1
    assert "config error" in capsys.readouterr().err


def test_numerical_failure_exits_three(tmp_path, capsys):
    rows = [",".join(["0.5", "1.5", str(i % 2)]) for i in range(39)]
    rows.insert(0, "1e400,0.5,1")  # overflows to inf, standardizes to nan
    csv = tmp_path / "poison.csv"
    csv.write_text("\n".join(rows) + "\n")
    cfg = tmp_path / "poison.cfg"
    text = (SMOKE_CFG.replace("data.count = 96\n", "")
            .replace("data.height = 8", "data.height = 1")
            .replace("data.width = 8", "data.width = 2"))
    cfg.write_text(text + f"data.source = csv\ndata.path = {csv}\n"
                          "data.fractions = 0.3, 0.3, 0.2, 0.2\n")
    out = tmp_path / "run"
    with np.errstate(invalid="ignore"):  # inf pixels are the injected fault
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 3
    assert "numerical failure" in capsys.readouterr().err
    assert (out / "failure.json").exists()
