"""Flat dotted-key config files: parsing, validation, canonical output."""

from __future__ import annotations

import pytest

from ftso.config import (
    ExperimentConfig,
    config_digest,
    load_config,
    parse_config,
    serialize_config,
)
from ftso.engine import SearchBudget
from ftso.errors import ConfigError
from ftso.supernet import SpaceConfig


def test_empty_text_resolves_to_full_defaults():
    cfg = parse_config("")
    assert cfg.space() == SpaceConfig()
    assert cfg.topology_budget() == SearchBudget(unit="epochs", amount=1)
    assert cfg["operator.strategy"] == "direct-replace"
    assert cfg["operator.replace_op"] == "sep_conv_3x3"
    assert cfg["topology.ops"] == ("skip_connect",)
    assert cfg["eval.epochs"] == 20
    assert cfg.optimizer_settings().arch_lr == pytest.approx(3e-4)


def test_parse_overrides_comments_and_types():
    cfg = parse_config("""
# tiny experiment
seed = 3
space.n = 5
space.cells = 3
space.init_channels = 4
space.reduction_positions = 1, 2
topology.budget.unit = iterations
topology.budget.amount = 7
operator.strategy = gradient-op-search
operator.ops = sep_conv_3x3, max_pool_3x3
optim.arch_betas = 0.9,0.99
data.classes = 2
data.standardize = false
data.fractions = 0.4,0.2,0.2,0.2
""")
    assert cfg["seed"] == 3
    assert cfg.space().n == 5
    assert cfg.space().resolved_reductions() == (1, 2)
    assert cfg.topology_budget() == SearchBudget(unit="iterations", amount=7)
    assert cfg["operator.ops"] == ("sep_conv_3x3", "max_pool_3x3")
    assert cfg.optimizer_settings().arch_betas == (0.9, 0.99)
    spec = cfg.data_spec()
    assert spec["classes"] == 2 and spec["standardize"] is False
    assert spec["fractions"] == (0.4, 0.2, 0.2, 0.2)


@pytest.mark.parametrize("text,message", [
    ("space.depth = 3", "line 1: unknown config key 'space.depth'"),
    ("seed = 1\nseed = 2", "line 2: duplicate key"),
    ("just words", "expected 'key = value'"),
    ("space.n = four", "line 1: space.n: expected an integer"),
    ("optim.w_lr = fast", "expected a number"),
    ("data.standardize = yes", "expected 'true' or 'false'"),
])
def test_parse_errors_carry_line_numbers(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_serialization_is_canonical_and_round_trips():
    cfg = parse_config("seed = 9\nspace.cells = 2\n")
    text = serialize_config(cfg)
    assert text == serialize_config(parse_config(text))
    assert parse_config(text) == cfg
    assert "seed = 9\n" in text
    # every key appears exactly once, resolved to its effective value
    keys = [line.split(" = ")[0] for line in text.splitlines()]
    assert len(keys) == len(set(keys))
    assert "optim.arch_lr" in keys and "data.fractions" in keys


def test_digest_tracks_every_effective_value():
    base = ExperimentConfig({})
    assert config_digest(base) == config_digest(ExperimentConfig({}))
    assert len(config_digest(base)) == 12
    assert config_digest(base) != config_digest(base.updated({"seed": 1}))
    assert config_digest(base) != config_digest(
        base.updated({"eval.epochs": 19}))


@pytest.mark.parametrize("values,message", [
    ({"operator.strategy": "evolution"}, "operator.strategy"),
    ({"topology.ops": ("warp_conv",)}, "unknown operator"),
    ({"operator.replace_op": "none"}, "real operator"),
    ({"optim.arch_betas": (0.9, 0.99, 0.5)}, "exactly 2"),
    ({"eval.epochs": -1}, "eval.epochs"),
    ({"topology.budget.unit": "steps"}, "budget unit"),
    ({"space.n": 3}, "n"),
    ({"data.images": "/no/such/file.idx"}, "no such file"),
])
def test_validation_rejections(values, message):
    with pytest.raises(ConfigError, match=message):
        ExperimentConfig(values)


def test_updated_rejects_unknown_keys():
    cfg = ExperimentConfig({})
    assert cfg.updated({"seed": 5})["seed"] == 5
    with pytest.raises(ConfigError, match="unknown config key"):
        cfg.updated({"sauce": "secret"})


def test_file_sources_round_trip(tmp_path):
    csv = tmp_path / "pixels.csv"
    csv.write_text("\n".join(f"{i % 7},{(i * 3) % 5},{i % 2}" for i in range(40))
                   + "\n")
    cfg = parse_config(f"""
data.source = csv
data.path = {csv}
data.channels = 1
data.height = 1
data.width = 2
""")
    spec = cfg.data_spec()
    assert spec["source"] == "csv" and spec["path"] == str(csv)
    assert spec["height"] == 1 and spec["width"] == 2

    path = tmp_path / "run.cfg"
    path.write_text(serialize_config(cfg), encoding="utf-8")
    assert load_config(path) == cfg
