"""Experiment configuration: flat dotted-key text files.

A config file is plain ``key = value`` lines (``#`` comments and blank
lines allowed); section structure lives in the dotted key names, so there
is no nesting ambiguity and files diff cleanly. Every key has a default;
:func:`serialize_config` always emits the complete resolved key set in a
fixed order, making the snapshot byte-stable for identical configurations
— the run identifier is a digest of exactly that text.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

from .engine import OptimizerSettings, SearchBudget
from .errors import ConfigError
from .ops import CANONICAL_OPERATORS, is_operator_name
from .supernet import SpaceConfig

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "serialize_config",
    "load_config",
    "config_digest",
    "STRATEGIES",
]

STRATEGIES = ("direct-replace", "gradient-op-search")


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    raise ConfigError(f"expected 'true' or 'false', got {text!r}")


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_optional_str(text: str):
    return text.strip() or None


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _parse_str_tuple(text: str) -> tuple[str, ...]:
    return tuple(_split_list(text))


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(_parse_int(part) for part in _split_list(text))


def _parse_float_tuple(text: str) -> tuple[float, ...]:
    return tuple(_parse_float(part) for part in _split_list(text))


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (default, parser); serialization order is this insertion order
_SCHEMA: dict[str, tuple] = {
    "seed": (0, _parse_int),
    "out": (None, _parse_optional_str),
    "space.n": (7, _parse_int),
    "space.cells": (1, _parse_int),
    "space.reduction_positions": ((), _parse_int_tuple),
    "space.init_channels": (16, _parse_int),
    "space.partial_channel_k": (1, _parse_int),
    "space.in_channels": (3, _parse_int),
    "space.num_classes": (10, _parse_int),
    "space.arch_noise": (0.0, _parse_float),
    "topology.ops": (("skip_connect",), _parse_str_tuple),
    "topology.budget.unit": ("epochs", _parse_str),
    "topology.budget.amount": (1, _parse_int),
    "topology.budget.batch_size": (64, _parse_int),
    "topology.budget.train_fraction": (0.5, _parse_float),
    "topology.budget.val_fraction": (0.5, _parse_float),
    "operator.strategy": ("direct-replace", _parse_str),
    "operator.replace_op": ("sep_conv_3x3", _parse_str),
    "operator.ops": (CANONICAL_OPERATORS, _parse_str_tuple),
    "operator.budget.unit": ("epochs", _parse_str),
    "operator.budget.amount": (1, _parse_int),
    "operator.budget.batch_size": (64, _parse_int),
    "operator.budget.train_fraction": (0.5, _parse_float),
    "operator.budget.val_fraction": (0.5, _parse_float),
    "optim.arch_lr": (3e-4, _parse_float),
    "optim.arch_betas": ((0.5, 0.999), _parse_float_tuple),
    "optim.arch_weight_decay": (1e-3, _parse_float),
    "optim.w_lr": (0.025, _parse_float),
    "optim.w_momentum": (0.9, _parse_float),
    "optim.w_weight_decay": (3e-4, _parse_float),
    "optim.w_min_lr": (0.0, _parse_float),
    "eval.epochs": (20, _parse_int),
    "eval.batch_size": (64, _parse_int),
    "eval.lr": (0.025, _parse_float),
    "eval.momentum": (0.9, _parse_float),
    "eval.weight_decay": (3e-4, _parse_float),
    "data.source": ("synthetic", _parse_str),
    "data.generator": ("gaussian-blobs", _parse_str),
    "data.classes": (10, _parse_int),
    "data.count": (512, _parse_int),
    "data.channels": (3, _parse_int),
    "data.height": (16, _parse_int),
    "data.width": (16, _parse_int),
    "data.noise": (1.0, _parse_float),
    "data.margin": (2.0, _parse_float),
    "data.seed": (0, _parse_int),
    "data.images": (None, _parse_optional_str),
    "data.labels": (None, _parse_optional_str),
    "data.path": (None, _parse_optional_str),
    "data.standardize": (True, _parse_bool),
    "data.fractions": ((0.25, 0.25, 0.30, 0.20), _parse_float_tuple),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description (every key has a value)."""

    values: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = sorted(set(self.values) - set(_SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        resolved = {key: self.values.get(key, default)
                    for key, (default, _) in _SCHEMA.items()}
        object.__setattr__(self, "values", resolved)
        self.validate()

    def __getitem__(self, key: str):
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def updated(self, overrides: dict) -> "ExperimentConfig":
        """Copy with the given dotted keys replaced."""
        return ExperimentConfig({**self.values, **overrides})

    def validate(self) -> None:
        if self["operator.strategy"] not in STRATEGIES:
            raise ConfigError(f"operator.strategy must be one of {STRATEGIES}, "
                              f"got {self['operator.strategy']!r}")
        for key in ("topology.ops", "operator.ops"):
            for name in self[key]:
                if not is_operator_name(name):
                    raise ConfigError(f"{key}: unknown operator {name!r}")
        replace_op = self["operator.replace_op"]
        if not is_operator_name(replace_op) or replace_op == "none":
            raise ConfigError(f"operator.replace_op must be a real operator, "
                              f"got {replace_op!r}")
        if len(self["optim.arch_betas"]) != 2:
            raise ConfigError("optim.arch_betas needs exactly 2 values")
        if self["eval.epochs"] < 0:
            raise ConfigError(f"eval.epochs must be >= 0, got {self['eval.epochs']}")
        self.space()
        self.topology_budget().validate()
        self.operator_budget().validate()
        for key in ("data.images", "data.labels", "data.path"):
            path = self[key]
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"{key}: no such file: {path}")

    # ------------------------------------------------ typed sub-configs

    def space(self) -> SpaceConfig:
        positions = self["space.reduction_positions"]
        cfg = SpaceConfig(
            n=self["space.n"],
            cells=self["space.cells"],
            reduction_positions=positions if positions else None,
            init_channels=self["space.init_channels"],
            partial_channel_K=self["space.partial_channel_k"],
            in_channels=self["space.in_channels"],
            num_classes=self["space.num_classes"],
            arch_noise=self["space.arch_noise"],
        )
        cfg.validate()
        return cfg

    def _budget(self, section: str) -> SearchBudget:
        return SearchBudget(
            unit=self[f"{section}.budget.unit"],
            amount=self[f"{section}.budget.amount"],
            batch_size=self[f"{section}.budget.batch_size"],
            train_fraction=self[f"{section}.budget.train_fraction"],
            val_fraction=self[f"{section}.budget.val_fraction"],
        )

    def topology_budget(self) -> SearchBudget:
        return self._budget("topology")

    def operator_budget(self) -> SearchBudget:
        return self._budget("operator")

    def optimizer_settings(self) -> OptimizerSettings:
        betas = self["optim.arch_betas"]
        return OptimizerSettings(
            arch_lr=self["optim.arch_lr"],
            arch_betas=(betas[0], betas[1]),
            arch_weight_decay=self["optim.arch_weight_decay"],
            w_lr=self["optim.w_lr"],
            w_momentum=self["optim.w_momentum"],
            w_weight_decay=self["optim.w_weight_decay"],
            w_min_lr=self["optim.w_min_lr"],
        )

    def data_spec(self) -> dict:
        source = self["data.source"]
        spec = {"source": source, "seed": self["data.seed"],
                "standardize": self["data.standardize"],
                "fractions": self["data.fractions"]}
        if source == "synthetic":
            spec.update(generator=self["data.generator"],
                        classes=self["data.classes"], count=self["data.count"],
                        channels=self["data.channels"],
                        height=self["data.height"], width=self["data.width"],
                        noise=self["data.noise"], margin=self["data.margin"])
        elif source == "idx":
            spec.update(images=self["data.images"], labels=self["data.labels"])
        elif source == "csv":
            spec.update(path=self["data.path"], channels=self["data.channels"],
                        height=self["data.height"], width=self["data.width"])
        return spec


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; unknown keys and bad values are
    rejected with their line number."""
    values: dict = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {number}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {number}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        _, parser = _SCHEMA[key]
        try:
            values[key] = parser(value.strip())
        except ConfigError as exc:
            raise ConfigError(f"line {number}: {key}: {exc}") from None
    return ExperimentConfig(values)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical full-key snapshot; identical configs serialize identically."""
    return "".join(f"{key} = {_format(cfg[key])}\n" for key in _SCHEMA)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_digest(cfg: ExperimentConfig) -> str:
    """Twelve hex chars identifying the resolved config (seed included)."""
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()[:12]
