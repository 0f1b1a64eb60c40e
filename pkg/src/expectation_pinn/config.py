"""YAML run configuration.

A config file has an ``experiment`` section and an optional ``train``
section; every key maps onto a field of ExperimentConfig or TrainConfig::

    experiment:
      d: 2
      m: 10
      process: time_dependent_gaussian   # ou_process, compound_poisson_process
      forcing: linear                    # exp_linear, square
      xi0: 0.0                           # OU start value
      id: my_run                         # optional, derived when absent
    train:
      epochs: 2000
      learning_rate: 0.003
      optimizer: adam                    # or sgd
      seed: 0
      ...

Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .experiments import ExperimentConfig
from .training import TrainConfig

_EXPERIMENT_KEYS = {"d", "m", "process", "forcing", "xi0", "id"}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}


class ConfigError(ValueError):
    pass


def _coerce(value: str):
    parsed = yaml.safe_load(value)
    return parsed


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - {"experiment", "train"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    exp = dict(data.get("experiment") or {})
    tr = dict(data.get("train") or {})
    bad = set(exp) - _EXPERIMENT_KEYS
    if bad:
        raise ConfigError(f"unknown experiment keys: {sorted(bad)}")
    bad = set(tr) - _TRAIN_KEYS
    if bad:
        raise ConfigError(f"unknown train keys: {sorted(bad)}")
    missing = {"d", "m", "process", "forcing"} - set(exp)
    if missing:
        raise ConfigError(f"missing experiment keys: {sorted(missing)}")
    if "mc_samples" in tr and tr["mc_samples"] != exp["m"]:
        raise ConfigError("train.mc_samples disagrees with experiment.m")
    tr["mc_samples"] = exp["m"]
    try:
        return ExperimentConfig(train=TrainConfig(**tr), **exp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    data = {k: dict(v or {}) for k, v in data.items()}
    for item in overrides:
        path, sep, value = item.partition("=")
        section, dot, key = path.partition(".")
        if not sep or not dot or section not in ("experiment", "train"):
            raise ConfigError(f"bad override {item!r}; expected section.key=value")
        data.setdefault(section, {})[key] = _coerce(value)
        if section == "experiment" and key == "m":
            data.setdefault("train", {}).pop("mc_samples", None)
    return data


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def dump_config(config: ExperimentConfig) -> str:
    d = config.to_dict()
    train = d.pop("train")
    return yaml.safe_dump({"experiment": d, "train": train}, sort_keys=False)
