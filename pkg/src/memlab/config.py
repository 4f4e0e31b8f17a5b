"""Run configuration files.

A run config is a YAML mapping with the sections below. Every key has a typed
default; unknown sections or keys are rejected. ``resolve`` returns the fully
populated mapping, which is what gets written to a run directory.
"""
from __future__ import annotations

import copy
from pathlib import Path

import yaml

from memlab.attacks import AttackConfig
from memlab.data import CsvSchema, Dataset, ToySpec, generate_toy, load_csv
from memlab.losses import LossConfig
from memlab.seeding import stream
from memlab.train import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""


def _attack_defaults(**overrides):
    base = {"norm": "Linf", "eps": 0.1, "alpha": 0.025, "steps": 10, "restarts": 1,
            "objective": "CE", "init": "normal", "init_noise_std": 0.001,
            "domain_box": [], "name": "pgd"}
    base.update(overrides)
    return base


DEFAULTS = {
    "data": {
        "source": "toy",  # toy | csv
        "generator": "TwoGaussians",
        "n_per_class": 500,
        "n_test_per_class": 500,
        "noise_std": 0.45,
        "means": [[-1.0, 0.0], [1.0, 0.0]],
        "csv_train": "",
        "csv_test": "",
        "label_column": "label",
        "n_classes": 2,
        "feature_range": [],
    },
    "model": {"hidden": [20, 20]},
    "attack_train": _attack_defaults(objective="KLFromClean", name="train"),
    "attack_eval": _attack_defaults(steps=20, init="uniform", name="pgd20"),
    "loss": {"method": "TRADES", "beta": 5.0, "beta_mem": [], "K": 0, "stop_grad_weight": True},
    "train": {
        "epochs": 120, "batch_size": 32, "lr_max": 0.005, "momentum": 0.9, "nesterov": False,
        "weight_decay": 0.0005, "schedule": "Constant", "warmup_frac": 0.3, "seed": 0,
    },
    "report": {
        "forgetting_last": 10,
        "plot_epochs": [],
        "paired_method": "",
        "paired_beta": 5.0,
        "paired_beta_mem": 2.0,
        "paired_objective": "KLFromClean",
        "beta_values": [1.0, 2.0, 4.0, 8.0],
        "beta_mem_values": [0.0],
        "plot_resolution": 200,
        "plot_format": "ppm",
    },
}


def _check_type(path, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok:
            value = float(value)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{path}: expected {type(default).__name__}, got {value!r}")
    return value


def resolve(raw: dict | None, overrides=()) -> dict:
    """Merge ``raw`` and ``section.key=value`` overrides onto the defaults, with validation."""
    cfg = copy.deepcopy(DEFAULTS)
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping of sections")
    items = []
    for section, body in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"{section}: unknown section")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: must be a mapping")
        items.extend((section, k, v) for k, v in body.items())
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set {item}: expected section.key=value")
        lhs, rhs = item.split("=", 1)
        section, key = lhs.split(".", 1)
        items.append((section, key, yaml.safe_load(rhs)))
    for section, key, value in items:
        if section not in DEFAULTS:
            raise ConfigError(f"{section}: unknown section")
        if key not in DEFAULTS[section]:
            raise ConfigError(f"{section}.{key}: unknown key")
        cfg[section][key] = _check_type(f"{section}.{key}", DEFAULTS[section][key], value)
    build_train_config(cfg)  # full semantic validation
    return cfg


def load(path, overrides=()) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: YAML parse error: {exc}") from None
    return resolve(raw, overrides)


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)


def _wrap(section, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        prefix = "" if msg.startswith(section) else f"{section}."
        raise ConfigError(f"{prefix}{msg}") from None


def attack_config(cfg: dict, section: str) -> AttackConfig:
    s = dict(cfg[section])
    s["domain_box"] = tuple(s["domain_box"]) or None
    if s["domain_box"] is None and cfg["data"]["source"] == "csv" and cfg["data"]["feature_range"]:
        s["domain_box"] = (0.0, 1.0)  # features are rescaled into the unit box
    return _wrap(section, lambda: AttackConfig(**s))


def loss_config(cfg: dict) -> LossConfig:
    return _wrap("loss", lambda: LossConfig(**cfg["loss"]))


def build_train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    _wrap("data", lambda: _data_spec(cfg))
    return _wrap("train", lambda: TrainConfig(
        hidden=list(cfg["model"]["hidden"]),
        loss=loss_config(cfg),
        train_attack=attack_config(cfg, "attack_train"),
        early_stop_attack=attack_config(cfg, "attack_eval"),
        **t,
    ))


def _data_spec(cfg):
    d = cfg["data"]
    if d["source"] == "toy":
        return ToySpec(generator=d["generator"], n_per_class=d["n_per_class"],
                       noise_std=d["noise_std"], seed=cfg["train"]["seed"], means=d["means"])
    if d["source"] == "csv":
        if not d["csv_train"]:
            raise ConfigError("data.csv_train: required when data.source is csv")
        fr = tuple(d["feature_range"]) or None
        return CsvSchema(d["label_column"], d["n_classes"], fr)
    raise ConfigError(f"data.source: expected 'toy' or 'csv', got {d['source']!r}")


def build_datasets(cfg: dict) -> tuple[Dataset, Dataset]:
    """Train and test splits; toy data draw from the seed's data streams."""
    d = cfg["data"]
    spec = _data_spec(cfg)
    seed = cfg["train"]["seed"]
    if d["source"] == "toy":
        train_ds = generate_toy(spec, "train", stream(seed, "data_train"))
        test_spec = ToySpec(spec.generator, d["n_test_per_class"], spec.noise_std, seed, spec.means)
        test_ds = generate_toy(test_spec, "test", stream(seed, "data_test"))
        return train_ds, test_ds
    train_ds = load_csv(d["csv_train"], spec, "train")
    test_ds = load_csv(d["csv_test"], spec, "test") if d["csv_test"] else train_ds
    return train_ds, test_ds
