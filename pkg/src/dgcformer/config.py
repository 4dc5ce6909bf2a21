"""Experiment configuration: TOML file with one section per component.

Every field has a default; unknown sections or keys raise ConfigError.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .forecaster import PatchConfig

ABLATIONS = ("full", "no_gcl", "no_rfl", "dtw_cluster", "ci_only")
CLUSTER_REFRESH = ("epoch", "once")


@dataclass(frozen=True)
class DataConfig:
    dataset: str = "ETTh1"
    data_dir: str = ""
    seq_len: int = 96
    pred_len: int = 96
    instance_norm: bool = True
    forward_fill: bool = False
    # empty -> dataset defaults (ETT counts, otherwise 0.7/0.1/0.2 ratios)
    split_counts: tuple[int, ...] = ()
    # synthetic data instead of a CSV when dataset == "synthetic"
    synthetic_channels: int = 8
    synthetic_groups: int = 2
    synthetic_steps: int = 2000
    synthetic_noise: float = 0.1
    synthetic_seed: int = 0


@dataclass(frozen=True)
class ClusterConfig:
    threshold: float = 0.6
    hidden_dim: int = 32
    latent_dim: int = 10
    epsilon: float = 0.5
    t: float = 1.0
    dtw_radius: int = 50
    dtw_cap: int = 1000


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 0.1
    lambda2: float = 1.0
    lr: float = 1e-4
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 20
    seed: int = 0
    cluster_counts: tuple[int, ...] = (2, 3, 4)
    ablation: str = "full"
    pretrain_epochs: int = 30
    pretrain_lr: float = 5e-3
    pretrain_batch_size: int = 32
    pretrain_stride: int = 1
    cluster_refresh: str = "epoch"
    deterministic: bool = True
    # stride for training windows; evaluation always uses stride 1
    train_stride: int = 1

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be non-negative")
        if self.patience > self.max_epochs:
            raise ConfigError("patience must not exceed max_epochs")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; choose from {', '.join(ABLATIONS)}")
        if self.cluster_refresh not in CLUSTER_REFRESH:
            raise ConfigError(f"cluster_refresh must be one of {CLUSTER_REFRESH}")
        if not self.cluster_counts or any(int(c) < 1 for c in self.cluster_counts):
            raise ConfigError("cluster_counts must be a non-empty list of positive integers")
        if self.batch_size < 1 or self.pretrain_batch_size < 1 or self.max_epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigError("batch_size must be positive and epoch counts non-negative")
        if self.train_stride < 1 or self.pretrain_stride < 1:
            raise ConfigError("strides must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    patch: PatchConfig = field(default_factory=PatchConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        return _lists(d)

    def config_hash(self) -> str:
        """Stable hash of everything that influences results (not the output dir)."""
        d = self.to_dict()
        d.pop("out_dir", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def override(self, **sections: dict[str, Any]) -> "ExperimentConfig":
        """Return a copy with per-section field overrides, e.g. ``train={"seed": 3}``."""
        cfg = self
        for section, values in sections.items():
            if section == "out_dir":
                cfg = replace(cfg, out_dir=str(values))
                continue
            current = getattr(cfg, section)
            cfg = replace(cfg, **{section: _build(type(current), {**asdict(current), **values}, section)})
        return cfg


_SECTIONS = {"data": DataConfig, "patch": PatchConfig, "cluster": ClusterConfig, "train": TrainConfig}


def _lists(obj):
    if isinstance(obj, dict):
        return {k: _lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_lists(v) for v in obj]
    return obj


def _build(cls, values: dict[str, Any], section: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in values.items():
        default = known[name].default
        if default is dataclasses.MISSING:
            default = None
        kwargs[name] = _coerce(value, default, f"{section}.{name}")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list")
        return tuple(value)
    return value


def config_from_dict(d: dict[str, Any]) -> ExperimentConfig:
    d = dict(d)
    unknown = set(d) - set(_SECTIONS) - {"out_dir"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    kwargs: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        section = d.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        kwargs[name] = _build(cls, section, name)
    if "out_dir" in d:
        if not isinstance(d["out_dir"], str):
            raise ConfigError("out_dir must be a string")
        kwargs["out_dir"] = d["out_dir"]
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    out_dir = d.pop("out_dir")
    return tomli_w.dumps({"out_dir": out_dir, **d})


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")
