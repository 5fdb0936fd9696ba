"""Run configuration: model / train / data / eval / paths sections in one YAML document.

Unknown sections or keys are errors, so a typo never silently falls back to a default.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .data.synth import GenConfig
from .inference import EvalConfig
from .model.network import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig(GenConfig):
    seed: int = 0
    novel_fraction_obj: float = 0.25
    novel_fraction_rel: float = 0.25
    num_train: int = 4              # first videos form the training split, the rest test

    def gen_config(self) -> GenConfig:
        names = {f.name for f in dataclasses.fields(GenConfig)}
        return GenConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def validate(self):
        for name in ("novel_fraction_obj", "novel_fraction_rel"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"data.{name} must lie in [0, 1), got {v}")
        if not 0 < self.num_train <= self.num_videos:
            raise ConfigError("data.num_train must be in [1, num_videos]")


@dataclass
class PathsConfig:
    data: str = "runs/data"
    out: str = "runs/train"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> "RunConfig":
        try:
            self.model.validate()
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.data.validate()
        if not 0.0 < self.eval.viou_threshold < 1.0 or not 0.0 < self.eval.merge_iou < 1.0:
            raise ConfigError("eval thresholds must lie in (0, 1)")
        if self.eval.split not in ("all", "novel", "base"):
            raise ConfigError(f"unknown eval split {self.eval.split!r}")
        if self.train.segment_length != self.eval.segment_length:
            raise ConfigError("train and eval segment lengths differ")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig, "eval": EvalConfig,
             "paths": PathsConfig}


def _build(cls, values: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    kwargs = {}
    for k, v in values.items():
        default = getattr(cls(), k)
        if isinstance(default, tuple) and isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    return cls(**kwargs)


def from_dict(doc: dict | None) -> RunConfig:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping of sections")
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {name: _build(cls, doc.get(name) or {}, name) for name, cls in _SECTIONS.items()}
    return RunConfig(**parts).validate()


def load_config(path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return from_dict(doc)


def dump_config(cfg: RunConfig) -> str:
    def plain(x):
        if isinstance(x, tuple):
            return [plain(v) for v in x]
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        return x
    return yaml.safe_dump(plain(cfg.to_dict()), sort_keys=False)


def save_config(cfg: RunConfig, path):
    Path(path).write_text(dump_config(cfg))
