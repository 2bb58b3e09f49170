"""Run configuration: every module's settings in one JSON document.

Sections mirror the module dataclasses; a missing section or key keeps its
default, an unknown one is an error. Example::

    {"sim": {"n_devices": 200, "n_tasks": 4000},
     "train": {"epochs_max": 12},
     "alpha": {"alpha1": 0.6, "alpha2": 0.4}}
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .decision import ChannelModel
from .embed import Node2vecConfig
from .model import ModelConfig
from .simnet import SimConfig
from .trainer import TrainConfig


@dataclass
class WindowConfig:
    n_slots: int = 10

    def __post_init__(self):
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")


@dataclass
class AlphaConfig:
    alpha1: float = 0.6
    alpha2: float = 0.4

    def __post_init__(self):
        if abs(self.alpha1 + self.alpha2 - 1.0) > 1e-12:
            raise ValueError(f"alpha1 + alpha2 must be 1, got {self.alpha1} + {self.alpha2}")


@dataclass
class RunConfig:
    seed: int = 0
    sim: SimConfig = field(default_factory=SimConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    node2vec: Node2vecConfig = field(default_factory=Node2vecConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    alpha: AlphaConfig = field(default_factory=AlphaConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ValueError(f"{where}: expected an object, got {type(doc).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ValueError(f"{where}: unknown key(s) {unknown}")
    defaults = cls()
    kwargs = {}
    for name, value in doc.items():
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValueError(f"{where}: {exc}") from exc


def parse_config(doc: dict) -> RunConfig:
    """Validate and build a :class:`RunConfig` from a decoded JSON object."""
    return _build(RunConfig, doc, "config")


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)
