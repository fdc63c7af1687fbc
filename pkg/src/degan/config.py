"""Run configuration: nested dataclasses with JSON round-tripping.

Every field has a default, so ``RunConfig()`` is a runnable desk-scale setup.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError


@dataclass
class DatasetConfig:
    name: str = "mnist"
    path: str = "data/mnist"
    subset: int | None = 500
    # "auto" picks [0,1] for sigmoid-headed presets and [-1,1] for tanh
    range: str = "auto"
    split: str = "train"


@dataclass
class ModelConfig:
    preset: str = "mnist"
    width_mult: float = 0.25
    latent_dim: int = 128
    # optional explicit layer lists keyed by role, overriding the preset
    layers: dict = field(default_factory=dict)
    probe_layer: int | None = None


@dataclass
class TrainConfig:
    # desk scale: 500 images x 2 epochs only give the GAN ~125 steps
    lr: float = 0.02
    batch_size: int = 8
    lambda1: float = 1.0
    lambda2: float = 1.0
    epochs: int = 2
    seed: int = 0
    optimizer: str = "sgd"  # or "momentum", "adam"
    momentum: float = 0.9
    beta1: float = 0.5
    noise: str = "gaussian"
    noise_mode: str = "mean"
    vae_lr: float = 1e-3
    vae_epochs: int = 1
    vae_batch_size: int = 8
    vae_optimizer: str = "adam"
    kl_weight: float = 1.0


@dataclass
class OutputConfig:
    run_dir: str = "runs/default"
    sample_grid: int = 64


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        blocks = {}
        for f in dataclasses.fields(cls):
            sub = d.get(f.name, {})
            if not isinstance(sub, dict):
                raise ConfigurationError(f"config block {f.name!r} must be an object")
            blocks[f.name] = _build(f.default_factory, sub, f.name)
        extra = set(d) - set(blocks)
        if extra:
            raise ConfigurationError(f"unknown config blocks: {sorted(extra)}")
        return cls(**blocks)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text) if text.strip() else {})
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config is not valid JSON: {e}") from e

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")


def _build(factory, values: dict, block: str):
    known = {f.name for f in dataclasses.fields(factory)}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in {block!r}: {sorted(unknown)}")
    return factory(**values)
