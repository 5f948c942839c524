"""Run configuration: hyperparameters, paths, and ablation switches."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import ConfigurationError
from .segnet import AblationConfig

DICE_WEIGHT = 1.0
BCE_WEIGHT = 3.0


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr_init: float = 0.01
    lr_min: float = 1e-5
    weight_decay: float = 5e-4
    gan_iterations: int = 500
    gan_lr: float = 5e-4
    gan_batch_size: int = 1
    lambda_cyc: float = 10.0
    seed: int = 0
    image_size: int = 64
    width_mult: float = 1.0
    depth_mult: float = 1.0
    data_dir: str = "data"
    out_dir: str = "runs"
    gan_checkpoint: str = "runs/gan.ckpt"
    ablation: AblationConfig = field(default_factory=AblationConfig)
    n_train: int = 200
    n_val: int = 40
    n_test: int = 40

    def validate(self):
        if self.lr_min > self.lr_init:
            raise ConfigurationError("lr_min must not exceed lr_init")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        self.ablation.validate()

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        abl = d.pop("ablation", {})
        cfg = cls(**d, ablation=AblationConfig(**abl))
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path) -> "TrainConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file not found: {p}")
        return cls.from_dict(json.loads(p.read_text()))
