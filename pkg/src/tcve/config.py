"""Configuration dataclasses and the JSON config-file surface.

An empty JSON object yields the full default configuration; unknown keys are
rejected naming the key. The ``stu.lambda`` JSON key maps to
``StuConfig.balance`` (``lambda`` is reserved in Python).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class SpatialUnetConfig:
    latent_channels: int = 12
    channel_schedule: tuple[int, ...] = (32, 64)
    blocks_per_level: int = 1
    attention_levels: tuple[int, ...] = (1,)
    text_dim: int = 64
    time_dim: int = 64

    def __post_init__(self):
        if not self.channel_schedule:
            raise ValueError("channel_schedule must be nonempty")
        if min(self.channel_schedule) < 1 or self.latent_channels < 1:
            raise ValueError("channel extents must be positive")

    @property
    def levels(self) -> int:
        return len(self.channel_schedule)


@dataclass(frozen=True)
class TemporalUnetConfig:
    base_channels: int | None = None  # defaults to latent channels at build
    levels: int = 2
    blocks_per_level: int = 1
    time_dim: int = 64

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("temporal levels must be >= 1")


@dataclass(frozen=True)
class StuConfig:
    balance: float = 0.1  # JSON key "lambda"
    fuse_up_stages: bool = True

    def __post_init__(self):
        if self.balance < 0:
            raise ValueError(f"balance factor must be >= 0, got {self.balance}")


@dataclass(frozen=True)
class AblationConfig:
    """Structural toggles mirroring the CLI --ablate flags."""

    temporal_unet: bool = True     # off: no-tu
    stu: bool = True               # off: no-stu (plain elementwise summation)
    temporal_attention: bool = True  # off: no-ta
    conv3d: bool = True            # off: no-3dconv


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-5
    iterations: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class ScheduleConfig:
    total_steps: int = 1000  # JSON key "T"
    sample_steps: int = 50   # JSON key "S"
    invert_refine: int = 3   # fixed-point re-evaluations per inversion hop

    def __post_init__(self):
        if self.invert_refine < 0:
            raise ValueError("invert_refine must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    spatial: SpatialUnetConfig = field(default_factory=SpatialUnetConfig)
    temporal: TemporalUnetConfig = field(default_factory=TemporalUnetConfig)
    stu: StuConfig = field(default_factory=StuConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)

    def with_ablation(self, ablation: AblationConfig) -> "RunConfig":
        return replace(self, train=replace(self.train, ablation=ablation))


# JSON key -> dataclass field renames, per section
_KEY_MAP = {
    "stu": {"lambda": "balance"},
    "schedule": {"T": "total_steps", "S": "sample_steps"},
}

_LIST_FIELDS = {"channel_schedule", "attention_levels"}


def _build_section(cls, data: dict, section: str):
    rename = _KEY_MAP.get(section, {})
    valid = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = rename.get(key, key)
        if name not in valid:
            raise ValueError(f"unknown config key: {section}.{key}")
        if name == "ablation":
            if not isinstance(value, dict):
                raise ValueError("train.ablation must be an object")
            value = _build_section(AblationConfig, value, "train.ablation")
        elif name in _LIST_FIELDS:
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ValueError("config root must be a JSON object")
    sections = {
        "spatial": SpatialUnetConfig,
        "temporal": TemporalUnetConfig,
        "stu": StuConfig,
        "train": TrainConfig,
        "schedule": ScheduleConfig,
    }
    kwargs = {}
    for key, value in data.items():
        if key not in sections:
            raise ValueError(f"unknown config key: {key}")
        if not isinstance(value, dict):
            raise ValueError(f"config section {key} must be an object")
        kwargs[key] = _build_section(sections[key], value, key)
    return RunConfig(**kwargs)


def load_config(path: str | Path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def toy_config() -> RunConfig:
    """Desk-scale demo configuration for the bundled 8-frame 16x16 clip.

    A shallow diffusion (T=50, every step retained) keeps inversion round
    trips well-conditioned at this scale, and the widened stand-in gives the
    fixed 100-iteration budget enough trainable leverage.
    """
    return RunConfig(
        spatial=SpatialUnetConfig(channel_schedule=(64, 96)),
        schedule=ScheduleConfig(total_steps=50, sample_steps=50),
    )
