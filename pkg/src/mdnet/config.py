"""JSON configuration with one section per stage.

Unknown sections or keys are rejected. ``override`` applies dotted
``section.key=value`` assignments with JSON-typed values.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .losses import LossConfig
from .metrics import MetricsConfig
from .model import ModelConfig
from .postprocess import PostprocessConfig
from .preprocess import PreprocessConfig
from .train import TrainConfig

ENV_VAR = "MDNET_CONFIG"

SECTIONS = {
    "preprocess": PreprocessConfig,
    "augment": AugmentConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "train": TrainConfig,
    "postprocess": PostprocessConfig,
    "metrics": MetricsConfig,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build_section(name: str, values: dict):
    cls = SECTIONS[name]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    kwargs = {}
    for key, value in values.items():
        # tuples arrive as JSON lists
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def from_dict(d: dict) -> Config:
    unknown = set(d) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return Config(**{name: _build_section(name, d.get(name, {})) for name in SECTIONS})


def load_config(path=None, base: Config | None = None) -> Config:
    """Read a JSON config from ``path`` or ``$MDNET_CONFIG``.

    Keys in the file override ``base`` (the defaults when omitted) one
    section at a time.
    """
    base = base or Config()
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return base
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = set(d) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    merged = base.to_dict()
    for section, values in d.items():
        if not isinstance(values, dict):
            raise ConfigError(f"section [{section}] must be a JSON object")
        merged[section].update(values)
    return from_dict(merged)


def override(config: Config, assignments) -> Config:
    d = config.to_dict()
    for item in assignments or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in d:
            raise ConfigError(f"unknown config section {section!r}")
        if key not in d[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        d[section][key] = value
    return from_dict(d)


def toy_config(size: int = 32, seed: int = 0) -> Config:
    """Desk-scale settings: 32^3 grid, short schedule, larger step size."""
    shape = (size, size, size)
    # keep the small-enhancing rule at the same fraction of the grid as 500 of 240x240x155
    min_enh = max(1, round(500 * size ** 3 / (240 * 240 * 155)))
    return Config(
        preprocess=PreprocessConfig(target_shape=shape),
        augment=AugmentConfig(seed=seed),
        model=ModelConfig(input_shape=shape),
        train=TrainConfig(alpha0=1e-2, n_epochs=100, seed=seed, augment=False),
        postprocess=PostprocessConfig(min_enh_voxels=min_enh),
    )
