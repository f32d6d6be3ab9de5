"""Run configuration files (JSON) for the command-line tool.

Layout::

    {
      "seed": 0,
      "data":  {SyntheticConfig fields except seed, plus "train_fraction"},
      "model": {"hidden", "z_dim", "fused", "dtype"},
      "train": {TrainConfig fields except seed},
      "probe": {"epochs", "lr", "batch_size"},
      "paths": {"dataset", "checkpoint", "out"}
    }

Every section is optional. Unknown keys anywhere are rejected. Relative
paths are resolved against the directory holding the config file. One root
seed drives data generation, the split and training through named streams.
"""

from __future__ import annotations

import json
import math
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .data import SyntheticConfig
from .exceptions import ConfigError, ContractError
from .training import TrainConfig

SECTIONS = ("seed", "data", "model", "train", "probe", "paths")


@dataclass
class ModelSection:
    hidden: int = 300
    z_dim: int = 16
    fused: Optional[int] = None
    dtype: str = "float64"


@dataclass
class ProbeSection:
    epochs: int = 100
    lr: float = 1e-2
    batch_size: int = 32


@dataclass
class PathSection:
    dataset: str = "dataset.bin"
    checkpoint: str = "model.ckpt"
    out: str = "out"


@dataclass
class RunConfig:
    seed: int = 0
    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    train_fraction: float = 0.8
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeSection = field(default_factory=ProbeSection)
    paths: PathSection = field(default_factory=PathSection)
    base_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, name: str) -> Path:
        p = Path(getattr(self.paths, name))
        return p if p.is_absolute() else self.base_dir / p

    def synthetic(self) -> SyntheticConfig:
        cfg = SyntheticConfig(**{**asdict(self.data), "seed": self.seed})
        cfg.validate()
        return cfg

    def training(self, **overrides) -> TrainConfig:
        cfg = TrainConfig(**{**asdict(self.train), "seed": self.seed, **overrides})
        cfg.validate()
        return cfg

    def model_kwargs(self) -> dict:
        return asdict(self.model)

    def validate(self) -> None:
        try:
            self.synthetic()
            self.training()
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("data.train_fraction must lie in (0, 1)")
        m = self.model
        if m.hidden < 1 or m.z_dim < 0 or (m.fused is not None and m.fused < 1):
            raise ConfigError("model: hidden and fused must be positive, z_dim non-negative")
        if m.dtype not in ("float64", "float32"):
            raise ConfigError("model.dtype must be 'float64' or 'float32'")
        if self.probe.epochs < 1 or self.probe.lr <= 0 or self.probe.batch_size < 1:
            raise ConfigError("probe: epochs, lr and batch_size must be positive")


def _matches(value: Any, hint: Any) -> bool:
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        return any(_matches(value, h) for h in typing.get_args(hint))
    if hint is type(None):
        return value is None
    if origin is list:
        (item,) = typing.get_args(hint)
        return isinstance(value, list) and all(_matches(v, item) for v in value)
    if hint is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if hint is int:
        return isinstance(value, int)
    if hint is float:
        return isinstance(value, (int, float)) and math.isfinite(value)
    if hint is str:
        return isinstance(value, str)
    return True


def _build(section: str, cls, values: Any, skip: tuple[str, ...] = ()):
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in fields(cls)} - set(skip)
    unknown = sorted(set(values) - names)
    if unknown:
        hint = " (set the seed at the top level)" if "seed" in unknown else ""
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}{hint}")
    hints = typing.get_type_hints(cls)
    for name, value in values.items():
        if not _matches(value, hints[name]):
            raise ConfigError(f"{section}.{name}: unexpected value {value!r}")
    try:
        return cls(**values)
    except (TypeError, ContractError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def from_dict(raw: Any, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    data = raw.get("data", {})
    fraction = 0.8
    if isinstance(data, dict) and "train_fraction" in data:
        data = dict(data)
        fraction = data.pop("train_fraction")
        if not _matches(fraction, float):
            raise ConfigError(f"data.train_fraction: unexpected value {fraction!r}")
    cfg = RunConfig(
        seed=seed,
        data=_build("data", SyntheticConfig, data, skip=("seed",)),
        train_fraction=float(fraction),
        model=_build("model", ModelSection, raw.get("model", {})),
        train=_build("train", TrainConfig, raw.get("train", {}), skip=("seed",)),
        probe=_build("probe", ProbeSection, raw.get("probe", {})),
        paths=_build("paths", PathSection, raw.get("paths", {})),
        base_dir=base_dir or Path.cwd(),
    )
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    """Parse and validate a config file; OSError propagates for IO failures."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return from_dict(raw, path.resolve().parent)
