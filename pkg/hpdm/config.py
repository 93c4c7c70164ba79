"""Run configuration: one declarative file drives training, sampling and benchmarks.

Files are either dotted key-value text::

    # comments are allowed
    pyramid.levels = 3
    pyramid.patch = 4x8x8
    denoiser.num_levels_per_block = 1,1,2,2,3,3

or nested JSON (``.json`` suffix). ``save`` always writes the text form.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

from .data.synthetic import SyntheticSpec
from .diffusion.schedule import NoiseSchedule, SamplerConfig
from .errors import ConfigError, GeometryError
from .geometry.coords import Dims, PyramidSpec, format_dims, parse_dims
from .model.config import DenoiserConfig
from .numerics.optim import Schedule
from .numerics.records import write_atomic
from .numerics.runtime import resolve_threads
from .state.identity import hash_text
from .tiled.inference import TiledConfig

DEFAULT_CONFIG_NAME = "hpdm.cfg"


@dataclass
class PyramidSettings:
    levels: int = 3
    patch: Dims = (4, 8, 8)
    full: Dims = (16, 32, 32)
    snap_offsets: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "PyramidSettings":
        settings = cls()
        for key, value in data.items():
            if not hasattr(settings, key):
                raise KeyError(key)
            setattr(settings, key, tuple(value) if isinstance(value, list) else value)
        return settings

    def to_dict(self) -> dict:
        return {
            "levels": self.levels,
            "patch": list(self.patch),
            "full": list(self.full),
            "snap_offsets": self.snap_offsets,
        }

    @property
    def spec(self) -> PyramidSpec:
        patch, full = tuple(self.patch), tuple(self.full)
        return PyramidSpec(self.levels, patch, full)  # type: ignore[arg-type]


@dataclass
class OptimConfig:
    """AdamW, learning-rate schedule and EMA settings."""

    peak_lr: float = 2e-3
    min_lr: float = 1e-5
    warmup_steps: int = 100
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    ema_decay: float = 0.999
    grad_clip: float = 1.0

    @classmethod
    def from_dict(cls, data: dict) -> "OptimConfig":
        config = cls()
        for key, value in data.items():
            if not hasattr(config, key):
                raise KeyError(key)
            setattr(config, key, int(value) if key == "warmup_steps" else float(value))
        return config

    def to_dict(self) -> dict:
        return {
            "peak_lr": self.peak_lr,
            "min_lr": self.min_lr,
            "warmup_steps": self.warmup_steps,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "ema_decay": self.ema_decay,
            "grad_clip": self.grad_clip,
        }

    def validate(self) -> list[str]:
        errors = []
        if self.peak_lr <= 0:
            errors.append("optim.peak_lr: must be positive")
        if not 0 <= self.min_lr <= self.peak_lr:
            errors.append("optim.min_lr: must lie in [0, peak_lr]")
        if self.warmup_steps < 0:
            errors.append("optim.warmup_steps: must be non-negative")
        if self.weight_decay < 0:
            errors.append("optim.weight_decay: must be non-negative")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                errors.append(f"optim.{name}: must lie in [0, 1)")
        if self.eps <= 0:
            errors.append("optim.eps: must be positive")
        if not 0.0 < self.ema_decay < 1.0:
            errors.append("optim.ema_decay: must lie in (0, 1)")
        if self.grad_clip < 0:
            errors.append("optim.grad_clip: must be non-negative (0 disables clipping)")
        return errors

    def schedule(self, total_steps: int) -> Schedule:
        return Schedule(self.peak_lr, self.min_lr, self.warmup_steps, total_steps)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    dataset_size: int = 512
    checkpoint_every: int = 250
    log_every: int = 25
    cond_dropout: float = 0.1
    active_levels: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        config = cls()
        for key, value in data.items():
            if not hasattr(config, key):
                raise KeyError(key)
            setattr(config, key, float(value) if key == "cond_dropout" else int(value))
        return config

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "batch_size": self.batch_size,
            "dataset_size": self.dataset_size,
            "checkpoint_every": self.checkpoint_every,
            "log_every": self.log_every,
            "cond_dropout": self.cond_dropout,
            "active_levels": self.active_levels,
        }

    def validate(self, levels: int) -> list[str]:
        errors = []
        if self.steps < 0:
            errors.append("train.steps: must be non-negative")
        for name in ("batch_size", "dataset_size", "checkpoint_every", "log_every"):
            if getattr(self, name) < 1:
                errors.append(f"train.{name}: must be at least 1")
        if not 0.0 <= self.cond_dropout < 1.0:
            errors.append("train.cond_dropout: must lie in [0, 1)")
        if not 0 <= self.active_levels <= levels:
            errors.append(f"train.active_levels: must lie in [0, {levels}] (0 = all levels)")
        return errors


@dataclass
class RunSettings:
    seed: int = 0
    output_dir: str = "runs/default"
    threads: int = 0
    deterministic: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "RunSettings":
        settings = cls()
        for key, value in data.items():
            if not hasattr(settings, key):
                raise KeyError(key)
            setattr(settings, key, value)
        return settings

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "threads": self.threads,
            "deterministic": self.deterministic,
        }

    def validate(self) -> list[str]:
        errors = []
        if self.seed < 0:
            errors.append("run.seed: must be non-negative")
        if self.threads < 0:
            errors.append("run.threads: must be non-negative (0 = torch default)")
        if not self.output_dir:
            errors.append("run.output_dir: must not be empty")
        return errors

    @property
    def effective_threads(self) -> int:
        return resolve_threads(self.threads)


SECTIONS: dict[str, type] = {
    "pyramid": PyramidSettings,
    "denoiser": DenoiserConfig,
    "schedule": NoiseSchedule,
    "sampler": SamplerConfig,
    "tiled": TiledConfig,
    "optim": OptimConfig,
    "data": SyntheticSpec,
    "train": TrainConfig,
    "run": RunSettings,
}

# sections that determine the network's parameters
MODEL_SECTIONS = ("pyramid", "denoiser")


# -- value coercion ------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def coerce(text: str, default: Any) -> Any:
    """Parse ``text`` into the type of ``default``."""
    text = text.strip()
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return parse_dims(text)
    if isinstance(default, list):
        return [int(v) for v in text.split(",") if v.strip()]
    return text


def render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    if isinstance(value, tuple):
        return format_dims(value)  # type: ignore[arg-type]
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


# -- the run config ------------------------------------------------------------


@dataclass
class RunConfig:
    """Every section of a run, resolved."""

    pyramid: PyramidSettings = field(default_factory=PyramidSettings)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    tiled: TiledConfig = field(default_factory=TiledConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    run: RunSettings = field(default_factory=RunSettings)

    @property
    def spec(self) -> PyramidSpec:
        return self.pyramid.spec

    # -- dict / JSON ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {name: getattr(self, name).to_dict() for name in SECTIONS}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Build from nested sections; unknown or ill-typed keys raise ConfigError."""
        if not isinstance(data, dict):
            raise ConfigError(f"expected an object of sections, got {type(data).__name__}")
        config = cls()
        errors = []
        for name, values in data.items():
            if name not in SECTIONS:
                errors.append(f"{name}: unknown section")
                continue
            if not isinstance(values, dict):
                errors.append(f"{name}: expected an object of keys, got {type(values).__name__}")
                continue
            for key in values:
                if not hasattr(getattr(config, name), key):
                    errors.append(f"{name}.{key}: unknown key")
            known = {k: v for k, v in values.items() if hasattr(getattr(config, name), k)}
            try:
                setattr(config, name, SECTIONS[name].from_dict(known))
            except (TypeError, ValueError, KeyError, GeometryError) as e:
                errors.append(f"{name}: {e}")
        if errors:
            raise ConfigError("could not read configuration", errors)
        return config

    # -- dotted text -----------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        defaults = cls()
        sections: dict[str, dict] = {}
        errors = []
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            section, dot, name = key.strip().partition(".")
            if not sep or not dot:
                errors.append(f"line {number}: expected 'section.key = value', got {raw!r}")
                continue
            if section not in SECTIONS:
                errors.append(f"{section}: unknown section (line {number})")
                continue
            target = getattr(defaults, section)
            if not hasattr(target, name):
                errors.append(f"{section}.{name}: unknown key (line {number})")
                continue
            try:
                sections.setdefault(section, {})[name] = coerce(value, getattr(target, name))
            except (ValueError, GeometryError) as e:
                errors.append(f"{section}.{name}: {e}")
        if errors:
            raise ConfigError("could not parse configuration", errors)
        return cls.from_dict(sections)

    def to_text(self, sections: tuple[str, ...] = tuple(SECTIONS)) -> str:
        """Canonical dotted text; equal configs render identically."""
        lines = []
        for name in sections:
            section = getattr(self, name)
            lines.append(f"# {name}")
            for key in section.to_dict():
                lines.append(f"{name}.{key} = {render(getattr(section, key))}")
            lines.append("")
        return "\n".join(lines)

    # -- files -----------------------------------------------------------------

    @classmethod
    def load(cls, path: Union[str, Path], validate: bool = True) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            text = path.read_text(encoding="utf-8")
        except UnicodeDecodeError as e:
            raise ConfigError(f"{path}: not UTF-8 text ({e.reason} at byte {e.start})") from e
        if path.suffix == ".json":
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON ({e})") from e
            try:
                config = cls.from_dict(data)
            except (AttributeError, KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"{path}: malformed JSON config ({e})") from e
        else:
            config = cls.from_text(text)
        if validate:
            config.check()
        return config

    def save(self, path: Union[str, Path]) -> None:
        write_atomic(Path(path), self.to_text().encode("utf-8"))

    # -- validation and identity ---------------------------------------------

    def validate(self) -> list[str]:
        """Every problem found, as ``"section.field: message"`` strings."""
        spec = self.spec
        errors = spec.validate()
        errors += self.denoiser.validate(spec.levels, spec.patch)
        errors += self.schedule.validate(spec.levels)
        errors += self.sampler.validate()
        errors += self.tiled.validate()
        errors += self.optim.validate()
        errors += self.data.validate()
        errors += self.train.validate(spec.levels)
        errors += self.run.validate()

        if tuple(self.data.resolution) != tuple(spec.full):
            errors.append(
                f"data.resolution: must equal pyramid.full ({format_dims(spec.full)})"
            )
        if self.data.num_classes != self.denoiser.num_classes:
            errors.append("data.num_classes: must equal denoiser.num_classes")
        if self.data.channels != self.denoiser.channels:
            errors.append("data.channels: must equal denoiser.channels")
        if any(level >= spec.levels for level in self.sampler.heun_levels):
            errors.append(f"sampler.heun_levels: levels must be below {spec.levels}")
        return errors

    def check(self) -> "RunConfig":
        errors = self.validate()
        if errors:
            raise ConfigError("invalid configuration", errors)
        return self

    def config_hash(self) -> str:
        return hash_text(self.to_text())

    def model_hash(self) -> str:
        """Hash of the sections that fix the parameter layout."""
        return hash_text(self.to_text(MODEL_SECTIONS))


def default_config() -> RunConfig:
    """Desk-scale defaults: a 3-level 16x32x32 pyramid over 4x8x8 patches."""
    return RunConfig()
