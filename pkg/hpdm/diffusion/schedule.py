"""Noise-level distributions for training and sigma grids for sampling."""

import math
from dataclasses import dataclass, field

import numpy as np
import torch


@dataclass
class NoiseSchedule:
    """Log-normal training sigmas, attenuated by ``attenuation**level`` per level."""

    p_mean: float = -1.2
    p_std: float = 1.2
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    sigma_data: float = 0.5
    attenuation: float = 0.5

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSchedule":
        config = cls()
        for key, value in data.items():
            if not hasattr(config, key):
                raise KeyError(key)
            setattr(config, key, float(value))
        return config

    def to_dict(self) -> dict:
        return {
            "p_mean": self.p_mean,
            "p_std": self.p_std,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "sigma_data": self.sigma_data,
            "attenuation": self.attenuation,
        }

    def validate(self, levels: int = 1) -> list[str]:
        errors = []
        if self.sigma_min <= 0:
            errors.append("schedule.sigma_min: must be positive")
        if self.sigma_min >= self.sigma_max:
            errors.append("schedule.sigma_max: must exceed sigma_min")
        if self.sigma_data <= 0:
            errors.append("schedule.sigma_data: must be positive")
        if self.p_std < 0:
            errors.append("schedule.p_std: must be non-negative")
        if not 0.0 < self.attenuation <= 1.0:
            errors.append("schedule.attenuation: must lie in (0, 1]")
        elif self.sigma_max * self.attenuation ** (levels - 1) <= self.sigma_min:
            errors.append(
                "schedule.attenuation: finest level's sigma_max falls below sigma_min"
            )
        return errors

    def level_sigma_max(self, level: int) -> float:
        return self.sigma_max * self.attenuation ** level


@dataclass
class SamplerConfig:
    """Per-level reverse-diffusion settings.

    Level ``l`` takes ``max(steps // 2**l, min_steps)`` steps. Second-order
    correction applies to ``heun_levels``; churn applies to level 0 only.
    """

    steps: int = 128
    min_steps: int = 4
    rho: float = 7.0
    churn: float = 0.0
    s_tmin: float = 0.0
    s_tmax: float = math.inf
    s_noise: float = 1.0
    heun_levels: list[int] = field(default_factory=lambda: [0])
    guidance_scale: float = 1.0

    @classmethod
    def from_dict(cls, data: dict) -> "SamplerConfig":
        config = cls()
        for key, value in data.items():
            if not hasattr(config, key):
                raise KeyError(key)
            if key in ("steps", "min_steps"):
                value = int(value)
            elif key == "heun_levels":
                value = [int(v) for v in value]
            else:
                value = float(value)
            setattr(config, key, value)
        return config

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "min_steps": self.min_steps,
            "rho": self.rho,
            "churn": self.churn,
            "s_tmin": self.s_tmin,
            "s_tmax": self.s_tmax,
            "s_noise": self.s_noise,
            "heun_levels": list(self.heun_levels),
            "guidance_scale": self.guidance_scale,
        }

    def validate(self) -> list[str]:
        errors = []
        if self.min_steps < 4:
            errors.append("sampler.min_steps: must be at least 4")
        if self.steps < self.min_steps:
            errors.append("sampler.steps: must be at least min_steps")
        if self.rho <= 0:
            errors.append("sampler.rho: must be positive")
        if self.churn < 0:
            errors.append("sampler.churn: must be non-negative")
        if any(level < 0 for level in self.heun_levels):
            errors.append("sampler.heun_levels: levels must be non-negative")
        return errors

    def level_steps(self, level: int) -> int:
        return max(self.steps // 2 ** level, self.min_steps)


def sample_sigmas(
    schedule: NoiseSchedule, levels: int, rng: np.random.Generator
) -> list[float]:
    """One independent sigma per level: ln s_l ~ N(p_mean + l ln(att), p_std), clamped."""
    out = []
    for level in range(levels):
        mean = schedule.p_mean + level * math.log(schedule.attenuation)
        log_sigma = mean + schedule.p_std * float(rng.standard_normal())
        out.append(min(max(math.exp(log_sigma), schedule.sigma_min), schedule.sigma_max))
    return out


def sigma_grid(sampler: SamplerConfig, schedule: NoiseSchedule, level: int) -> torch.Tensor:
    """Decreasing float64 sigmas for ``level``: N_l rho-spaced values, then 0.

    The grid holds ``level_steps(level) + 1`` entries and so defines
    ``level_steps(level)`` steps.
    """
    n = sampler.level_steps(level)
    hi = schedule.level_sigma_max(level) ** (1.0 / sampler.rho)
    lo = schedule.sigma_min ** (1.0 / sampler.rho)
    ramp = torch.linspace(0.0, 1.0, n, dtype=torch.float64)
    sigmas = (hi + ramp * (lo - hi)) ** sampler.rho
    return torch.cat([sigmas, torch.zeros(1, dtype=torch.float64)])
