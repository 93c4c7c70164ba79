"""Patch-pyramid denoiser."""

import torch

from ..geometry.coords import PyramidSpec
from .config import DenoiserConfig
from .denoiser import HPDMDenoiser, LevelState


def build_denoiser(config: DenoiserConfig, spec: PyramidSpec, seed: int = 0) -> HPDMDenoiser:
    """Construct a denoiser whose initial weights depend only on ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return HPDMDenoiser(config, spec)


__all__ = ["DenoiserConfig", "HPDMDenoiser", "LevelState", "build_denoiser"]
