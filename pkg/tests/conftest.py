"""Shared fixtures: tiny pyramids and models that run in milliseconds on CPU."""

from dataclasses import replace

import pytest
import torch

from hpdm.config import OptimConfig, PyramidSettings, RunConfig, RunSettings, TrainConfig
from hpdm.data.synthetic import SyntheticSpec
from hpdm.diffusion.schedule import NoiseSchedule, SamplerConfig
from hpdm.geometry.coords import PyramidSpec
from hpdm.model import build_denoiser
from hpdm.model.config import DenoiserConfig
from hpdm.tiled.inference import TiledConfig

TINY_PATCH = (2, 4, 4)
TINY_FULL = (4, 8, 8)


def tiny_denoiser_config(**overrides) -> DenoiserConfig:
    config = DenoiserConfig(
        num_blocks=2,
        num_latents=4,
        latent_dim=16,
        token_dim=8,
        heads=2,
        head_dim=4,
        tokenizer=(1, 2, 2),
        num_levels_per_block=[1, 2],
        num_classes=2,
        channels=3,
        mlp_ratio=2,
        compute_depth=1,
        fourier_bands=4,
    )
    return replace(config, **overrides)


def tiny_run_config(output_dir: str = "runs/tiny", **sections) -> RunConfig:
    config = RunConfig(
        pyramid=PyramidSettings(levels=2, patch=TINY_PATCH, full=TINY_FULL),
        denoiser=tiny_denoiser_config(),
        schedule=NoiseSchedule(),
        sampler=SamplerConfig(steps=8, min_steps=4),
        tiled=TiledConfig(overlap="hw", tile_batch=4),
        optim=OptimConfig(warmup_steps=2),
        data=SyntheticSpec(resolution=TINY_FULL, num_classes=2),
        train=TrainConfig(
            steps=4, batch_size=2, dataset_size=8, checkpoint_every=2, log_every=1
        ),
        run=RunSettings(seed=0, output_dir=output_dir, threads=1, deterministic=True),
    )
    return replace(config, **sections)


def randomize(model: torch.nn.Module, seed: int = 0, std: float = 0.05) -> torch.nn.Module:
    """Perturb every parameter so zero-initialized branches carry signal."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)
    return model


@pytest.fixture
def tiny_spec() -> PyramidSpec:
    return PyramidSpec(levels=2, patch=TINY_PATCH, full=TINY_FULL)


@pytest.fixture
def tiny_config() -> DenoiserConfig:
    return tiny_denoiser_config()


@pytest.fixture
def tiny_model(tiny_config, tiny_spec):
    return randomize(build_denoiser(tiny_config, tiny_spec, seed=0))


@pytest.fixture
def run_config(tmp_path) -> RunConfig:
    return tiny_run_config(str(tmp_path / "run"))


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.delenv("HPDM_THREADS", raising=False)
    torch.set_num_threads(1)
    yield
