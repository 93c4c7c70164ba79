"""Joint pyramid loss and one optimization step."""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from ..errors import NonFiniteError, ShapeError
from ..geometry.coords import PatchCoords, PyramidSpec, sample_pyramid_coords
from ..geometry.extract import extract_pyramid
from ..model.denoiser import HPDMDenoiser
from ..numerics import kernels
from ..numerics.autodiff import backward
from ..numerics.optim import OptimizerState
from ..numerics.rng import stream, torch_generator
from .precondition import combine, loss_weight, precondition
from .schedule import NoiseSchedule, sample_sigmas

logger = logging.getLogger(__name__)

COND_DROPOUT = 0.1


@dataclass
class PyramidBatch:
    """Everything one joint step needs, per level: clean patches, coords, sigmas, noise."""

    patches: list[torch.Tensor]
    coords: list[list[PatchCoords]]
    sigmas: list[torch.Tensor]
    noise: list[torch.Tensor]
    labels: torch.Tensor

    @property
    def levels(self) -> int:
        return len(self.patches)


@dataclass
class StepResult:
    loss: float
    level_losses: list[float]
    lr: float


def drop_labels(
    labels: torch.Tensor, null_class: int, p: float, generator: torch.Generator
) -> torch.Tensor:
    """Replace each label by ``null_class`` with probability ``p``."""
    if p <= 0:
        return labels
    draws = torch.rand(labels.shape, generator=generator)
    return torch.where(draws < p, torch.full_like(labels, null_class), labels)


def make_batch(
    videos: torch.Tensor,
    labels: torch.Tensor,
    spec: PyramidSpec,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    generator: torch.Generator,
    null_class: int,
    cond_dropout: float = COND_DROPOUT,
    snap_offsets: bool = True,
    active_levels: int = 0,
) -> PyramidBatch:
    """Sample nested coords, clean patches, per-level sigmas and noise for a batch."""
    if tuple(videos.shape[2:]) != tuple(spec.full):
        raise ShapeError("training_step", videos.shape, spec.full, detail="video dims")
    levels = active_levels or spec.levels
    per_sample_coords, per_sample_patches, per_sample_sigmas = [], [], []
    for video in videos:
        coords = sample_pyramid_coords(spec, rng, snap_offsets)[:levels]
        per_sample_coords.append(coords)
        per_sample_patches.append(extract_pyramid(video, coords, spec, snap_offsets))
        per_sample_sigmas.append(sample_sigmas(schedule, levels, rng))

    patches = [torch.stack([p[l] for p in per_sample_patches]) for l in range(levels)]
    coords_by_level = [[c[l] for c in per_sample_coords] for l in range(levels)]
    sigmas = [
        torch.tensor([s[l] for s in per_sample_sigmas], dtype=torch.float32)
        for l in range(levels)
    ]
    noise = [
        torch.randn(p.shape, generator=generator, dtype=p.dtype) for p in patches
    ]
    labels = drop_labels(labels.long(), null_class, cond_dropout, generator)
    return PyramidBatch(patches, coords_by_level, sigmas, noise, labels)


def joint_loss(
    model: HPDMDenoiser,
    patches: Sequence[torch.Tensor],
    coords: Sequence[Sequence[PatchCoords]],
    sigmas: Sequence[torch.Tensor],
    labels: torch.Tensor,
    noise: Sequence[torch.Tensor],
    sigma_data: float,
) -> tuple[torch.Tensor, list[torch.Tensor]]:
    """Weighted denoising loss averaged over levels.

    Each level contributes the batch mean of w(sigma) * mean((D - p)^2).
    Returns (total, per-level losses).
    """
    inputs, skips, outs, noise_levels, noisy = [], [], [], [], []
    for patch, sigma, eps in zip(patches, sigmas, noise):
        x_noisy = patch + eps * sigma.to(patch.dtype).reshape(-1, 1, 1, 1, 1)
        net_in, c_skip, c_out, c_noise = precondition(x_noisy, sigma, sigma_data)
        noisy.append(x_noisy)
        inputs.append(net_in)
        skips.append(c_skip)
        outs.append(c_out)
        noise_levels.append(c_noise)

    raw = model.forward_pyramid(inputs, noise_levels, labels, coords)

    level_losses = []
    for l, patch in enumerate(patches):
        denoised = combine(noisy[l], raw[l], skips[l], outs[l])
        weight = loss_weight(sigmas[l], sigma_data).to(patch.dtype)
        per_sample = ((denoised - patch) ** 2).flatten(1).mean(dim=1)
        level_losses.append((weight * per_sample).mean())
    total = kernels.scale(torch.stack(level_losses).sum(), 1.0 / len(level_losses))
    return total, level_losses


def training_step(
    model: HPDMDenoiser,
    optimizer: OptimizerState,
    videos: torch.Tensor,
    labels: torch.Tensor,
    schedule: NoiseSchedule,
    seed: int,
    step: int,
    cond_dropout: float = COND_DROPOUT,
    snap_offsets: bool = True,
    active_levels: int = 0,
) -> StepResult:
    """Sample a pyramid batch, compute the joint loss, backpropagate and update.

    All randomness is keyed by ``(seed, step)`` so a resumed run replays
    exactly the same batches.
    """
    batch = make_batch(
        videos,
        labels,
        model.spec,
        schedule,
        rng=stream(seed, "pyramid", step),
        generator=torch_generator(seed, "noise", step),
        null_class=model.tokenizer.null_class,
        cond_dropout=cond_dropout,
        snap_offsets=snap_offsets,
        active_levels=active_levels,
    )
    model.train()
    optimizer.zero_grad()
    total, level_losses = joint_loss(
        model, batch.patches, batch.coords, batch.sigmas, batch.labels, batch.noise,
        schedule.sigma_data,
    )
    if not bool(torch.isfinite(total)):
        raise NonFiniteError("joint_loss", f"loss = {float(total)} at step {step}")
    backward(total)
    lr = optimizer.step()
    return StepResult(
        loss=float(total.detach()),
        level_losses=[float(x.detach()) for x in level_losses],
        lr=lr,
    )


def denoise_pyramid(
    model: HPDMDenoiser,
    noisy: Sequence[torch.Tensor],
    sigmas: Sequence[torch.Tensor],
    labels: torch.Tensor,
    coords: Sequence[Sequence[PatchCoords]],
    sigma_data: float,
) -> list[torch.Tensor]:
    """D(x; sigma) for every level of a noisy pyramid."""
    inputs, skips, outs, levels = [], [], [], []
    for x, sigma in zip(noisy, sigmas):
        net_in, c_skip, c_out, c_noise = precondition(x, sigma, sigma_data)
        inputs.append(net_in)
        skips.append(c_skip)
        outs.append(c_out)
        levels.append(c_noise)
    raw = model.forward_pyramid(inputs, levels, labels, coords)
    return [combine(x, r, s, o) for x, r, s, o in zip(noisy, raw, skips, outs)]
