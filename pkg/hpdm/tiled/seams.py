"""Seam metric: how much sharper the canvas changes across tile borders than elsewhere."""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import torch

from ..diffusion.schedule import NoiseSchedule, SamplerConfig
from ..errors import GeometryError, ShapeError
from ..geometry.coords import Dims
from ..model.denoiser import HPDMDenoiser
from .inference import TiledConfig, generate

logger = logging.getLogger(__name__)

AXIS_NAMES = "fhw"


def boundary_planes(size: int, patch: int) -> list[int]:
    """Indices ``i`` such that voxels ``i - 1`` and ``i`` sit in different non-overlapped tiles."""
    return list(range(patch, size, patch))


def seam_metric(canvas: torch.Tensor, patch: Dims, axes: str = "hw") -> float:
    """Mean |finite difference| across tile-boundary planes minus the interior mean.

    ``canvas`` is [C, F, H, W]. Boundaries are those of the non-overlapped
    tiling with ``patch`` so overlapped and plain generations are scored on
    the same planes. Axes without an interior boundary are skipped; the
    result averages the per-axis gaps.
    """
    if canvas.dim() != 4:
        raise ShapeError("seam_metric", canvas.shape, detail="expected [C, F, H, W]")
    gaps = []
    for name in axes:
        axis = AXIS_NAMES.index(name)
        size = canvas.shape[axis + 1]
        planes = boundary_planes(size, patch[axis])
        if not planes:
            continue
        diffs = torch.diff(canvas.to(torch.float64), dim=axis + 1).abs()
        # diffs[..., i - 1, ...] is the step between voxels i - 1 and i
        per_plane = diffs.movedim(axis + 1, 0).flatten(1).mean(dim=1)
        seam = torch.zeros(per_plane.shape[0], dtype=torch.bool)
        seam[[p - 1 for p in planes]] = True
        if bool(seam.all()):
            continue
        gaps.append(float(per_plane[seam].mean() - per_plane[~seam].mean()))
    if not gaps:
        return 0.0
    return sum(gaps) / len(gaps)


@dataclass
class SeamComparison:
    seed: int
    plain: float
    overlapped: float

    @property
    def improved(self) -> bool:
        return self.overlapped < self.plain


def overlap_ablation(
    model: HPDMDenoiser,
    schedule: NoiseSchedule,
    sampler: SamplerConfig,
    label: int,
    seeds: Sequence[int],
    overlap: str = "hw",
    tiled: Optional[TiledConfig] = None,
) -> list[SeamComparison]:
    """Seam metric of the native canvas with and without ``overlap``, per seed.

    The metric is taken along the overlapped axes, on the boundary planes
    of the plain tiling, so both generations are scored at the same places.
    """
    if overlap == "none":
        raise GeometryError("overlap ablation needs an overlapped axis")
    base = tiled or TiledConfig()
    patch = model.spec.patch
    out = []
    for seed in seeds:
        metrics = []
        for choice in ("none", overlap):
            video, _ = generate(
                model, schedule, sampler, label, seed, replace(base, overlap=choice)
            )
            metrics.append(seam_metric(video, patch, axes=overlap))
        out.append(SeamComparison(seed, metrics[0], metrics[1]))
        logger.info("seed %d: seam %.5f plain, %.5f with %s overlap", seed, *metrics, overlap)
    return out
