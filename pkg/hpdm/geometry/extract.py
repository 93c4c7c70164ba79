"""Patch extraction: voxel-aligned crop followed by integer average pooling."""

from typing import Optional

import torch
import torch.nn.functional as F

from ..errors import GeometryError, ShapeError
from ..numerics.grid import grid_sample_3d
from .coords import Dims, PatchCoords, PyramidSpec, frame_queries

ALIGN_TOLERANCE = 1e-6


def voxel_window(coords: PatchCoords, dims: Dims) -> tuple[Dims, Dims]:
    """Integer (start, size) of ``coords`` inside a volume of ``dims`` voxels."""
    starts, sizes = [], []
    for axis, n in enumerate(dims):
        start = coords.offsets[axis] * n
        size = coords.scale * n
        for what, value in (("offset", start), ("extent", size)):
            if abs(value - round(value)) > ALIGN_TOLERANCE:
                raise GeometryError(
                    f"crop {what} {value:.6f} on axis {'fhw'[axis]} is not on a voxel boundary"
                )
        starts.append(int(round(start)))
        sizes.append(int(round(size)))
    return tuple(starts), tuple(sizes)  # type: ignore[return-value]


def extract_patch(
    video: torch.Tensor, coords: PatchCoords, r: Optional[Dims] = None
) -> torch.Tensor:
    """Crop ``coords`` out of ``video`` [C, F, H, W] and pool it down to ``r``.

    ``r=None`` returns the crop at the video's own resolution.
    """
    if video.dim() != 4:
        raise ShapeError("extract_patch", video.shape, detail="expected [C, F, H, W]")
    (f0, h0, w0), (sf, sh, sw) = voxel_window(coords, tuple(video.shape[1:]))
    crop = video[:, f0:f0 + sf, h0:h0 + sh, w0:w0 + sw]
    if r is None:
        return crop.contiguous()
    factors = []
    for axis, (size, target) in enumerate(zip((sf, sh, sw), r)):
        if size % target:
            raise GeometryError(
                f"downsample factor {size}/{target} on axis {'fhw'[axis]} is not an integer"
            )
        factors.append(size // target)
    if all(k == 1 for k in factors):
        return crop.contiguous()
    return F.avg_pool3d(crop.unsqueeze(0), kernel_size=factors, stride=factors)[0]


def extract_continuous(video: torch.Tensor, coords: PatchCoords, r: Dims) -> torch.Tensor:
    """Trilinear point resampling of ``coords`` onto an ``r`` lattice."""
    queries = frame_queries(coords, r, tuple(video.shape[1:]), dtype=video.dtype)
    values = grid_sample_3d(video, queries)
    return values.t().reshape(video.shape[0], *r)


def extract_pyramid(
    video: torch.Tensor,
    coords: list[PatchCoords],
    spec: PyramidSpec,
    snap_offsets: bool = True,
) -> list[torch.Tensor]:
    """Clean patches for every level of a sampled pyramid."""
    patches = []
    for level, c in enumerate(coords):
        if snap_offsets or level == spec.depth:
            patches.append(extract_patch(video, c, spec.patch))
        else:
            patches.append(extract_continuous(video, c, spec.patch))
    return patches
