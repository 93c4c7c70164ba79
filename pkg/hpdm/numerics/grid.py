"""Trilinear grid sampling over [C, F, H, W] feature volumes."""

import torch
import torch.nn.functional as F

from ..errors import GridRangeError, ShapeError
from .kernels import check_finite, register

RANGE_TOLERANCE = 1e-6


def _sample_inputs(gen: torch.Generator, dtype: torch.dtype) -> list:
    features = torch.randn(2, 3, 4, 4, generator=gen, dtype=dtype)
    queries = torch.rand(7, 3, generator=gen, dtype=dtype)
    return [features, queries]


def check_queries(queries: torch.Tensor) -> None:
    """Raise GridRangeError for the first query outside [0, 1]^3."""
    flat = queries.detach().reshape(-1, 3)
    outside = (flat < -RANGE_TOLERANCE) | (flat > 1.0 + RANGE_TOLERANCE)
    bad = outside.any(dim=1).nonzero()
    if bad.numel():
        idx = int(bad[0, 0])
        raise GridRangeError(idx, flat[idx].tolist())


@register(
    "grid_sample_3d",
    _sample_inputs,
    grad_args=(0,),
    description="trilinear interpolation, align-corners convention",
)
def grid_sample_3d(features: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
    """Trilinearly interpolate ``features`` at normalized ``queries``.

    features: [C, F, H, W] or batched [B, C, F, H, W]
    queries:  [Q, 3] or batched [B, Q, 3], ordered (f, h, w), each in [0, 1]

    Coordinate 0 is the center of the first voxel and 1 the center of the
    last one; an axis of size 1 always returns its single voxel. Returns
    [Q, C] (or [B, Q, C]).
    """
    batched = features.dim() == 5
    if not batched:
        if features.dim() != 4 or queries.dim() != 2:
            raise ShapeError("grid_sample_3d", features.shape, queries.shape)
        features = features.unsqueeze(0)
        queries = queries.unsqueeze(0)
    if queries.dim() != 3 or queries.shape[-1] != 3 or queries.shape[0] != features.shape[0]:
        raise ShapeError("grid_sample_3d", features.shape, queries.shape)

    check_queries(queries)
    q = queries.clamp(0.0, 1.0).to(features.dtype)
    # torch orders grid coordinates (x, y, z) = (w, h, f) and spans [-1, 1]
    grid = (q.flip(-1) * 2.0 - 1.0)[:, :, None, None, :]
    out = F.grid_sample(features, grid, mode="bilinear", padding_mode="border", align_corners=True)
    out = out[:, :, :, 0, 0].transpose(1, 2)
    if not batched:
        out = out[0]
    return check_finite("grid_sample_3d", out)
