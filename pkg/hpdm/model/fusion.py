"""Deep context fusion: parent activations, coordinates and tokens into one projection."""

from typing import Optional, Sequence

import torch
from einops import rearrange
from torch import nn

from ..errors import ShapeError
from ..geometry.coords import Dims, PatchCoords, coord_channels, frame_queries, recompute_coords
from ..numerics import kernels
from ..numerics.grid import grid_sample_3d
from .config import DenoiserConfig
from .layers import Linear


def tokens_to_grid(tokens: torch.Tensor, grid: Dims) -> torch.Tensor:
    """[B, N, d] -> [B, d, g_f, g_h, g_w]."""
    gf, gh, gw = grid
    return rearrange(tokens, "b (f h w) d -> b d f h w", f=gf, h=gh, w=gw)


def sample_parent(
    parent_grid: torch.Tensor,
    child: Sequence[PatchCoords],
    parent: Sequence[PatchCoords],
    child_grid: Dims,
) -> torch.Tensor:
    """Grid-sample a parent token grid at a child's token centers.

    parent_grid: [B, d, g_f, g_h, g_w]; ``child`` and ``parent`` hold one
    coordinate tuple per batch element. Returns [B, N_child, d].
    """
    frame = tuple(parent_grid.shape[2:])
    queries = torch.stack([
        frame_queries(recompute_coords(c, p), child_grid, frame, dtype=parent_grid.dtype)
        for c, p in zip(child, parent)
    ])
    return grid_sample_3d(parent_grid, queries)


def coordinate_tokens(
    coords: Sequence[PatchCoords], grid: Dims, dtype: torch.dtype
) -> torch.Tensor:
    """[B, N, 3] global token-center coordinates."""
    return torch.stack([
        rearrange(coord_channels(c, grid, dtype=dtype), "c f h w -> (f h w) c")
        for c in coords
    ])


class ContextFusion(nn.Module):
    """Concatenate [tokens, context, coordinates] and project 2d+3 -> d.

    The projection is shared by every level and block; level 0 passes a
    zero context through the same weights.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        self.proj = Linear(config.fused_width, config.token_dim)

    def forward(
        self,
        tokens: torch.Tensor,
        context: Optional[torch.Tensor],
        coords: torch.Tensor,
    ) -> torch.Tensor:
        if context is None:
            context = torch.zeros_like(tokens)
        elif context.shape != tokens.shape:
            raise ShapeError("fuse_context", tokens.shape, context.shape)
        if not self.config.use_coords:
            coords = torch.zeros_like(coords)
        fused = kernels.concat([tokens, context, coords.to(tokens.dtype)], axis=-1)
        return self.proj(fused)
