"""Patch coordinate algebra: pyramids, extraction, re-projection and tiling."""

from .coords import (
    FULL,
    PatchCoords,
    PyramidSpec,
    coord_channels,
    format_dims,
    frame_queries,
    parse_dims,
    pixel_budget,
    recompute_coords,
    sample_pyramid_coords,
)
from .extract import extract_continuous, extract_patch, extract_pyramid
from .tiles import OVERLAP_CHOICES, TilePlan, format_overlap, parse_overlap, plan_tiles, tile_count

__all__ = [
    "FULL",
    "OVERLAP_CHOICES",
    "PatchCoords",
    "PyramidSpec",
    "TilePlan",
    "coord_channels",
    "extract_continuous",
    "extract_patch",
    "extract_pyramid",
    "format_dims",
    "format_overlap",
    "frame_queries",
    "parse_dims",
    "parse_overlap",
    "pixel_budget",
    "plan_tiles",
    "recompute_coords",
    "sample_pyramid_coords",
    "tile_count",
]
