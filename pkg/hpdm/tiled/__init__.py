"""Hierarchical tiled inference with a parent-activation cache."""

from .cache import ActivationCache, decode_spill, encode_spill, read_spill, write_spill
from .inference import (
    LevelCanvas,
    TiledConfig,
    TiledSampler,
    fuse_tile_predictions,
    generate,
    token_plan,
)
from .manifest import (
    LevelRecord,
    Manifest,
    decode_manifest,
    encode_manifest,
    read_manifest,
    write_manifest,
)
from .seams import SeamComparison, overlap_ablation, seam_metric

__all__ = [
    "ActivationCache",
    "LevelCanvas",
    "LevelRecord",
    "Manifest",
    "SeamComparison",
    "TiledConfig",
    "TiledSampler",
    "decode_manifest",
    "decode_spill",
    "encode_manifest",
    "encode_spill",
    "fuse_tile_predictions",
    "generate",
    "overlap_ablation",
    "read_manifest",
    "read_spill",
    "seam_metric",
    "token_plan",
    "write_manifest",
    "write_spill",
]
