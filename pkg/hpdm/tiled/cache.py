"""Stitched parent activations, queried by grid sampling while the next level samples.

Entries are token-grid canvases ``[d, G_f, G_h, G_w]`` keyed by
``(level, block)``. When a memory budget is set, least-recently-used
canvases are spilled to HPDMCACH files and reloaded on demand.
"""

import logging
import tempfile
from collections import OrderedDict
from pathlib import Path
from typing import Optional

import torch

from ..errors import CacheError, ShapeError
from ..numerics.grid import grid_sample_3d
from ..numerics.records import open_sealed, pack_tensor, pack_u32, seal, verify, write_atomic

logger = logging.getLogger(__name__)

MAGIC = b"HPDMCACH"

Key = tuple[int, int]


def encode_spill(level: int, block: int, canvas: torch.Tensor) -> bytes:
    return seal(MAGIC + pack_u32(level) + pack_u32(block) + pack_tensor(canvas))


def decode_spill(data: bytes, what: str = "cache spill") -> tuple[int, int, torch.Tensor]:
    reader = open_sealed(data, MAGIC, what)
    level = reader.u32()
    block = reader.u32()
    canvas = reader.tensor()
    verify(reader)
    return level, block, canvas


def write_spill(path: Path, level: int, block: int, canvas: torch.Tensor) -> None:
    write_atomic(path, encode_spill(level, block, canvas))


def read_spill(path: Path) -> tuple[int, int, torch.Tensor]:
    path = Path(path)
    return decode_spill(path.read_bytes(), what=str(path))


class ActivationCache:
    """In-memory canvases with LRU spill beyond ``budget_bytes`` (0 = unlimited)."""

    def __init__(self, budget_bytes: int = 0, spill_dir: Optional[Path] = None):
        self.budget_bytes = budget_bytes
        self._spill_dir = Path(spill_dir) if spill_dir is not None else None
        self._tmp: Optional[tempfile.TemporaryDirectory] = None
        self._memory: "OrderedDict[Key, torch.Tensor]" = OrderedDict()
        self._spilled: dict[Key, Path] = {}
        self.high_water = 0
        self.spills = 0
        self.reloads = 0

    # -- bookkeeping ---------------------------------------------------------

    @property
    def memory_bytes(self) -> int:
        return sum(t.numel() * t.element_size() for t in self._memory.values())

    def keys(self) -> list[Key]:
        return sorted(set(self._memory) | set(self._spilled))

    def levels(self) -> list[int]:
        return sorted({level for level, _ in self.keys()})

    def blocks(self, level: int) -> list[int]:
        return [b for lvl, b in self.keys() if lvl == level]

    def has(self, level: int, block: int) -> bool:
        key = (level, block)
        return key in self._memory or key in self._spilled

    def spill_path(self, key: Key) -> Path:
        if self._spill_dir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="hpdm-cache-")
            self._spill_dir = Path(self._tmp.name)
        return self._spill_dir / f"level{key[0]}_block{key[1]}.hpdmcache"

    def _admit(self, key: Key, canvas: torch.Tensor) -> None:
        self._memory[key] = canvas
        self._memory.move_to_end(key)
        self.high_water = max(self.high_water, self.memory_bytes)
        self._enforce_budget()

    def _enforce_budget(self) -> None:
        if self.budget_bytes <= 0:
            return
        while self._memory and self.memory_bytes > self.budget_bytes:
            key, canvas = self._memory.popitem(last=False)
            path = self.spill_path(key)
            write_spill(path, key[0], key[1], canvas)
            self._spilled[key] = path
            self.spills += 1
            logger.debug("spilled cache entry level=%d block=%d to %s", key[0], key[1], path)

    # -- public API ----------------------------------------------------------

    def store(self, level: int, block: int, canvas: torch.Tensor) -> None:
        """Register a stitched canvas [d, G_f, G_h, G_w]."""
        if canvas.dim() != 4:
            raise ShapeError("cache_store", canvas.shape, detail="expected [d, F, H, W]")
        key = (level, block)
        self._spilled.pop(key, None)
        self._admit(key, canvas.detach().to(torch.float32).contiguous())

    def get(self, level: int, block: int) -> torch.Tensor:
        key = (level, block)
        if key in self._memory:
            self._memory.move_to_end(key)
            return self._memory[key]
        if key not in self._spilled:
            raise CacheError(f"no cached activations for level {level}, block {block}")
        path = self._spilled.pop(key)
        stored_level, stored_block, canvas = read_spill(path)
        if (stored_level, stored_block) != key:
            raise CacheError(
                f"{path}: holds level {stored_level} block {stored_block}, expected {key}"
            )
        self.reloads += 1
        self._admit(key, canvas)
        if key not in self._memory:
            # budget smaller than a single canvas: serve the reloaded copy directly
            return canvas
        return self._memory[key]

    def query(self, level: int, block: int, queries: torch.Tensor) -> torch.Tensor:
        """Trilinear samples of a cached canvas.

        queries: [Q, 3] -> [Q, d], or [B, Q, 3] -> [B, Q, d].
        """
        canvas = self.get(level, block)
        if queries.dim() == 3:
            batch = canvas.unsqueeze(0).expand(queries.shape[0], *canvas.shape)
            return grid_sample_3d(batch, queries.to(canvas.dtype))
        return grid_sample_3d(canvas, queries.to(canvas.dtype))

    def close(self) -> None:
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None
