"""Patch coordinates, pyramid specs and coordinate re-projection.

A patch is described in the normalized frame of the full video: a single
scale ``s`` shared by all three axes and per-axis offsets ``(f, h, w)``.
Level ``l`` of an ``L+1``-level pyramid has scale ``2**-l``; level 0 covers
the whole video and level ``L`` is at native resolution.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import GeometryError

Dims = tuple[int, int, int]

TOLERANCE = 1e-9


def format_dims(dims: Dims) -> str:
    return "x".join(str(int(n)) for n in dims)


def parse_dims(text: str) -> Dims:
    """``"4x8x8"`` -> (4, 8, 8)."""
    parts = text.strip().lower().split("x")
    if len(parts) != 3:
        raise GeometryError(f"expected dims like 4x8x8, got {text!r}")
    try:
        return tuple(int(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise GeometryError(f"expected dims like 4x8x8, got {text!r}") from None


@dataclass(frozen=True)
class PatchCoords:
    """Normalized patch region ``[offset, offset + scale]`` per axis."""

    scale: float = 1.0
    offsets: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not 0.0 < self.scale <= 1.0 + TOLERANCE:
            raise GeometryError(f"patch scale must lie in (0, 1], got {self.scale}")
        for axis, d in zip("fhw", self.offsets):
            if d < -TOLERANCE or d + self.scale > 1.0 + TOLERANCE:
                raise GeometryError(
                    f"offset {axis}={d} with scale {self.scale} leaves the unit interval"
                )

    @property
    def ends(self) -> tuple[float, float, float]:
        return tuple(d + self.scale for d in self.offsets)  # type: ignore[return-value]

    def contains(self, other: "PatchCoords") -> bool:
        return all(
            o >= d - TOLERANCE and o + other.scale <= d + self.scale + TOLERANCE
            for d, o in zip(self.offsets, other.offsets)
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.scale, *self.offsets)


FULL = PatchCoords()


@dataclass(frozen=True)
class PyramidSpec:
    """Nested patch pyramid: ``levels`` = L+1, patch dims ``r``, full dims ``R``."""

    levels: int = 3
    patch: Dims = (4, 8, 8)
    full: Dims = (16, 32, 32)

    @property
    def depth(self) -> int:
        """L, the index of the native-resolution level."""
        return self.levels - 1

    def validate(self) -> list[str]:
        errors = []
        if self.levels < 1:
            errors.append("pyramid.levels: must be at least 1")
            return errors
        if any(r < 1 for r in self.patch):
            errors.append(f"pyramid.patch: dims must be positive, got {self.patch}")
        factor = 2 ** self.depth
        expected = tuple(r * factor for r in self.patch)
        if tuple(self.full) != expected:
            errors.append(
                f"pyramid.full: must equal 2^L * patch = {format_dims(expected)}, "
                f"got {format_dims(self.full)}"
            )
        return errors

    def scale(self, level: int) -> float:
        return 2.0 ** -level

    def canvas(self, level: int) -> Dims:
        """Voxel dims of level ``level`` when it is generated over the whole video."""
        factor = 2 ** level
        return tuple(r * factor for r in self.patch)  # type: ignore[return-value]

    def downsample(self, level: int) -> int:
        """Average-pooling factor from full resolution to level ``level``."""
        return 2 ** (self.depth - level)


def pixel_budget(spec: PyramidSpec) -> float:
    """Fraction of full-video voxels a training sample touches: (L+1) prod(r) / prod(R)."""
    return spec.levels * math.prod(spec.patch) / math.prod(spec.full)


def sample_pyramid_coords(
    spec: PyramidSpec,
    rng: np.random.Generator,
    snap_offsets: bool = True,
) -> list[PatchCoords]:
    """Draw one nested pyramid of coordinates.

    With ``snap_offsets`` every crop boundary lands on a full-resolution
    voxel boundary. Otherwise offsets are continuous except at level L,
    which is always snapped to an integer voxel position.
    """
    coords = [FULL]
    for level in range(1, spec.levels):
        parent = coords[-1]
        s = spec.scale(level)
        offsets = []
        for axis, R in enumerate(spec.full):
            lo = parent.offsets[axis]
            slack = parent.scale - s
            if snap_offsets or level == spec.depth:
                first = math.ceil(lo * R - 1e-6)
                last = math.floor((lo + slack) * R + 1e-6)
                k = int(rng.integers(first, last + 1))
                offsets.append(k / R)
            else:
                offsets.append(lo + float(rng.random()) * slack)
        coords.append(PatchCoords(s, tuple(offsets)))  # type: ignore[arg-type]
    return coords


def recompute_coords(child: PatchCoords, parent: PatchCoords) -> PatchCoords:
    """Express ``child`` in the normalized frame of ``parent``."""
    if not parent.contains(child):
        raise GeometryError(
            f"child region {child.as_tuple()} is not contained in parent {parent.as_tuple()}"
        )
    scale = min(1.0, child.scale / parent.scale)
    offsets = tuple(
        min(max((c - p) / parent.scale, 0.0), 1.0 - scale)
        for c, p in zip(child.offsets, parent.offsets)
    )
    return PatchCoords(scale, offsets)  # type: ignore[arg-type]


def cell_centers(coords: PatchCoords, dims: Dims) -> list[torch.Tensor]:
    """Per-axis normalized centers of a ``dims`` lattice laid over ``coords``."""
    return [
        coords.offsets[axis]
        + coords.scale * (torch.arange(n, dtype=torch.float64) + 0.5) / n
        for axis, n in enumerate(dims)
    ]


def coord_channels(
    coords: PatchCoords, r: Dims, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """[3, r_f, r_h, r_w] global center positions along f, h and w."""
    cf, ch, cw = cell_centers(coords, r)
    grid = torch.stack(torch.meshgrid(cf, ch, cw, indexing="ij"))
    return grid.to(dtype)


def frame_queries(
    coords: PatchCoords,
    out_dims: Dims,
    frame_dims: Dims,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Grid-sample queries for an ``out_dims`` lattice over ``coords``.

    ``coords`` are relative to a volume holding ``frame_dims`` voxels that
    spans the unit cube. Returns [prod(out_dims), 3] in the voxel-center
    convention of grid_sample_3d. Points within half a voxel of the frame's
    border are clamped onto the outermost voxel centers.
    """
    axes = []
    for centers, g in zip(cell_centers(coords, out_dims), frame_dims):
        if g == 1:
            axes.append(torch.zeros_like(centers))
        else:
            axes.append(((centers * g - 0.5) / (g - 1)).clamp(0.0, 1.0))
    grid = torch.stack(torch.meshgrid(*axes, indexing="ij"), dim=-1)
    return grid.reshape(-1, 3).to(dtype)

