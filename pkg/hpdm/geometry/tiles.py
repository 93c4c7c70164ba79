"""Tile enumeration for overlapped inference over a level canvas."""

import math
from dataclasses import dataclass, field

import torch

from ..errors import GeometryError
from .coords import Dims, PatchCoords

OVERLAP_CHOICES = ("none", "f", "h", "w", "hw", "fh", "fw", "fhw")


def parse_overlap(value: str) -> tuple[bool, bool, bool]:
    """Map an overlap flag such as ``"hw"`` to per-axis half-overlap switches."""
    value = value.strip().lower()
    if value not in OVERLAP_CHOICES:
        raise GeometryError(
            f"unknown overlap {value!r}; choose one of {', '.join(OVERLAP_CHOICES)}"
        )
    if value == "none":
        return (False, False, False)
    return tuple(axis in value for axis in "fhw")  # type: ignore[return-value]


def format_overlap(overlap: tuple[bool, bool, bool]) -> str:
    label = "".join(axis for axis, on in zip("fhw", overlap) if on)
    return label or "none"


@dataclass
class TilePlan:
    """Tiles covering one level canvas, with per-voxel coverage counts."""

    level: int
    canvas: Dims
    patch: Dims
    overlap: tuple[bool, bool, bool]
    origins: list[Dims] = field(default_factory=list)
    coverage: torch.Tensor = field(default_factory=lambda: torch.zeros(0))

    @property
    def count(self) -> int:
        return len(self.origins)

    @property
    def per_axis(self) -> Dims:
        return tuple(  # type: ignore[return-value]
            len({o[axis] for o in self.origins}) for axis in range(3)
        )

    @property
    def strides(self) -> Dims:
        return tuple(  # type: ignore[return-value]
            r // 2 if on else r for r, on in zip(self.patch, self.overlap)
        )

    def coords(self) -> list[PatchCoords]:
        """Tile regions in the normalized frame of the whole canvas."""
        ratios = {r / n for r, n in zip(self.patch, self.canvas)}
        if len(ratios) != 1:
            raise GeometryError(
                f"tiles of {self.patch} over canvas {self.canvas} are not isotropic"
            )
        scale = ratios.pop()
        return [
            PatchCoords(scale, tuple(o / n for o, n in zip(origin, self.canvas)))
            for origin in self.origins
        ]

    def slices(self, index: int) -> tuple[slice, slice, slice]:
        return tuple(  # type: ignore[return-value]
            slice(o, o + r) for o, r in zip(self.origins[index], self.patch)
        )


def plan_tiles(
    canvas: Dims,
    patch: Dims,
    overlap: tuple[bool, bool, bool] = (False, False, False),
    level: int = 0,
) -> TilePlan:
    """Enumerate tiles of ``patch`` over ``canvas`` with optional 1/2 overlap per axis."""
    axes = []
    for axis, (n, r, on) in enumerate(zip(canvas, patch, overlap)):
        name = "fhw"[axis]
        if n % r:
            raise GeometryError(f"canvas {n} is not divisible by patch {r} on axis {name}")
        if on and r % 2:
            raise GeometryError(f"half overlap needs an even patch size, got {r} on axis {name}")
        count = n // r
        if on:
            stride = r // 2
            axes.append([k * stride for k in range(2 * count - 1)])
        else:
            axes.append([k * r for k in range(count)])

    origins = [(f, h, w) for f in axes[0] for h in axes[1] for w in axes[2]]
    coverage = torch.zeros(canvas, dtype=torch.int32)
    for origin in origins:
        coverage[tuple(slice(o, o + r) for o, r in zip(origin, patch))] += 1
    return TilePlan(
        level=level,
        canvas=tuple(canvas),  # type: ignore[arg-type]
        patch=tuple(patch),  # type: ignore[arg-type]
        overlap=tuple(overlap),  # type: ignore[arg-type]
        origins=origins,
        coverage=coverage,
    )


def tile_count(canvas: Dims, patch: Dims, overlap: tuple[bool, bool, bool]) -> int:
    """Number of tiles a plan would hold, without rasterizing coverage."""
    return math.prod(
        2 * (n // r) - 1 if on else n // r for n, r, on in zip(canvas, patch, overlap)
    )
