"""Deterministic class-conditional toy videos: shapes sliding with toroidal wrap-around."""

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
import torch

from ..errors import DataError
from ..geometry.coords import Dims, PyramidSpec, format_dims, parse_dims
from ..numerics.rng import stream

logger = logging.getLogger(__name__)

SHAPES = ("square", "disc", "cross", "ring")

# RGB in [-1, 1]; the palette of class c is PALETTES[c % len(PALETTES)]
PALETTES = (
    ((1.0, -0.6, -0.6), (1.0, 0.6, -0.2)),
    ((-0.6, 1.0, -0.4), (0.2, 1.0, 0.8)),
    ((-0.5, -0.3, 1.0), (0.7, -0.2, 1.0)),
    ((1.0, 1.0, -0.7), (1.0, 1.0, 1.0)),
    ((0.0, 1.0, 1.0), (1.0, 0.0, 1.0)),
    ((1.0, 0.3, 0.0), (0.4, 0.4, 1.0)),
)

BACKGROUND = -0.8


@dataclass
class SyntheticSpec:
    resolution: Dims = (16, 32, 32)
    channels: int = 3
    num_classes: int = 4
    shapes_per_video: int = 2
    max_velocity: int = 2
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        spec = cls()
        for key, value in data.items():
            if key == "resolution":
                spec.resolution = parse_dims(value) if isinstance(value, str) else tuple(value)
            elif hasattr(spec, key):
                setattr(spec, key, int(value))
            else:
                raise KeyError(key)
        return spec

    def to_dict(self) -> dict:
        return {
            "resolution": format_dims(self.resolution),
            "channels": self.channels,
            "num_classes": self.num_classes,
            "shapes_per_video": self.shapes_per_video,
            "max_velocity": self.max_velocity,
            "seed": self.seed,
        }

    def validate(self) -> list[str]:
        errors = []
        if any(n < 1 for n in self.resolution):
            errors.append("data.resolution: dims must be positive")
        if self.channels != 3:
            errors.append("data.channels: synthetic videos are RGB (3 channels)")
        if self.num_classes < 1:
            errors.append("data.num_classes: must be at least 1")
        if self.shapes_per_video < 1:
            errors.append("data.shapes_per_video: must be at least 1")
        if self.max_velocity < 0:
            errors.append("data.max_velocity: must be non-negative")
        return errors


@dataclass
class VideoRecord:
    """One video [C, F, H, W] in [-1, 1] with its class id."""

    video: torch.Tensor
    label: int
    seed: Optional[int] = None
    velocities: list[tuple[int, int]] = field(default_factory=list)


def shape_mask(kind: str, size: int, height: int, width: int) -> np.ndarray:
    """Boolean [H, W] mask of a shape of extent ``size`` anchored at the origin."""
    yy, xx = np.mgrid[0:height, 0:width]
    centre = (size - 1) / 2.0
    dy, dx = yy - centre, xx - centre
    inside = (yy < size) & (xx < size)
    radius = size / 2.0
    if kind == "square":
        return inside
    if kind == "disc":
        return inside & (dy**2 + dx**2 <= radius**2)
    if kind == "cross":
        arm = max(size // 6, 1)
        return inside & ((np.abs(dy) <= arm) | (np.abs(dx) <= arm))
    if kind == "ring":
        dist = dy**2 + dx**2
        return inside & (dist <= radius**2) & (dist >= (0.55 * radius) ** 2)
    raise DataError(f"unknown shape {kind!r}")


def render_video(
    spec: SyntheticSpec, label: int, rng: np.random.Generator
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Render [C, F, H, W] for class ``label``: every shape moves by an integer velocity."""
    frames, height, width = spec.resolution
    kind = SHAPES[label % len(SHAPES)]
    palette = PALETTES[label % len(PALETTES)]
    video = np.full((spec.channels, frames, height, width), BACKGROUND, dtype=np.float32)
    velocities = []
    lo, hi = max(min(height, width) // 4, 2), max(min(height, width) // 2, 3)
    for index in range(spec.shapes_per_video):
        size = int(rng.integers(lo, hi))
        start = (int(rng.integers(0, height)), int(rng.integers(0, width)))
        velocity = tuple(
            int(v) for v in rng.integers(-spec.max_velocity, spec.max_velocity + 1, size=2)
        )
        velocities.append(velocity)
        mask = np.roll(shape_mask(kind, size, height, width), start, axis=(0, 1))
        colour = np.asarray(palette[index % len(palette)], dtype=np.float32)
        for t in range(frames):
            moved = np.roll(mask, (t * velocity[0], t * velocity[1]), axis=(0, 1))
            video[:, t][:, moved] = colour[:, None]
    return video, velocities  # type: ignore[return-value]


def make_record(spec: SyntheticSpec, index: int) -> VideoRecord:
    rng = stream(spec.seed, "video", index)
    label = int(rng.integers(0, spec.num_classes))
    video, velocities = render_video(spec, label, rng)
    return VideoRecord(torch.from_numpy(video), label, seed=spec.seed, velocities=velocities)


def generate_dataset(spec: SyntheticSpec, count: int, start: int = 0) -> Iterator[VideoRecord]:
    """Records ``start .. start + count - 1``; each depends only on (seed, index)."""
    if count < 1:
        raise DataError(f"dataset size must be at least 1, got {count}")
    for index in range(start, start + count):
        yield make_record(spec, index)


def check_resolution(spec: SyntheticSpec, pyramid: PyramidSpec) -> None:
    if tuple(spec.resolution) != tuple(pyramid.full):
        raise DataError(
            f"dataset resolution {format_dims(spec.resolution)} does not match "
            f"pyramid full resolution {format_dims(pyramid.full)}"
        )


def load_tensors(
    spec: SyntheticSpec, count: int, pyramid: Optional[PyramidSpec] = None
) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack ``count`` records into videos [N, C, F, H, W] and labels [N]."""
    if pyramid is not None:
        check_resolution(spec, pyramid)
    records = list(generate_dataset(spec, count))
    videos = torch.stack([r.video for r in records])
    labels = torch.tensor([r.label for r in records], dtype=torch.long)
    logger.info("generated %d synthetic videos at %s", count, format_dims(spec.resolution))
    return videos, labels
