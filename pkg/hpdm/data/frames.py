"""Binary PPM frame export for eyeballing samples."""

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..errors import DataError, ShapeError

FRAME_NAME = "frame_{:04d}.ppm"


def to_bytes(values: torch.Tensor) -> np.ndarray:
    """Map [-1, 1] to 0..255 with round-half-up: floor((v + 1) / 2 * 255 + 0.5)."""
    scaled = (values.detach().to(torch.float64).clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0
    return np.floor(scaled.cpu().numpy() + 0.5).astype(np.uint8)


def export_frames(video: torch.Tensor, directory: Path) -> list[Path]:
    """Write one P6 PPM per frame of a [3, F, H, W] video."""
    if video.dim() != 4 or video.shape[0] != 3:
        raise ShapeError("export_frames", video.shape, detail="expected [3, F, H, W]")
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create frame directory {directory}: {e}") from e

    pixels = to_bytes(video).transpose(1, 2, 3, 0)  # F, H, W, C
    paths = []
    for index, frame in enumerate(pixels):
        path = directory / FRAME_NAME.format(index)
        try:
            Image.fromarray(np.ascontiguousarray(frame)).save(path, format="PPM")
        except OSError as e:
            raise DataError(f"cannot write frame {path}: {e}") from e
        paths.append(path)
    return paths


def read_frame(path: Path) -> torch.Tensor:
    """Parse a PPM back into [3, H, W] values in [-1, 1]."""
    with Image.open(path) as image:
        pixels = np.asarray(image.convert("RGB"), dtype=np.float32)
    return torch.from_numpy(pixels / 255.0 * 2.0 - 1.0).permute(2, 0, 1).contiguous()
