"""HPDMVID0 video files.

magic ``HPDMVID0`` | u32 class id | u32 C, F, H, W | f32 payload | u32 CRC32,
all little-endian.
"""

import logging
import math
from pathlib import Path

import torch

from ..errors import ShapeError
from ..numerics.records import open_sealed, pack_f32, pack_u32, seal, verify, write_atomic
from .synthetic import VideoRecord

logger = logging.getLogger(__name__)

MAGIC = b"HPDMVID0"


def encode_video(record: VideoRecord) -> bytes:
    video = record.video
    if video.dim() != 4:
        raise ShapeError("write_video", video.shape, detail="expected [C, F, H, W]")
    head = MAGIC + pack_u32(record.label) + b"".join(pack_u32(n) for n in video.shape)
    return seal(head + pack_f32(video))


def decode_video(data: bytes, what: str = "video") -> VideoRecord:
    reader = open_sealed(data, MAGIC, what)
    label = reader.u32()
    dims = [reader.u32() for _ in range(4)]
    values = reader.f32(math.prod(dims))
    verify(reader)
    return VideoRecord(torch.from_numpy(values.copy()).reshape(dims), label)


def write_video(path: Path, record: VideoRecord) -> None:
    write_atomic(Path(path), encode_video(record))
    logger.debug("wrote %s (class %d, %s)", path, record.label, tuple(record.video.shape))


def read_video(path: Path) -> VideoRecord:
    path = Path(path)
    return decode_video(path.read_bytes(), what=str(path))
