"""Synthetic videos, the HPDMVID0 file format and PPM frame export."""

from .frames import export_frames, read_frame, to_bytes
from .synthetic import (
    SyntheticSpec,
    VideoRecord,
    check_resolution,
    generate_dataset,
    load_tensors,
    make_record,
)
from .video_io import decode_video, encode_video, read_video, write_video

__all__ = [
    "SyntheticSpec",
    "VideoRecord",
    "check_resolution",
    "decode_video",
    "encode_video",
    "export_frames",
    "generate_dataset",
    "load_tensors",
    "make_record",
    "read_frame",
    "read_video",
    "to_bytes",
    "write_video",
]
