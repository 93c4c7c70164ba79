"""HPDMCKPT checkpoint files.

Layout (all integers u32 little-endian unless noted, payloads ``<f4``)::

    "HPDMCKPT" | version | count
    count x parameter record   name_len, name, rank, dims..., payload
    count x EMA record         same layout, same order
    optimizer                  global_step (u64), then per parameter:
                               step, and when step > 0 two tensor records
                               (rank, dims..., payload) for exp_avg, exp_avg_sq
    metadata                   16-byte config hash, text_len, config text
    crc32 of every preceding byte
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import torch
from torch import nn

from ..errors import DataError, ShapeError
from .optim import OptimizerState
from .records import (
    open_sealed,
    pack_name,
    pack_tensor,
    pack_u32,
    pack_u64,
    seal,
    verify,
    write_atomic,
)

logger = logging.getLogger(__name__)

MAGIC = b"HPDMCKPT"
VERSION = 1
HASH_BYTES = 16

Moment = tuple[int, Optional[torch.Tensor], Optional[torch.Tensor]]


@dataclass
class Checkpoint:
    """Decoded checkpoint contents."""

    params: dict[str, torch.Tensor]
    ema: dict[str, torch.Tensor]
    global_step: int = 0
    moments: list[Moment] = field(default_factory=list)
    config_hash: str = "0" * HASH_BYTES
    config_text: str = ""
    version: int = VERSION

    @property
    def parameter_count(self) -> int:
        return sum(t.numel() for t in self.params.values())


def encode_checkpoint(
    model: nn.Module,
    optimizer: Optional[OptimizerState],
    config_hash: str,
    config_text: str,
) -> bytes:
    named = [(name, p) for name, p in model.named_parameters() if p.requires_grad]
    if optimizer is not None:
        ema = optimizer.ema
        moments = optimizer.moments()
        global_step = optimizer.global_step
    else:
        ema = {name: p for name, p in named}
        moments = [(0, None, None)] * len(named)
        global_step = 0

    hash_raw = config_hash.encode("ascii")
    if len(hash_raw) != HASH_BYTES:
        raise ValueError(f"config hash must be {HASH_BYTES} characters, got {config_hash!r}")

    parts = [MAGIC, pack_u32(VERSION), pack_u32(len(named))]
    for name, p in named:
        parts += [pack_name(name), pack_tensor(p)]
    for name, _ in named:
        parts += [pack_name(name), pack_tensor(ema[name])]
    parts.append(pack_u64(global_step))
    for step, m, v in moments:
        parts.append(pack_u32(step))
        if step > 0:
            parts += [pack_tensor(m), pack_tensor(v)]
    text = config_text.encode("utf-8")
    parts += [hash_raw, pack_u32(len(text)), text]
    return seal(b"".join(parts))


def save_checkpoint(
    path: Path,
    model: nn.Module,
    optimizer: Optional[OptimizerState] = None,
    config_hash: str = "0" * HASH_BYTES,
    config_text: str = "",
) -> None:
    data = encode_checkpoint(model, optimizer, config_hash, config_text)
    write_atomic(Path(path), data)
    logger.info("wrote checkpoint %s (%d bytes)", path, len(data))


def decode_checkpoint(data: bytes, what: str = "checkpoint") -> Checkpoint:
    reader = open_sealed(data, MAGIC, what)
    version = reader.u32()
    if version != VERSION:
        raise DataError(f"{what}: unsupported version {version}")
    count = reader.u32()

    params: dict[str, torch.Tensor] = {}
    for _ in range(count):
        name = reader.name()
        params[name] = reader.tensor()
    ema: dict[str, torch.Tensor] = {}
    for _ in range(count):
        name = reader.name()
        ema[name] = reader.tensor()

    global_step = reader.u64()
    moments: list[Moment] = []
    for _ in range(count):
        step = reader.u32()
        if step > 0:
            moments.append((step, reader.tensor(), reader.tensor()))
        else:
            moments.append((0, None, None))

    config_hash = reader.take(HASH_BYTES).decode("ascii", errors="replace")
    text = reader.take(reader.u32()).decode("utf-8", errors="replace")
    verify(reader)
    return Checkpoint(
        params=params,
        ema=ema,
        global_step=global_step,
        moments=moments,
        config_hash=config_hash,
        config_text=text,
        version=version,
    )


def read_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), what=str(path))


def restore(
    checkpoint: Checkpoint,
    model: nn.Module,
    optimizer: Optional[OptimizerState] = None,
    use_ema: bool = False,
) -> None:
    """Load parameters (raw or EMA) into ``model`` and optionally the optimizer."""
    source = checkpoint.ema if use_ema else checkpoint.params
    named = dict(model.named_parameters())
    missing = [name for name in named if name not in source]
    if missing:
        raise DataError(f"checkpoint lacks parameters: {', '.join(missing[:5])}")
    with torch.no_grad():
        for name, p in named.items():
            value = source[name]
            if tuple(value.shape) != tuple(p.shape):
                raise ShapeError("restore", p.shape, value.shape, detail=name)
            p.copy_(value)
    if optimizer is not None:
        optimizer.load_moments(checkpoint.global_step, checkpoint.moments, checkpoint.ema)
