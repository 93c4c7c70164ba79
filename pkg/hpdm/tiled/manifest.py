"""Line-oriented sampling manifests.

Layout::

    HPDM-MANIFEST 1
    config_hash <16 hex>
    seed <int>
    class <int>
    pyramid levels=<n> patch=<FxHxW> full=<FxHxW>
    overlap <none|f|h|w|hw|fh|fw|fhw>
    cache <on|off>
    level <l> canvas=<FxHxW> steps=<n> heun=<0|1> churn=<float>
    sigmas <float> ...
    tile <hex of 4 little-endian f32: scale, f, h, w>
    timing <ms per step> ...
    total_ms <float>
    crc32 <8 hex over every preceding byte>
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, ChecksumError, DataError, TruncatedError
from ..geometry.coords import Dims, PatchCoords, format_dims, parse_dims
from ..numerics.records import crc32, write_atomic

logger = logging.getLogger(__name__)

HEADER = "HPDM-MANIFEST 1"


@dataclass
class LevelRecord:
    """What one level of tiled generation did."""

    level: int
    canvas: Dims
    heun: bool
    churn: float
    sigmas: list[float] = field(default_factory=list)
    tiles: list[PatchCoords] = field(default_factory=list)
    step_ms: list[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.sigmas) - 1


@dataclass
class Manifest:
    config_hash: str
    seed: int
    label: int
    levels: int
    patch: Dims
    full: Dims
    overlap: str
    use_cache: bool
    records: list[LevelRecord] = field(default_factory=list)
    total_ms: float = 0.0

    @property
    def tile_counts(self) -> list[int]:
        return [len(r.tiles) for r in self.records]


def encode_coords(coords: PatchCoords) -> str:
    return np.asarray(coords.as_tuple(), dtype="<f4").tobytes().hex()


def decode_coords(text: str) -> PatchCoords:
    raw = bytes.fromhex(text)
    if len(raw) != 16:
        raise DataError(f"tile record must hold 16 bytes, got {len(raw)}")
    scale, f, h, w = (float(v) for v in np.frombuffer(raw, dtype="<f4"))
    return PatchCoords(scale, (f, h, w))


def encode_manifest(manifest: Manifest) -> str:
    lines = [
        HEADER,
        f"config_hash {manifest.config_hash}",
        f"seed {manifest.seed}",
        f"class {manifest.label}",
        f"pyramid levels={manifest.levels} patch={format_dims(manifest.patch)} "
        f"full={format_dims(manifest.full)}",
        f"overlap {manifest.overlap}",
        f"cache {'on' if manifest.use_cache else 'off'}",
    ]
    for record in manifest.records:
        lines.append(
            f"level {record.level} canvas={format_dims(record.canvas)} steps={record.steps} "
            f"heun={int(record.heun)} churn={record.churn!r}"
        )
        lines.append("sigmas " + " ".join(repr(float(s)) for s in record.sigmas))
        lines.extend(f"tile {encode_coords(c)}" for c in record.tiles)
        lines.append("timing " + " ".join(f"{ms:.3f}" for ms in record.step_ms))
    lines.append(f"total_ms {manifest.total_ms:.3f}")
    body = "\n".join(lines) + "\n"
    return body + f"crc32 {crc32(body.encode('utf-8')):08x}\n"


def _fields(text: str) -> dict[str, str]:
    out = {}
    for item in text.split():
        key, sep, value = item.partition("=")
        if not sep:
            raise DataError(f"expected key=value, got {item!r}")
        out[key] = value
    return out


def decode_manifest(text: str, what: str = "manifest") -> Manifest:
    if not text.startswith(HEADER + "\n"):
        raise BadMagicError(f"{what}: not a sampling manifest")
    marker = text.rfind("crc32 ")
    if marker < 0 or (marker > 0 and text[marker - 1] != "\n"):
        raise TruncatedError(f"{what}: missing crc32 trailer")
    body, trailer = text[:marker], text[marker:]
    try:
        stored = int(trailer.split()[1], 16)
    except (IndexError, ValueError):
        raise ChecksumError(f"{what}: unreadable crc32 trailer") from None
    if trailer != f"crc32 {stored:08x}\n" or stored != crc32(body.encode("utf-8")):
        raise ChecksumError(f"{what}: checksum mismatch")

    try:
        return _parse_body(body.splitlines()[1:])
    except (KeyError, ValueError, IndexError) as exc:
        raise DataError(f"{what}: malformed manifest ({exc})") from exc


def _parse_body(lines: list[str]) -> Manifest:
    header: dict[str, str] = {}
    records: list[LevelRecord] = []
    declared_steps: list[int] = []
    total_ms = 0.0
    for line in lines:
        key, _, rest = line.partition(" ")
        if key == "level":
            index, _, tail = rest.partition(" ")
            attrs = _fields(tail)
            records.append(
                LevelRecord(
                    level=int(index),
                    canvas=parse_dims(attrs["canvas"]),
                    heun=attrs["heun"] == "1",
                    churn=float(attrs["churn"]),
                )
            )
            declared_steps.append(int(attrs["steps"]))
        elif key == "sigmas":
            records[-1].sigmas = [float(v) for v in rest.split()]
        elif key == "tile":
            records[-1].tiles.append(decode_coords(rest.strip()))
        elif key == "timing":
            records[-1].step_ms = [float(v) for v in rest.split()]
        elif key == "total_ms":
            total_ms = float(rest)
        else:
            header[key] = rest

    for record, steps in zip(records, declared_steps):
        if record.steps != steps:
            raise DataError(
                f"level {record.level}: {len(record.sigmas)} sigmas for {steps} steps"
            )
    pyramid = _fields(header["pyramid"])
    return Manifest(
        config_hash=header["config_hash"],
        seed=int(header["seed"]),
        label=int(header["class"]),
        levels=int(pyramid["levels"]),
        patch=parse_dims(pyramid["patch"]),
        full=parse_dims(pyramid["full"]),
        overlap=header["overlap"],
        use_cache=header["cache"] == "on",
        records=records,
        total_ms=total_ms,
    )


def write_manifest(path: Path, manifest: Manifest) -> None:
    write_atomic(Path(path), encode_manifest(manifest).encode("utf-8"))
    logger.debug("wrote manifest %s", path)


def read_manifest(path: Path) -> Manifest:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError:
        raise ChecksumError(f"{path}: manifest is not valid UTF-8") from None
    return decode_manifest(text, what=str(path))
