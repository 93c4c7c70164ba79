"""Little-endian binary record helpers shared by every on-disk format.

Layouts are fixed-endian so files are byte-identical across machines:
integers are ``u32``/``u64`` little-endian, payloads are ``<f4``.
"""

import struct
import zlib
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch

from ..errors import BadMagicError, ChecksumError, TruncatedError

F32 = np.dtype("<f4")


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


def pack_u32(value: int) -> bytes:
    return struct.pack("<I", int(value))


def pack_u64(value: int) -> bytes:
    return struct.pack("<Q", int(value))


def pack_f32(values: Union[np.ndarray, torch.Tensor, Sequence[float]]) -> bytes:
    """Serialize values as contiguous little-endian float32."""
    if isinstance(values, torch.Tensor):
        values = values.detach().to(torch.float32).cpu().numpy()
    return np.ascontiguousarray(np.asarray(values, dtype=F32)).tobytes()


def pack_tensor(tensor: torch.Tensor) -> bytes:
    """rank u32, dims u32 each, then the f32 payload."""
    dims = list(tensor.shape)
    head = pack_u32(len(dims)) + b"".join(pack_u32(d) for d in dims)
    return head + pack_f32(tensor)


def pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return pack_u32(len(raw)) + raw


def seal(body: bytes) -> bytes:
    """Append the CRC32 footer covering every preceding byte."""
    return body + pack_u32(crc32(body))


class Reader:
    """Bounds-checked cursor over a byte buffer.

    Every read checks that enough bytes remain and raises TruncatedError
    otherwise, so a short file never yields a garbage tensor.
    """

    def __init__(self, data: bytes, what: str = "file", expected_crc: Optional[int] = None):
        self.data = data
        self.pos = 0
        self.what = what
        self.expected_crc = expected_crc

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise TruncatedError(
                f"{self.what}: need {n} bytes at offset {self.pos}, "
                f"only {self.remaining} remain"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f32(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype=F32).astype(np.float32)

    def name(self) -> str:
        length = self.u32()
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ChecksumError(f"{self.what}: undecodable record name ({e})") from None

    def tensor(self, max_rank: int = 8) -> torch.Tensor:
        rank = self.u32()
        if rank > max_rank:
            raise TruncatedError(f"{self.what}: implausible tensor rank {rank}")
        dims = [self.u32() for _ in range(rank)]
        count = int(np.prod(dims)) if dims else 1
        values = self.f32(count)
        return torch.from_numpy(values.copy()).reshape(dims)


def open_sealed(data: bytes, magic: bytes, what: str) -> Reader:
    """Check magic and CRC footer, returning a reader over the body.

    Magic is checked first, then the footer, both before any structural
    parsing, so a corrupted length field reads as a checksum failure. The
    caller finishes with :func:`verify` to reject trailing bytes.
    """
    if len(data) < len(magic):
        raise TruncatedError(f"{what}: {len(data)} bytes is shorter than the header")
    if data[: len(magic)] != magic:
        raise BadMagicError(f"{what}: bad magic {data[: len(magic)]!r}, expected {magic!r}")
    if len(data) < len(magic) + 4:
        raise TruncatedError(f"{what}: missing checksum footer")
    body, footer = data[:-4], data[-4:]
    stored = struct.unpack("<I", footer)[0]
    actual = crc32(body)
    if actual != stored:
        raise ChecksumError(
            f"{what}: checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )
    reader = Reader(body, what, expected_crc=stored)
    reader.take(len(magic))
    return reader


def verify(reader: Reader) -> None:
    """Finish a sealed read: no trailing bytes and the CRC matches."""
    if reader.remaining:
        raise ChecksumError(f"{reader.what}: {reader.remaining} unexpected trailing bytes")
    actual = crc32(reader.data)
    expected = actual if reader.expected_crc is None else reader.expected_crc
    if actual != expected:
        raise ChecksumError(
            f"{reader.what}: checksum mismatch (stored {expected:08x}, computed {actual:08x})"
        )


def write_atomic(path: Path, data: bytes) -> None:
    """Write bytes via a temp file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_file = path.with_suffix(path.suffix + ".tmp")
    with open(temp_file, "wb") as f:
        f.write(data)
    temp_file.replace(path)
