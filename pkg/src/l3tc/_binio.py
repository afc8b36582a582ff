"""Little-endian binary IO helpers shared by the file formats.

Every on-disk artifact in this package ends with a 32-bit FNV-1a hash of
all preceding bytes; readers verify it before trusting anything else.
FNV-1a is a byte-serial recurrence with no vectorizable form, so the loop
stays pure Python; hashing is a once-per-file cost, not a hot path.
"""

from __future__ import annotations

import os
import struct
import tempfile

FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193


class FormatError(ValueError):
    """Malformed file: bad magic, version, field, or truncation."""


class CorruptionError(ValueError):
    """Stream content is inconsistent with its own framing."""


class HashMismatchError(ValueError):
    """A stored content hash does not match the presented artifact."""


def fnv1a(data: bytes | bytearray | memoryview) -> int:
    """32-bit FNV-1a over ``data``."""
    h = FNV_OFFSET
    prime = FNV_PRIME
    mask = 0xFFFFFFFF
    for b in bytes(data):
        h = ((h ^ b) * prime) & mask
    return h


content_hash32 = fnv1a


class ByteWriter:
    def __init__(self) -> None:
        self.buf = bytearray()

    def u8(self, v: int) -> None:
        self.buf += struct.pack("<B", v)

    def u16(self, v: int) -> None:
        self.buf += struct.pack("<H", v)

    def u32(self, v: int) -> None:
        self.buf += struct.pack("<I", v)

    def u64(self, v: int) -> None:
        self.buf += struct.pack("<Q", v)

    def f64(self, v: float) -> None:
        self.buf += struct.pack("<d", v)

    def raw(self, data: bytes) -> None:
        self.buf += data

    def finish_with_hash(self) -> bytes:
        """Append the hash trailer and return the full payload."""
        h = fnv1a(self.buf)
        return bytes(self.buf) + struct.pack("<I", h)


class ByteReader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise FormatError("truncated file")
        out = self.data[self.pos:end]
        self.pos = end
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def done(self) -> bool:
        return self.pos == len(self.data)


def check_trailing_hash(data: bytes, what: str) -> tuple[bytes, int]:
    """Split ``data`` into (body, stored_hash), verifying the trailer.

    Raises FormatError when too short and HashMismatchError when the stored
    hash does not match the body.
    """
    if len(data) < 4:
        raise FormatError(f"{what}: too short for a hash trailer")
    body, trailer = data[:-4], data[-4:]
    stored = struct.unpack("<I", trailer)[0]
    actual = fnv1a(body)
    if stored != actual:
        raise HashMismatchError(
            f"{what}: content hash {actual:#010x} != stored {stored:#010x}")
    return body, stored


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
