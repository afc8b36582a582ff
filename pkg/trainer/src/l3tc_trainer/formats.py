"""Binary file formats shared with the compressor, written independently.

Three little-endian formats cross the boundary between the trainer and
the compressor: vocabulary files (magic L3TV), weights files (L3TW), and
golden logit vectors (L3TG). The first two end in a 32-bit FNV-1a hash of
everything before it; the golden format is a plain record list whose
vocabulary width comes from the paired weights file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

WEIGHTS_MAGIC = b"L3TW"
VOCAB_MAGIC = b"L3TV"
GOLDEN_MAGIC = b"L3TG"
VERSION = 1

FNV_OFFSET = 0x811C9DC5
FNV_PRIME = 0x01000193


class FormatError(ValueError):
    pass


class HashMismatchError(ValueError):
    pass


def fnv1a(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFF
    return h


def atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
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


def _check_trailer(data: bytes, what: str) -> bytes:
    if len(data) < 4:
        raise FormatError(f"{what}: too short for a hash trailer")
    body, trailer = data[:-4], data[-4:]
    stored = struct.unpack("<I", trailer)[0]
    actual = fnv1a(body)
    if stored != actual:
        raise HashMismatchError(
            f"{what}: content hash {actual:#010x} != stored {stored:#010x}")
    return body


@dataclass(frozen=True)
class ModelShape:
    n_layers: int
    d_embed: int
    d_hidden: int
    vocab_size: int


# (n_layers, d_embed, d_hidden); names hold at a character-scale vocabulary
PRESETS = {
    "200k": (2, 96, 96),
    "800k": (2, 176, 192),
    "3.2m": (3, 256, 512),
    "12m": (4, 384, 1024),
}


def preset(name: str, vocab_size: int) -> ModelShape:
    key = name.lower().removeprefix("l3tc-")
    if key not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return ModelShape(*PRESETS[key], vocab_size)


def save_weights_bytes(shape: ModelShape,
                       tensors: dict[str, np.ndarray]) -> bytes:
    parts = [WEIGHTS_MAGIC, struct.pack("<B", VERSION),
             struct.pack("<IIII", shape.n_layers, shape.d_embed,
                         shape.d_hidden, shape.vocab_size),
             struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float32)
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            parts.append(struct.pack("<I", dim))
        parts.append(arr.astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", fnv1a(body))


def save_weights(path, shape: ModelShape,
                 tensors: dict[str, np.ndarray]) -> int:
    data = save_weights_bytes(shape, tensors)
    atomic_write(path, data)
    return int.from_bytes(data[-4:], "little")


def load_weights_bytes(data: bytes) \
        -> tuple[ModelShape, dict[str, np.ndarray]]:
    body = _check_trailer(data, "weights file")
    if body[:4] != WEIGHTS_MAGIC:
        raise FormatError("not a weights file (bad magic)")
    if body[4] != VERSION:
        raise FormatError("unsupported weights file version")
    pos = 5
    shape = ModelShape(*struct.unpack_from("<IIII", body, pos))
    pos += 16
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rank = body[pos]
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", body, pos) if rank else ()
        pos += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        arr = np.frombuffer(body, dtype="<f4", count=n, offset=pos)
        pos += 4 * n
        if name in tensors:
            raise FormatError(f"duplicate tensor {name!r}")
        tensors[name] = arr.reshape(dims).astype(np.float32)
    if pos != len(body):
        raise FormatError("trailing bytes after tensor directory")
    return shape, tensors


def load_weights(path) -> tuple[ModelShape, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        return load_weights_bytes(f.read())


@dataclass
class GoldenCase:
    seed: int
    tokens: list[int]
    logits: np.ndarray  # (vocab,) float32


def save_golden_bytes(cases: list[GoldenCase]) -> bytes:
    parts = [GOLDEN_MAGIC, struct.pack("<I", len(cases))]
    for c in cases:
        parts.append(struct.pack("<QI", c.seed, len(c.tokens)))
        parts.append(np.asarray(c.tokens, dtype="<u4").tobytes())
        parts.append(np.asarray(c.logits, dtype="<f4").tobytes())
    return b"".join(parts)


def save_golden(path, cases: list[GoldenCase]) -> None:
    atomic_write(path, save_golden_bytes(cases))


def load_golden_bytes(data: bytes, vocab_size: int) -> list[GoldenCase]:
    if data[:4] != GOLDEN_MAGIC:
        raise FormatError("not a golden-vector file (bad magic)")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    cases = []
    for _ in range(count):
        if pos + 12 > len(data):
            raise FormatError("golden file truncated in a case header")
        seed, n = struct.unpack_from("<QI", data, pos)
        pos += 12
        need = 4 * n + 4 * vocab_size
        if pos + need > len(data):
            raise FormatError("golden file truncated in a case body")
        toks = np.frombuffer(data, dtype="<u4", count=n, offset=pos)
        pos += 4 * n
        logits = np.frombuffer(data, dtype="<f4", count=vocab_size,
                               offset=pos)
        pos += 4 * vocab_size
        cases.append(GoldenCase(int(seed), toks.astype(np.int64).tolist(),
                                logits.astype(np.float32)))
    if pos != len(data):
        raise FormatError("trailing bytes after the last golden case")
    return cases


def load_golden(path, vocab_size: int) -> list[GoldenCase]:
    with open(path, "rb") as f:
        return load_golden_bytes(f.read(), vocab_size)
