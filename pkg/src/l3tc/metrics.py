"""Size accounting: compression ratios, baselines, entropy helpers.

Ratios are plain fractions (0.16 means 16% of the original size). The
adjusted ratio charges the archive for shipping the model itself at two
bytes per parameter (half-precision), which is the honest comparison when
the decoder does not already hold the weights.
"""

from __future__ import annotations

import gzip as _gzip
import math
import shutil
import subprocess
from collections import Counter


def compression_ratio(compressed_bytes: int, raw_bytes: int) -> float:
    if raw_bytes <= 0:
        raise ValueError("raw size must be positive")
    return compressed_bytes / raw_bytes


def adjusted_compression_ratio(compressed_bytes: int, raw_bytes: int,
                               param_count: int) -> float:
    """(compressed + 2 * params) / raw: counts fp16 weights as payload."""
    if raw_bytes <= 0:
        raise ValueError("raw size must be positive")
    return (compressed_bytes + 2 * param_count) / raw_bytes


def bit_saving(candidate_ratio: float, baseline_ratio: float) -> float:
    """Fraction of the baseline's output the candidate saves."""
    if baseline_ratio <= 0:
        raise ValueError("baseline ratio must be positive")
    return 1.0 - candidate_ratio / baseline_ratio


def gzip_compressed_size(data: bytes, level: int = 9) -> int:
    """Size of ``data`` under gzip; uses the system binary when present.

    The binary and the stdlib module share the deflate implementation, so
    the sizes agree up to container framing either way.
    """
    exe = shutil.which("gzip")
    if exe:
        proc = subprocess.run([exe, f"-{level}", "-c"], input=data,
                              stdout=subprocess.PIPE, check=True)
        return len(proc.stdout)
    return len(_gzip.compress(data, compresslevel=level))


def gzip_ratio(data: bytes, level: int = 9) -> float:
    return gzip_compressed_size(data, level) / len(data)


def order0_bpb(data: bytes) -> float:
    """Order-0 byte entropy of ``data`` in bits per byte."""
    if not data:
        return 0.0
    n = len(data)
    h = 0.0
    for count in Counter(data).values():
        p = count / n
        h -= p * math.log2(p)
    return h
