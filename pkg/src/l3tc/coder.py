"""Range coding against model-predicted, 16-bit-quantized symbol tables.

The coder is a byte-oriented range coder: 64-bit low accumulator, 32-bit
range, renormalized one byte at a time whenever the range drops below 2^24.
Carries are handled with a cache byte plus a pending counter for runs of
0xFF, so `low` never needs more than 33 bits. The first output byte is the
initial zero cache byte; the decoder discards it. `finish` performs five
renormalization shifts (at most 5 flush bytes); up to 4 tail bytes may stay
logically deferred in the cache, and the decoder compensates by treating at
most 4 reads past the payload end as zeros. Reads beyond that grace window
raise CorruptionError.

Frequency tables always total exactly 2^16. Quantization from a float32
probability row is

    f_i = max(1, floor(p_i * (2^16 - V)))

with the leftover deficit added to the argmax-probability symbol (ties going
to the lowest index). Every symbol keeps a nonzero slot, so any id stays
decodable no matter how confident the model is. The floor form is coarse for
nearly uniform rows at large V (at V=16384 a uniform row costs ~3% over
log2(V)); for the peaked rows a trained model emits, the deficit lands on the
mode and the overhead is negligible.

Chunk payloads are coded with a fresh model state and a fresh coder per
chunk, conditioning the first symbol on token id 0. Chunks are mutually
independent, which is what allows the batched lockstep paths below: group
membership and padding depend only on chunk ordinals and token counts, never
on worker count, so the float math on the encode and decode side always runs
at identical array shapes and reproduces bit-identical tables.

Debug-mode table hashing uses zlib.crc32 over each frequency row (the file
trailers elsewhere use FNV-1a per the format; the debug hash is only a
diagnostic, so the fast stdlib hash is fine).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from ._binio import CorruptionError

TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS
TOP = 1 << 24
MASK32 = 0xFFFFFFFF

# Chunks coded per lockstep batch. Fixed per format version: changing it
# changes the shapes the float math runs at, hence the archive bytes.
GROUP = 512

_SEARCH_BLOCK = 64


@dataclass
class FrequencyTable:
    """Quantized symbol frequencies summing to exactly 2^16.

    ``cumulative`` has V+1 entries with cumulative[0] == 0 and
    cumulative[V] == 2^16.
    """

    freqs: np.ndarray
    cumulative: np.ndarray

    @property
    def vocab_size(self) -> int:
        return len(self.freqs)

    @classmethod
    def from_freqs(cls, freqs: np.ndarray) -> "FrequencyTable":
        freqs = np.asarray(freqs, dtype=np.int64)
        cum = np.zeros(len(freqs) + 1, dtype=np.int64)
        np.cumsum(freqs, out=cum[1:])
        if cum[-1] != TOTAL:
            raise ValueError(f"frequencies sum to {cum[-1]}, need {TOTAL}")
        if freqs.min(initial=TOTAL) < 1:
            raise ValueError("every symbol needs a nonzero frequency")
        return cls(freqs=freqs, cumulative=cum)


def quantize_rows(probs: np.ndarray, consume: bool = False) -> np.ndarray:
    """Quantize a (B, V) float32 probability matrix row by row.

    Returns int32 frequencies, each row summing to exactly 2^16. With
    ``consume`` the input buffer is clobbered, which saves one large
    temporary per call on the hot path; the numeric result is identical.
    """
    if probs.ndim != 2:
        raise ValueError("expected a (batch, vocab) matrix")
    b, v = probs.shape
    if v >= TOTAL:
        raise ValueError(f"vocab size {v} >= {TOTAL} unsupported")
    if v < 1:
        raise ValueError("empty vocabulary")
    scale = np.float32(TOTAL - v)
    am = probs.argmax(axis=1)
    if consume and probs.dtype == np.float32:
        np.multiply(probs, scale, out=probs)
        scaled = probs
    else:
        scaled = probs * scale
    f = scaled.astype(np.int32)  # truncation == floor: values nonnegative
    np.maximum(f, 1, out=f)
    deficit = TOTAL - f.sum(axis=1, dtype=np.int64)
    rows = np.arange(b)
    f[rows, am] += deficit.astype(np.int32)
    if f[rows, am].min(initial=1) < 1:
        # Reachable only if f32 rounding pushed sum(p) far above 1 on a
        # near-uniform row; refuse rather than emit an undecodable table.
        raise ValueError("probability row too malformed to quantize")
    return f


def quantize(probs: np.ndarray) -> FrequencyTable:
    """Quantize one probability vector to a FrequencyTable."""
    p = np.ascontiguousarray(probs, dtype=np.float32)
    f = quantize_rows(p[None, :])[0]
    return FrequencyTable.from_freqs(f)


class RangeEncoder:
    __slots__ = ("low", "range", "cache", "pending", "buf")

    def __init__(self) -> None:
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.pending = 1  # cache byte, plus any queued 0xFF bytes
        self.buf = bytearray()

    def _shift(self) -> None:
        low = self.low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            buf = self.buf
            buf.append((self.cache + carry) & 0xFF)
            filler = 0x00 if carry else 0xFF
            for _ in range(self.pending - 1):
                buf.append(filler)
            self.cache = (low >> 24) & 0xFF
            self.pending = 0
        self.pending += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, cum_lo: int, freq: int, is_last: bool) -> None:
        """Narrow the interval to the symbol [cum_lo, cum_lo+freq).

        ``is_last`` marks the final table entry (cum_lo + freq == 2^16),
        which absorbs the division remainder.
        """
        r = self.range >> TOTAL_BITS
        add = r * cum_lo
        self.low += add
        if is_last:
            self.range -= add
        else:
            self.range = r * freq
        while self.range < TOP:
            self._shift()
            self.range = (self.range << 8) & MASK32

    def encode_symbol(self, table: FrequencyTable, symbol: int) -> None:
        cum = table.cumulative
        self.encode(int(cum[symbol]), int(cum[symbol + 1] - cum[symbol]),
                    symbol == table.vocab_size - 1)

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift()
        return bytes(self.buf)


class RangeDecoder:
    __slots__ = ("data", "pos", "limit", "range", "code", "_r")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 1  # discard the leading zero cache byte
        self.limit = len(data) + 4  # tail grace, see module docstring
        self.range = MASK32
        self.code = 0
        self._r = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._byte()

    def _byte(self) -> int:
        pos = self.pos
        if pos >= self.limit:
            raise CorruptionError("coded stream underflow")
        self.pos = pos + 1
        return self.data[pos] if pos < len(self.data) else 0

    def target(self) -> int:
        """Cumulative-frequency value of the next symbol."""
        self._r = self.range >> TOTAL_BITS
        v = self.code // self._r
        return v if v < TOTAL else TOTAL - 1

    def consume(self, cum_lo: int, freq: int, is_last: bool) -> None:
        """Accept the symbol found at the last target() value."""
        r = self._r
        self.code -= r * cum_lo
        if is_last:
            self.range -= r * cum_lo
        else:
            self.range = r * freq
        while self.range < TOP:
            self.code = ((self.code << 8) | self._byte()) & MASK32
            self.range = (self.range << 8) & MASK32

    def decode_symbol(self, table: FrequencyTable) -> int:
        v = self.target()
        cum = table.cumulative
        sym = int(np.searchsorted(cum, v, side="right")) - 1
        self.consume(int(cum[sym]), int(cum[sym + 1] - cum[sym]),
                     sym == table.vocab_size - 1)
        return sym


def _encode_lows(freqs: np.ndarray, syms: np.ndarray) -> np.ndarray:
    """Per-row prefix sums cum[b, :syms[b]] without a full cumulative."""
    b, v = freqs.shape
    flat = freqs.reshape(-1)
    idx = np.empty(2 * b, dtype=np.int64)
    base = np.arange(b, dtype=np.int64) * v
    idx[0::2] = base
    idx[1::2] = base + syms
    lows = np.add.reduceat(flat, idx, dtype=np.int64)[0::2]
    # reduceat yields flat[base] for empty segments (sym == 0)
    return np.where(syms == 0, 0, lows)


class _BlockSearch:
    """Two-level cumulative search over a batch of frequency rows.

    Exact integer math; exists because a full (B, V) cumsum per step is the
    slowest operation on this class of hardware.
    """

    def __init__(self, freqs: np.ndarray) -> None:
        b, v = freqs.shape
        k = _SEARCH_BLOCK
        nb = -(-v // k)
        if nb * k != v:
            padded = np.zeros((b, nb * k), dtype=freqs.dtype)
            padded[:, :v] = freqs
        else:
            padded = freqs
        self.freqs = freqs
        self.padded = padded
        self.k = k
        self.rows = np.arange(b)
        self.coarse = np.cumsum(
            padded.reshape(b, nb, k).sum(axis=2, dtype=np.int64), axis=1)

    def lookup(self, targets: np.ndarray):
        """Map cumulative targets to (symbol, cum_lo, freq) per row."""
        t = targets[:, None]
        blk = (self.coarse <= t).sum(axis=1)
        base = np.where(blk > 0,
                        self.coarse[self.rows, np.maximum(blk - 1, 0)], 0)
        k = self.k
        cols = blk[:, None] * k + np.arange(k)
        seg = self.padded[self.rows[:, None], cols].astype(np.int64)
        segc = np.cumsum(seg, axis=1)
        off = ((base[:, None] + segc) <= t).sum(axis=1)
        syms = blk * k + off
        prev = np.where(off > 0, segc[self.rows, np.maximum(off - 1, 0)], 0)
        cum_lo = base + prev
        fr = self.freqs[self.rows, syms]
        return syms, cum_lo, fr


def _row_hashes(freqs: np.ndarray, active: np.ndarray) -> list[int | None]:
    out: list[int | None] = []
    for b in range(freqs.shape[0]):
        if active[b]:
            out.append(zlib.crc32(freqs[b].tobytes()))
        else:
            out.append(None)
    return out


def encode_sequences(model, seqs: list[list[int]], hash_tables: bool = False):
    """Code each token sequence into its own payload, in lockstep.

    Every sequence starts from a fresh zero state and a fresh coder; the
    first symbol is conditioned on token id 0. Returns a list of payloads,
    or (payloads, per-sequence table hash lists) when ``hash_tables``.
    """
    from . import rwkv

    b = len(seqs)
    v = model.config.vocab_size
    if b == 0:
        return ([], []) if hash_tables else []
    counts = np.array([len(s) for s in seqs], dtype=np.int64)
    t_max = int(counts.max())
    toks = np.zeros((b, t_max), dtype=np.int64)
    for i, s in enumerate(seqs):
        arr = np.asarray(s, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= v):
            raise ValueError("token id out of range for the model vocabulary")
        toks[i, :arr.size] = arr
    encoders = [RangeEncoder() for _ in range(b)]
    state = rwkv.init_state(model.config, batch=b)
    feed = np.zeros(b, dtype=np.int64)
    hashes: list[list[int]] = [[] for _ in range(b)]
    last = v - 1
    for t in range(t_max):
        probs, state = rwkv.next_distribution_batch(model, state, feed)
        freqs = quantize_rows(probs, consume=True)
        active = t < counts
        syms = toks[:, t]
        lows = _encode_lows(freqs, syms)
        frs = freqs[np.arange(b), syms]
        lo_l = lows.tolist()
        fr_l = frs.tolist()
        sym_l = syms.tolist()
        act_l = active.tolist()
        for i in range(b):
            if act_l[i]:
                encoders[i].encode(lo_l[i], fr_l[i], sym_l[i] == last)
        if hash_tables:
            for i, h in enumerate(_row_hashes(freqs, active)):
                if h is not None:
                    hashes[i].append(h)
        feed = toks[:, t]  # padded rows keep feeding id 0
    payloads = [e.finish() for e in encoders]
    if hash_tables:
        return payloads, hashes
    return payloads


def decode_sequences(model, payloads: list[bytes], counts: list[int],
                     hash_tables: bool = False):
    """Inverse of encode_sequences given each sequence's token count."""
    from . import rwkv

    b = len(payloads)
    if len(counts) != b:
        raise ValueError("one token count per payload required")
    if b == 0:
        return ([], []) if hash_tables else []
    v = model.config.vocab_size
    counts_a = np.array(counts, dtype=np.int64)
    t_max = int(counts_a.max(initial=0))
    decoders = [RangeDecoder(p) for p in payloads]
    out = np.zeros((b, t_max), dtype=np.int64)
    state = rwkv.init_state(model.config, batch=b)
    feed = np.zeros(b, dtype=np.int64)
    hashes: list[list[int]] = [[] for _ in range(b)]
    last = v - 1
    rows = np.arange(b)
    for t in range(t_max):
        probs, state = rwkv.next_distribution_batch(model, state, feed)
        freqs = quantize_rows(probs, consume=True)
        active = t < counts_a
        act_l = active.tolist()
        targets = np.zeros(b, dtype=np.int64)
        for i in range(b):
            if act_l[i]:
                targets[i] = decoders[i].target()
        syms, cum_lo, frs = _BlockSearch(freqs).lookup(targets)
        lo_l = cum_lo.tolist()
        fr_l = frs.tolist()
        sym_l = syms.tolist()
        for i in range(b):
            if act_l[i]:
                decoders[i].consume(lo_l[i], fr_l[i], sym_l[i] == last)
        if hash_tables:
            for i, h in enumerate(_row_hashes(freqs, active)):
                if h is not None:
                    hashes[i].append(h)
        feed = np.where(active, syms, 0)
        out[active, t] = syms[active]
    seqs = [out[i, :counts[i]].tolist() for i in range(b)]
    if hash_tables:
        return seqs, hashes
    return seqs


def encode_chunk(tokens: list[int], model) -> bytes:
    """Code one chunk's token ids into a payload (fresh state and coder)."""
    return encode_sequences(model, [list(tokens)])[0]


def decode_chunk(data: bytes, model, n_tokens: int) -> list[int]:
    """Decode exactly ``n_tokens`` ids from a chunk payload."""
    if n_tokens < 0:
        raise ValueError("token count must be nonnegative")
    return decode_sequences(model, [data], [n_tokens])[0]
