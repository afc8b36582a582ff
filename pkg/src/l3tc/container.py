"""Archive container and the end-to-end compress/decompress pipeline.

Input bytes are split into fixed-size chunks (default 2048 bytes), each cut
pulled back up to 3 bytes so it lands on a UTF-8 character boundary. A
chunk that decodes as UTF-8 is tokenized and entropy-coded; one that does
not is stored verbatim as a raw record, so arbitrary binary input still
round-trips. Chunks are independent: each coded stream starts from a fresh
model state fed the start-of-chunk token (id 0), so any chunk can be
decoded alone and groups of chunks can be processed concurrently.

Layout, all little-endian:

    header  <4s B B I I Q I I>: magic "L3TC", version, flags
            (bit 0: archive contains raw records), vocabulary hash,
            model hash, original length, chunk size, chunk count
    record  <I I I>: token count (top bit set marks a raw record),
            coded byte length, outlier byte length; then the coded
            bytes, then the outlier bytes (raw records keep their
            payload in the outlier slot and code nothing)

The two hashes bind an archive to the exact vocabulary and weights files
that produced it; decompression refuses to run against anything else,
because a one-bit model difference silently yields wrong output otherwise.

Tokenized chunks are coded in lockstep groups of 512 (see the coder
module); group membership depends only on chunk ordinals, so archives are
byte-identical for any worker count, and decompression batches the same
way, which keeps the float32 model arithmetic bit-identical to encoding.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor

from . import coder, rwkv, tokenizer
from ._binio import CorruptionError, FormatError, HashMismatchError

MAGIC = b"L3TC"
VERSION = 1
FLAG_RAW_CHUNKS = 1
RAW_FLAG = 0x80000000
DEFAULT_CHUNK_BYTES = 2048

_HEADER = struct.Struct("<4sBBIIQII")
_RECORD = struct.Struct("<III")


def split_chunks(data: bytes, chunk_bytes: int) -> list[bytes]:
    """Cut ``data`` into chunks, preferring UTF-8 character boundaries.

    A cut landing inside a multi-byte sequence backs up at most 3 bytes to
    the sequence's lead byte; if no lead byte is that close the data is not
    valid UTF-8 there and the cut stays put (the chunk then round-trips as
    a raw record).
    """
    if chunk_bytes < 16:
        raise ValueError("chunk size must be at least 16 bytes")
    chunks = []
    pos = 0
    n = len(data)
    while pos < n:
        end = min(pos + chunk_bytes, n)
        if end < n and (data[end] & 0xC0) == 0x80:
            cut = end
            for _ in range(3):
                cut -= 1
                if cut <= pos or (data[cut] & 0xC0) != 0x80:
                    break
            if cut > pos and data[cut] >= 0xC0:
                end = cut
        chunks.append(data[pos:end])
        pos = end
    return chunks


def _check_pairing(vocab: tokenizer.Vocabulary, model: rwkv.ModelWeights):
    if vocab.size != model.config.vocab_size:
        raise ValueError(
            f"vocabulary has {vocab.size} tokens but the model expects "
            f"{model.config.vocab_size}")


def _map_groups(fn, groups: list, workers: int) -> list:
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, groups))
    return [fn(g) for g in groups]


def compress(data: bytes, vocab: tokenizer.Vocabulary,
             model: rwkv.ModelWeights, *,
             chunk_bytes: int = DEFAULT_CHUNK_BYTES,
             workers: int = 1) -> bytes:
    _check_pairing(vocab, model)
    chunks = split_chunks(data, chunk_bytes)

    entries = []  # ("text", ids, outliers) | ("raw", payload)
    seqs = []  # token sequences of text chunks, in chunk order
    for chunk in chunks:
        try:
            text = chunk.decode("utf-8")
        except UnicodeDecodeError:
            entries.append(("raw", chunk))
            continue
        tc = vocab.encode(text)
        entries.append(("text", tc.ids, tc.outliers))
        seqs.append(tc.ids)

    groups = [seqs[i:i + coder.GROUP] for i in range(0, len(seqs),
                                                     coder.GROUP)]
    encoded = _map_groups(lambda g: coder.encode_sequences(model, g),
                          groups, workers)
    payloads = [p for group in encoded for p in group]

    has_raw = any(kind == "raw" for kind, *_ in entries)
    out = [_HEADER.pack(MAGIC, VERSION, FLAG_RAW_CHUNKS if has_raw else 0,
                        vocab.identity_hash(), model.identity_hash(),
                        len(data), chunk_bytes, len(chunks))]
    next_payload = 0
    for entry in entries:
        if entry[0] == "raw":
            payload = entry[1]
            out.append(_RECORD.pack(RAW_FLAG, 0, len(payload)))
            out.append(payload)
        else:
            _, ids, outliers = entry
            coded = payloads[next_payload]
            next_payload += 1
            out.append(_RECORD.pack(len(ids), len(coded), len(outliers)))
            out.append(coded)
            out.append(outliers)
    return b"".join(out)


def decompress(data: bytes, vocab: tokenizer.Vocabulary,
               model: rwkv.ModelWeights, *, workers: int = 1) -> bytes:
    _check_pairing(vocab, model)
    if len(data) < _HEADER.size:
        raise FormatError("archive shorter than its header")
    magic, version, _flags, vhash, mhash, orig_len, _chunk_bytes, n_chunks \
        = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError("not an archive (bad magic)")
    if version != VERSION:
        raise FormatError(f"unsupported archive version {version}")
    if vhash != vocab.identity_hash():
        raise HashMismatchError(
            "archive was made with a different vocabulary")
    if mhash != model.identity_hash():
        raise HashMismatchError("archive was made with a different model")

    pos = _HEADER.size
    records = []  # ("raw", payload) | ("text", count, coded, outliers)
    counts = []
    coded_streams = []
    for _ in range(n_chunks):
        if pos + _RECORD.size > len(data):
            raise FormatError("archive truncated inside a record header")
        token_count, coded_len, outlier_len = _RECORD.unpack_from(data, pos)
        pos += _RECORD.size
        if pos + coded_len + outlier_len > len(data):
            raise FormatError("archive truncated inside a record body")
        coded = data[pos:pos + coded_len]
        pos += coded_len
        outliers = data[pos:pos + outlier_len]
        pos += outlier_len
        if token_count & RAW_FLAG:
            if token_count != RAW_FLAG or coded_len:
                raise FormatError("malformed raw record")
            records.append(("raw", outliers))
        else:
            records.append(("text", token_count, coded, outliers))
            counts.append(token_count)
            coded_streams.append(coded)
    if pos != len(data):
        raise FormatError("trailing bytes after the last record")

    groups = [(coded_streams[i:i + coder.GROUP], counts[i:i + coder.GROUP])
              for i in range(0, len(coded_streams), coder.GROUP)]
    decoded = _map_groups(
        lambda g: coder.decode_sequences(model, g[0], g[1]), groups, workers)
    id_lists = [ids for group in decoded for ids in group]

    parts = []
    next_ids = 0
    for rec in records:
        if rec[0] == "raw":
            parts.append(rec[1])
        else:
            _, token_count, _, outliers = rec
            ids = id_lists[next_ids]
            next_ids += 1
            text = vocab.decode(ids, outliers)
            parts.append(text.encode("utf-8"))
    out = b"".join(parts)
    if len(out) != orig_len:
        raise CorruptionError(
            f"decoded {len(out)} bytes, archive promised {orig_len}")
    return out


def compress_file(in_path, out_path, vocab, model, *,
                  chunk_bytes: int = DEFAULT_CHUNK_BYTES,
                  workers: int = 1) -> tuple[int, int]:
    """Compress a file; returns (raw_bytes, compressed_bytes)."""
    from ._binio import atomic_write
    with open(in_path, "rb") as f:
        data = f.read()
    blob = compress(data, vocab, model, chunk_bytes=chunk_bytes,
                    workers=workers)
    atomic_write(out_path, blob)
    return len(data), len(blob)


def decompress_file(in_path, out_path, vocab, model, *,
                    workers: int = 1) -> int:
    """Decompress a file; returns the number of bytes written."""
    from ._binio import atomic_write
    with open(in_path, "rb") as f:
        blob = f.read()
    data = decompress(blob, vocab, model, workers=workers)
    atomic_write(out_path, data)
    return len(data)
