"""Byte-pair tokenizer with a character coverage cut and an outlier bypass.

Training ranks the corpus characters by (count descending, codepoint
ascending) and keeps the smallest prefix whose cumulative count reaches
``coverage`` of the corpus. Kept characters form the base alphabet; every
other character is an outlier. Text is pre-segmented with `` ?\\S+|\\s+``
(a word with its preceding space, or a whitespace run), outlier characters
split segments and never participate in merges, and byte-pair merges are
learned at the word level: pair counts are taken over the unique-segment
multiset, the best pair is the one with the highest count (ties broken by
the lexicographically smallest left then right token bytes), and learning
stops at the target size or when no pair occurs twice.

Encoding emits token id 0 (the unknown token) at each outlier character and
appends the character's UTF-8 bytes to a per-chunk outlier list; decoding
consumes that list left to right, reading each character's length from its
UTF-8 lead byte. The unknown token's stored bytes are b"\\xff", which is
never valid UTF-8, so it cannot collide with any real token.

Vocabulary files: magic "L3TV", version 1, vocab size, unknown id, the
coverage fraction, the token table in id order (u16 length + bytes), and
the merge list as (left, right, result) id triples, with a trailing FNV-1a
hash. Ids are assigned unknown first, then alphabet characters in rank
order, then merge results in creation order, so the merge list doubles as
the merge-priority table.
"""

from __future__ import annotations

import heapq
import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._binio import (ByteReader, ByteWriter, CorruptionError, FormatError,
                     atomic_write, check_trailing_hash)

MAGIC = b"L3TV"
VERSION = 1
UNK_ID = 0
UNK_BYTES = b"\xff"
MAX_TOKEN_BYTES = 0xFFFF
PIECE_RE = re.compile(r" ?\S+|\s+")

_CACHE_CAP = 1 << 18


def _utf8_len(lead: int) -> int:
    """Length of a UTF-8 sequence from its lead byte; 0 when invalid."""
    if lead < 0x80:
        return 1
    if 0xC2 <= lead < 0xE0:
        return 2
    if 0xE0 <= lead < 0xF0:
        return 3
    if 0xF0 <= lead < 0xF5:
        return 4
    return 0


@dataclass
class TokenizedChunk:
    """Token ids plus the outlier characters they reference, in order."""

    ids: np.ndarray
    outliers: bytes

    @property
    def unknown_count(self) -> int:
        return int(np.count_nonzero(self.ids == UNK_ID))


class Vocabulary:
    """Immutable token table with merge rules and the outlier policy."""

    def __init__(self, tokens: list[bytes], merges: list[tuple[int, int, int]],
                 coverage: float, content_hash: int | None = None) -> None:
        if not tokens or tokens[UNK_ID] != UNK_BYTES:
            raise FormatError("token 0 must be the unknown sentinel")
        if len(tokens) > MAX_TOKEN_BYTES:
            raise FormatError("vocabulary too large")
        if not 0.0 < coverage <= 1.0:
            raise FormatError("coverage must be in (0, 1]")
        self.tokens = [bytes(t) for t in tokens]
        self.merges = [tuple(m) for m in merges]
        self.coverage = float(coverage)
        self.content_hash = content_hash
        self._char_id: dict[str, int] = {}
        for tid, tok in enumerate(self.tokens):
            if tid == UNK_ID:
                continue
            if not tok or len(tok) > MAX_TOKEN_BYTES:
                raise FormatError(f"token {tid} has a bad length")
            if len(tok) <= 4:
                try:
                    s = tok.decode("utf-8")
                except UnicodeDecodeError:
                    raise FormatError(f"token {tid} is not UTF-8")
                if len(s) == 1:
                    if s in self._char_id:
                        raise FormatError(f"duplicate character token {s!r}")
                    self._char_id[s] = tid
        self._rank: dict[tuple[int, int], tuple[int, int]] = {}
        for rank, (left, right, result) in enumerate(self.merges):
            for tid in (left, right, result):
                if not 0 < tid < len(self.tokens):
                    raise FormatError("merge id out of range")
            if self.tokens[result] != self.tokens[left] + self.tokens[right]:
                raise FormatError("merge result does not match its parts")
            if (left, right) in self._rank:
                raise FormatError("duplicate merge pair")
            self._rank[left, right] = (rank, result)
        self._cache: dict[str, tuple[list[int], str]] = {}

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __repr__(self) -> str:
        return (f"Vocabulary(size={self.size}, merges={len(self.merges)}, "
                f"coverage={self.coverage})")

    def identity_hash(self) -> int:
        if self.content_hash is None:
            data = save_vocabulary_bytes(self)
            self.content_hash = int.from_bytes(data[-4:], "little")
        return self.content_hash

    def _merge_ids(self, ids: list[int]) -> list[int]:
        """Apply merges to one covered segment, lowest rank first."""
        n = len(ids)
        if n < 2:
            return ids
        rank = self._rank
        ids = list(ids)
        nxt = list(range(1, n)) + [-1]
        prv = [-1] + list(range(n - 1))
        alive = [True] * n
        heap = []
        for i in range(n - 1):
            e = rank.get((ids[i], ids[i + 1]))
            if e is not None:
                heap.append((e[0], i, ids[i], ids[i + 1]))
        heapq.heapify(heap)
        while heap:
            rk, i, left, right = heapq.heappop(heap)
            if not alive[i] or ids[i] != left:
                continue
            j = nxt[i]
            if j == -1 or not alive[j] or ids[j] != right:
                continue
            ids[i] = rank[left, right][1]
            alive[j] = False
            k = nxt[j]
            nxt[i] = k
            if k != -1:
                prv[k] = i
            p = prv[i]
            if p != -1:
                e = rank.get((ids[p], ids[i]))
                if e is not None:
                    heapq.heappush(heap, (e[0], p, ids[p], ids[i]))
            if k != -1:
                e = rank.get((ids[i], ids[k]))
                if e is not None:
                    heapq.heappush(heap, (e[0], i, ids[i], ids[k]))
        return [ids[i] for i in range(n) if alive[i]]

    def _encode_piece(self, piece: str) -> tuple[list[int], str]:
        hit = self._cache.get(piece)
        if hit is not None:
            return hit
        char_id = self._char_id
        ids: list[int] = []
        outs: list[str] = []
        seg: list[int] = []
        for ch in piece:
            cid = char_id.get(ch)
            if cid is None:
                if seg:
                    ids.extend(self._merge_ids(seg))
                    seg = []
                ids.append(UNK_ID)
                outs.append(ch)
            else:
                seg.append(cid)
        if seg:
            ids.extend(self._merge_ids(seg))
        hit = (ids, "".join(outs))
        if len(self._cache) >= _CACHE_CAP:
            self._cache.clear()
        self._cache[piece] = hit
        return hit

    def encode(self, text: str) -> TokenizedChunk:
        ids_all: list[int] = []
        out_parts: list[str] = []
        for piece in PIECE_RE.findall(text):
            ids, outs = self._encode_piece(piece)
            ids_all.extend(ids)
            if outs:
                out_parts.append(outs)
        return TokenizedChunk(np.asarray(ids_all, dtype=np.int32),
                              "".join(out_parts).encode("utf-8"))

    def decode(self, ids, outliers: bytes = b"") -> str:
        tokens = self.tokens
        n_tok = len(tokens)
        parts: list[bytes] = []
        pos = 0
        end = len(outliers)
        for tid in np.asarray(ids, dtype=np.int64).tolist():
            if tid == UNK_ID:
                if pos >= end:
                    raise CorruptionError("fewer outliers than unknown tokens")
                ln = _utf8_len(outliers[pos])
                if ln == 0 or pos + ln > end:
                    raise CorruptionError("malformed outlier bytes")
                parts.append(outliers[pos:pos + ln])
                pos += ln
            else:
                if not 0 <= tid < n_tok:
                    raise CorruptionError(f"token id {tid} out of range")
                parts.append(tokens[tid])
        if pos != end:
            raise CorruptionError("more outliers than unknown tokens")
        try:
            return b"".join(parts).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptionError(f"decoded text is not UTF-8: {exc}") from exc


def train_vocabulary(text: str, target_size: int,
                     coverage: float = 0.999) -> Vocabulary:
    """Learn a vocabulary of at most ``target_size`` tokens from ``text``."""
    if not 0.0 < coverage <= 1.0:
        raise ValueError("coverage must be in (0, 1]")
    if not 2 <= target_size <= MAX_TOKEN_BYTES:
        raise ValueError("target_size must be in [2, 65535]")
    if not text:
        raise ValueError("empty training corpus")

    char_counts = Counter(text)
    ranked = sorted(char_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    threshold = coverage * len(text)
    covered: list[str] = []
    cum = 0
    for ch, cnt in ranked:
        covered.append(ch)
        cum += cnt
        if cum >= threshold:
            break
    if len(covered) + 1 > target_size:
        raise ValueError(
            f"target_size {target_size} cannot hold the {len(covered)} "
            "covered characters plus the unknown token")

    tokens: list[bytes] = [UNK_BYTES] + [ch.encode("utf-8") for ch in covered]
    char_id = {ch: i + 1 for i, ch in enumerate(covered)}
    covered_set = set(covered)

    # Unique covered segments with multiplicities; outliers split segments.
    word_counts: Counter[str] = Counter()
    for piece, pc in Counter(PIECE_RE.findall(text)).items():
        seg_start = None
        for idx, ch in enumerate(piece):
            if ch in covered_set:
                if seg_start is None:
                    seg_start = idx
            elif seg_start is not None:
                word_counts[piece[seg_start:idx]] += pc
                seg_start = None
        if seg_start is not None:
            word_counts[piece[seg_start:]] += pc

    words: list[list] = []  # [ids, count]
    for seg, cnt in word_counts.items():
        if len(seg) >= 2:
            words.append([[char_id[c] for c in seg], cnt])

    pair_counts: dict[tuple[int, int], int] = {}
    pair_loc: dict[tuple[int, int], set[int]] = {}
    for w_idx, (ids, cnt) in enumerate(words):
        for pair in zip(ids, ids[1:]):
            pair_counts[pair] = pair_counts.get(pair, 0) + cnt
            pair_loc.setdefault(pair, set()).add(w_idx)

    heap = [(-cnt, tokens[l], tokens[r], l, r)
            for (l, r), cnt in pair_counts.items()]
    heapq.heapify(heap)
    merges: list[tuple[int, int, int]] = []
    banned: set[tuple[int, int]] = set()

    while len(tokens) < target_size and heap:
        neg, _, _, left, right = heapq.heappop(heap)
        pair = (left, right)
        if pair in banned:
            continue
        cur = pair_counts.get(pair, 0)
        if cur != -neg:
            # Stale entry. Decrements never push, so reinsert at the
            # current count to keep the pair schedulable.
            if cur >= 2:
                heapq.heappush(heap, (-cur, tokens[left], tokens[right],
                                      left, right))
            continue
        if cur < 2:
            break
        if len(tokens[left]) + len(tokens[right]) > MAX_TOKEN_BYTES:
            banned.add(pair)
            continue
        new_id = len(tokens)
        tokens.append(tokens[left] + tokens[right])
        merges.append((left, right, new_id))
        grown: set[tuple[int, int]] = set()
        for w_idx in sorted(pair_loc.get(pair, ())):
            ids, cnt = words[w_idx]
            merged: list[int] = []
            i = 0
            n = len(ids)
            while i < n:
                if i + 1 < n and ids[i] == left and ids[i + 1] == right:
                    merged.append(new_id)
                    i += 2
                else:
                    merged.append(ids[i])
                    i += 1
            if len(merged) == n:
                continue  # stale location, no occurrence left
            for old_pair in zip(ids, ids[1:]):
                cur = pair_counts.get(old_pair, 0) - cnt
                if cur <= 0:
                    pair_counts.pop(old_pair, None)
                    loc = pair_loc.get(old_pair)
                    if loc is not None:
                        loc.discard(w_idx)
                        if not loc:
                            pair_loc.pop(old_pair, None)
                else:
                    pair_counts[old_pair] = cur
            for new_pair in zip(merged, merged[1:]):
                pair_counts[new_pair] = pair_counts.get(new_pair, 0) + cnt
                pair_loc.setdefault(new_pair, set()).add(w_idx)
                grown.add(new_pair)
            words[w_idx][0] = merged
        pair_counts.pop(pair, None)
        pair_loc.pop(pair, None)
        # one heap entry per changed pair, not one per word touched
        for gp in grown:
            cnt = pair_counts.get(gp, 0)
            if cnt >= 2:
                heapq.heappush(heap, (-cnt, tokens[gp[0]], tokens[gp[1]],
                                      gp[0], gp[1]))

    return Vocabulary(tokens, merges, coverage)


@dataclass
class BpbReport:
    """Cost accounting for tokenizing a text, in bits."""

    byte_count: int
    token_count: int
    unknown_count: int
    outlier_byte_count: int
    bits_tokens: float
    bits_outliers: float
    mode: str

    @property
    def bits_total(self) -> float:
        return self.bits_tokens + self.bits_outliers

    @property
    def bpb(self) -> float:
        return self.bits_total / self.byte_count if self.byte_count else 0.0

    @property
    def bits_per_token(self) -> float:
        return self.bits_tokens / self.token_count if self.token_count else 0.0

    @property
    def unknown_ratio(self) -> float:
        return self.unknown_count / self.token_count if self.token_count \
            else 0.0


def bpb_eval(vocab: Vocabulary, text: str, mode: str = "uniform") -> BpbReport:
    """Bits-per-byte of the tokenization under a simple token-cost model.

    ``uniform`` charges log2(V) per token (the unknown token included);
    ``unigram`` charges each token -log2 of its empirical frequency within
    this text. Outlier characters additionally cost 8 bits per UTF-8 byte.
    """
    chunk = vocab.encode(text)
    n_tok = int(chunk.ids.size)
    byte_count = len(text.encode("utf-8"))
    if mode == "uniform":
        bits_tokens = n_tok * math.log2(vocab.size)
    elif mode == "unigram":
        counts = np.bincount(chunk.ids, minlength=vocab.size) if n_tok else \
            np.zeros(vocab.size, dtype=np.int64)
        nz = counts[counts > 0].astype(np.float64)
        bits_tokens = float(np.sum(nz * (np.log2(n_tok) - np.log2(nz))))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return BpbReport(
        byte_count=byte_count,
        token_count=n_tok,
        unknown_count=chunk.unknown_count,
        outlier_byte_count=len(chunk.outliers),
        bits_tokens=float(bits_tokens),
        bits_outliers=8.0 * len(chunk.outliers),
        mode=mode,
    )


def unknown_ratio(vocab: Vocabulary, text: str) -> float:
    chunk = vocab.encode(text)
    n = int(chunk.ids.size)
    return chunk.unknown_count / n if n else 0.0


def save_vocabulary_bytes(vocab: Vocabulary) -> bytes:
    w = ByteWriter()
    w.raw(MAGIC)
    w.u8(VERSION)
    w.u32(vocab.size)
    w.u32(UNK_ID)
    w.f64(vocab.coverage)
    for tok in vocab.tokens:
        w.u16(len(tok))
        w.raw(tok)
    w.u32(len(vocab.merges))
    for left, right, result in vocab.merges:
        w.u32(left)
        w.u32(right)
        w.u32(result)
    return w.finish_with_hash()


def save_vocabulary(vocab: Vocabulary, path) -> int:
    data = save_vocabulary_bytes(vocab)
    atomic_write(path, data)
    vocab.content_hash = int.from_bytes(data[-4:], "little")
    return vocab.content_hash


def load_vocabulary_bytes(data: bytes) -> Vocabulary:
    body, stored = check_trailing_hash(data, "vocabulary file")
    r = ByteReader(body)
    if r.raw(4) != MAGIC:
        raise FormatError("not a vocabulary file (bad magic)")
    if r.u8() != VERSION:
        raise FormatError("unsupported vocabulary file version")
    size = r.u32()
    unk = r.u32()
    if unk != UNK_ID:
        raise FormatError("unsupported unknown-token id")
    coverage = r.f64()
    tokens = [r.raw(r.u16()) for _ in range(size)]
    merges = [(r.u32(), r.u32(), r.u32()) for _ in range(r.u32())]
    if not r.done():
        raise FormatError("trailing bytes after merge list")
    return Vocabulary(tokens, merges, coverage, content_hash=stored)


def load_vocabulary(path) -> Vocabulary:
    with open(path, "rb") as f:
        data = f.read()
    return load_vocabulary_bytes(data)
