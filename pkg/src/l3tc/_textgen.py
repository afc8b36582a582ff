"""Deterministic synthetic text corpus for fixtures, tests, and benchmarks.

Produces markup-heavy English-like text in the shape of an encyclopedia XML
dump: page skeletons with ids and timestamps, headings, wiki links,
entities, numbers, and a long Zipf tail of invented content words, plus a
thin sprinkle of non-Latin characters so character-coverage behavior is
exercised. Everything derives from numpy PCG64 streams, so a (seed, size)
pair always yields identical bytes on any platform.

`desk_corpus(n_bytes, seed)` is the entry point used by tests and the
benchmark CLI. Different seeds give disjoint same-distribution streams
(they share the lexicon, which is built from its own fixed seed). Results
are cached under .cache/ at the repository root. Setting the environment
variable L3TC_ENWIK8 to a real text dump routes `desk_corpus` to disjoint
slices of that file instead, for evaluating on real data.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

_LEXICON_SEED = 0xC0FFEE
_N_CONTENT_WORDS = 8000
_ZIPF_SHIFT = 2.7
_ZIPF_EXP = 1.05

# Per-word event rates during assembly; tuned so gzip -9 lands in the
# mid-thirties percent on multi-megabyte samples and the non-Latin tail
# stays near a tenth of a percent of characters.
_P_NUMBER = 0.030
_P_LINK = 0.035
_P_RARE = 0.0035
_P_QUOTE = 0.012
_P_BOLD = 0.008

_FUNCTION_WORDS = (
    "the of and in to a is was for on as by with from at it that his her "
    "their its he she they we you i this these those which who whom whose "
    "be been being are were am has have had do does did will would can "
    "could may might must shall should not no nor but or so yet if then "
    "than when where while because although though since until after "
    "before during under over between among through into onto upon about "
    "against within without all both each few more most other some such "
    "only own same very just also too now here there out up down off "
    "again further once first second new old great small large long early "
    "late many much one two three known well used called made part time "
    "year years world war city state government century north south east "
    "west").split()


def _build_lexicon() -> tuple[list[str], np.ndarray]:
    """Fixed word list plus Zipf probabilities, function words ranked first."""
    rng = np.random.default_rng(_LEXICON_SEED)
    onsets = ("b c d f g h j k l m n p r s t v w z br ch cl cr dr fl fr gr "
              "pl pr sc sh sl sp st str th tr").split()
    vowels = "a e i o u y ai ea ee ia io ou".split()
    codas = ("" + " b d g k l m n p r s t x ch ck ld nd ng nt rd rn rt ss "
             "st").split() + [""] * 8
    words: list[str] = []
    seen = set(_FUNCTION_WORDS)
    while len(words) < _N_CONTENT_WORDS:
        k = int(rng.integers(2, 4))
        parts = []
        for j in range(k):
            parts.append(onsets[int(rng.integers(len(onsets)))])
            parts.append(vowels[int(rng.integers(len(vowels)))])
        parts.append(codas[int(rng.integers(len(codas)))])
        w = "".join(parts)
        if 3 <= len(w) <= 14 and w not in seen:
            seen.add(w)
            words.append(w)
    lex = list(_FUNCTION_WORDS) + words
    ranks = np.arange(len(lex), dtype=np.float64)
    p = 1.0 / np.power(ranks + _ZIPF_SHIFT, _ZIPF_EXP)
    return lex, p / p.sum()


_LEX_CACHE: tuple[list[str], np.ndarray] | None = None


def _lexicon() -> tuple[list[str], np.ndarray]:
    global _LEX_CACHE
    if _LEX_CACHE is None:
        _LEX_CACHE = _build_lexicon()
    return _LEX_CACHE


def _rare_pool() -> list[str]:
    ranges = [
        (0x00C0, 0x0100), (0x0100, 0x0180), (0x0391, 0x03CA),
        (0x0410, 0x0450), (0x05D0, 0x05EB), (0x0627, 0x064B),
        (0x0905, 0x093A), (0x3041, 0x3097), (0x30A1, 0x30FB),
        (0x2200, 0x2300), (0x4E00, 0x5370),
    ]
    return [chr(c) for lo, hi in ranges for c in range(lo, hi)]


_RARE_CACHE: list[str] | None = None


def _rare() -> list[str]:
    global _RARE_CACHE
    if _RARE_CACHE is None:
        _RARE_CACHE = _rare_pool()
    return _RARE_CACHE


class _WordStream:
    """Buffered Zipf word sampler plus uniform helpers on one RNG."""

    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng
        lex, p = _lexicon()
        self.lex = lex
        self.p = p
        self.buf: np.ndarray = np.empty(0, dtype=np.int64)
        self.pos = 0

    def word(self) -> str:
        if self.pos >= len(self.buf):
            self.buf = self.rng.choice(len(self.lex), size=65536, p=self.p)
            self.pos = 0
        w = self.lex[int(self.buf[self.pos])]
        self.pos += 1
        return w

    def u(self) -> float:
        return float(self.rng.random())

    def i(self, lo: int, hi: int) -> int:
        return int(self.rng.integers(lo, hi))


def _title(ws: _WordStream) -> str:
    return " ".join(ws.word().capitalize() for _ in range(ws.i(1, 4)))


def _token(ws: _WordStream, rare: list[str]) -> str:
    u = ws.u()
    if u < _P_NUMBER:
        if ws.u() < 0.5:
            return str(ws.i(1800, 2100))
        return str(ws.i(1, 10 ** ws.i(1, 5)))
    if u < _P_NUMBER + _P_LINK:
        if ws.u() < 0.2:
            return f"[[{ws.word()}|{ws.word()}]]"
        return f"[[{ws.word()}]]"
    if u < _P_NUMBER + _P_LINK + _P_RARE:
        n = 1 if ws.u() < 0.8 else 2
        return "".join(rare[ws.i(0, len(rare))] for _ in range(n))
    if u < _P_NUMBER + _P_LINK + _P_RARE + _P_BOLD:
        return f"'''{ws.word()}'''"
    return ws.word()


def _sentence(ws: _WordStream, rare: list[str]) -> str:
    n = ws.i(6, 19)
    toks = []
    for j in range(n):
        t = _token(ws, rare)
        if j == 0:
            t = t[:1].upper() + t[1:]
        elif ws.u() < 0.07 and toks:
            toks[-1] += ","
        toks.append(t)
    body = " ".join(toks)
    if ws.u() < _P_QUOTE:
        body += " &quot;" + ws.word() + " " + ws.word() + "&quot;"
    return body + "."


def _paragraph(ws: _WordStream, rare: list[str]) -> str:
    return " ".join(_sentence(ws, rare) for _ in range(ws.i(2, 7)))


def _article(ws: _WordStream, rare: list[str], page_id: int) -> str:
    parts = [
        "  <page>\n",
        f"    <title>{_title(ws)}</title>\n",
        "    <ns>0</ns>\n",
        f"    <id>{page_id}</id>\n",
        "    <revision>\n",
        f"      <id>{ws.i(10 ** 6, 10 ** 8)}</id>\n",
        f"      <timestamp>{ws.i(2001, 2007)}-{ws.i(1, 13):02d}-"
        f"{ws.i(1, 29):02d}T{ws.i(0, 24):02d}:{ws.i(0, 60):02d}:"
        f"{ws.i(0, 60):02d}Z</timestamp>\n",
        "      <contributor>\n",
        f"        <username>{ws.word().capitalize()}{ws.i(1, 999)}"
        "</username>\n",
        f"        <id>{ws.i(100, 10 ** 6)}</id>\n",
        "      </contributor>\n",
        f"      <comment>{ws.word()} {ws.word()}</comment>\n",
        "      <text xml:space=\"preserve\">",
    ]
    for k in range(ws.i(2, 9)):
        if k > 0 and ws.u() < 0.3:
            parts.append(f"\n\n== {_title(ws)} ==")
        parts.append("\n\n" + _paragraph(ws, rare))
    parts.append("</text>\n    </revision>\n  </page>\n")
    return "".join(parts)


def generate(n_bytes: int, seed: int = 0) -> str:
    """Synthetic text whose UTF-8 form is at least ``n_bytes`` long."""
    rng = np.random.default_rng([seed, 0x7E57])
    ws = _WordStream(rng)
    rare = _rare()
    parts: list[str] = ["<mediawiki xml:lang=\"en\">\n"]
    total = len(parts[0])
    page_id = ws.i(1000, 9999)
    while total < n_bytes + 64:
        art = _article(ws, rare, page_id)
        page_id += ws.i(1, 9)
        parts.append(art)
        # chars undercount multi-byte glyphs; correct with a small margin
        total += len(art)
    text = "".join(parts)
    data = text.encode("utf-8")
    while len(data) < n_bytes + 16:
        art = _article(ws, rare, page_id)
        page_id += ws.i(1, 9)
        text += art
        data += art.encode("utf-8")
    return text


def trim_utf8(data: bytes) -> bytes:
    """Drop a trailing incomplete UTF-8 sequence, if any (at most 3 bytes)."""
    for back in range(1, 5):
        if back > len(data):
            break
        b = data[-back]
        if b < 0x80:
            break
        if b >= 0xC0:  # lead byte of a multi-byte sequence
            if _seq_len(b) > back:
                data = data[:-back]
            break
    return data


def _seq_len(lead: int) -> int:
    if lead >= 0xF0:
        return 4
    if lead >= 0xE0:
        return 3
    if lead >= 0xC0:
        return 2
    return 1


def _cache_dir() -> Path:
    root = Path(__file__).resolve().parents[2] / ".cache"
    try:
        root.mkdir(parents=True, exist_ok=True)
        return root
    except OSError:
        import tempfile
        return Path(tempfile.gettempdir())


def desk_corpus(n_bytes: int, seed: int = 0) -> bytes:
    """Exactly ``n_bytes`` (give or take a trimmed partial character) of
    deterministic corpus text as UTF-8 bytes.

    With L3TC_ENWIK8 set to a readable file, slices that file instead:
    seed k reads from offset 16 MiB * k, re-encoded as clean UTF-8.
    """
    env = os.environ.get("L3TC_ENWIK8")
    if env and os.path.isfile(env):
        with open(env, "rb") as f:
            f.seek((seed & 0xFF) * (16 << 20))
            raw = f.read(n_bytes + (4 << 10))
        text = raw.decode("utf-8", errors="ignore")
        return trim_utf8(text.encode("utf-8")[:n_bytes])
    cache = _cache_dir() / f"corpus-s{seed}.txt"
    data = b""
    if cache.is_file():
        data = cache.read_bytes()
    if len(data) < n_bytes:
        data = generate(n_bytes, seed).encode("utf-8")
        try:
            tmp = cache.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, cache)
        except OSError:
            pass
    return trim_utf8(data[:n_bytes])
