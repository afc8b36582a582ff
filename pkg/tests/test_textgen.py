from __future__ import annotations

from l3tc import _textgen
from l3tc._textgen import desk_corpus, generate, trim_utf8


class TestTrim:
    def test_ascii_untouched(self):
        assert trim_utf8(b"hello") == b"hello"

    def test_cuts_partial_multibyte_tail(self):
        raw = "abc中".encode("utf-8")
        assert trim_utf8(raw[:-1]) == b"abc"
        assert trim_utf8(raw) == raw

    def test_empty(self):
        assert trim_utf8(b"") == b""


class TestGenerate:
    def test_deterministic(self):
        assert generate(5000, seed=3) == generate(5000, seed=3)
        assert generate(5000, seed=3) != generate(5000, seed=4)

    def test_reaches_requested_size(self):
        text = generate(20_000, seed=1)
        assert len(text.encode("utf-8")) >= 20_000

    def test_contains_rare_characters(self):
        # the corpus must exercise the outlier path now and then
        text = generate(300_000, seed=0)
        rare = sum(1 for ch in text if ord(ch) > 0x2000)
        assert rare > 0
        assert rare / len(text) < 0.01


class TestDeskCorpus:
    def test_exact_byte_budget_and_valid_utf8(self):
        data = desk_corpus(50_000, seed=2)
        assert isinstance(data, bytes)
        assert 50_000 - 4 <= len(data) <= 50_000
        data.decode("utf-8")

    def test_deterministic_across_calls(self):
        assert desk_corpus(30_000, seed=6) == desk_corpus(30_000, seed=6)

    def test_seeds_differ(self):
        assert desk_corpus(30_000, seed=6) != desk_corpus(30_000, seed=7)

    def test_cache_reuse_returns_prefix(self):
        long = desk_corpus(40_000, seed=8)
        short = desk_corpus(10_000, seed=8)
        assert long.startswith(short[: len(short) - 4])
