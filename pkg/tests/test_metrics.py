from __future__ import annotations

import math

import pytest

from l3tc.metrics import (adjusted_compression_ratio, bit_saving,
                          compression_ratio, gzip_compressed_size,
                          gzip_ratio, order0_bpb)


class TestRatios:
    def test_compression_ratio(self):
        assert compression_ratio(25, 100) == 0.25
        with pytest.raises(ValueError):
            compression_ratio(1, 0)

    def test_adjusted_ratio_published_large(self):
        # 16.23% of 1e9 bytes with 3.2M fp16 params -> 16.87%
        acr = adjusted_compression_ratio(162_300_000, 10 ** 9, 3_200_000)
        assert round(100 * acr, 2) == 16.87

    def test_adjusted_ratio_published_small(self):
        # 27.58% of 1e9 bytes with 0.8M fp16 params -> 27.74%
        acr = adjusted_compression_ratio(275_800_000, 10 ** 9, 800_000)
        assert round(100 * acr, 2) == 27.74

    def test_adjusted_charges_two_bytes_per_param(self):
        base = compression_ratio(500, 10_000)
        acr = adjusted_compression_ratio(500, 10_000, 100)
        assert acr == pytest.approx(base + 200 / 10_000)

    def test_bit_saving_published_anchor(self):
        # 1 - 16.87/32.26 = 47.7%, reported as 48%
        bs = bit_saving(0.1687, 0.3226)
        assert round(100 * bs, 1) == 47.7
        assert round(100 * bs) == 48

    def test_bit_saving_edges(self):
        assert bit_saving(0.25, 0.25) == 0.0
        assert bit_saving(0.5, 0.25) == -1.0
        with pytest.raises(ValueError):
            bit_saving(0.1, 0.0)


class TestGzip:
    def test_size_positive_and_smaller_on_redundant_input(self):
        data = b"abcdefgh" * 4000
        n = gzip_compressed_size(data)
        assert 0 < n < len(data)

    def test_ratio_consistent(self):
        data = b"squeeze me please " * 800
        assert gzip_ratio(data) == pytest.approx(
            gzip_compressed_size(data) / len(data))

    def test_round_trips_through_stdlib(self):
        import gzip
        data = b"check the container " * 100
        assert gzip.decompress(gzip.compress(data, 9)) == data


class TestEntropy:
    def test_empty(self):
        assert order0_bpb(b"") == 0.0

    def test_single_symbol(self):
        assert order0_bpb(b"aaaa") == 0.0

    def test_two_even_symbols(self):
        assert order0_bpb(b"abab") == pytest.approx(1.0)

    def test_uniform_bytes(self):
        assert order0_bpb(bytes(range(256))) == pytest.approx(8.0)

    def test_biased(self):
        # p = [3/4, 1/4]: H = 0.75*log2(4/3) + 0.25*2
        h = 0.75 * math.log2(4 / 3) + 0.25 * 2.0
        assert order0_bpb(b"aaab") == pytest.approx(h)
