from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l3tc import coder, rwkv
from l3tc._binio import CorruptionError
from l3tc.coder import (FrequencyTable, RangeDecoder, RangeEncoder, TOTAL,
                        quantize, quantize_rows)


def random_table(rng, v):
    p = rng.dirichlet(np.ones(v) * rng.uniform(0.05, 2.0))
    return quantize(p.astype(np.float32))


class TestQuantizer:
    def test_two_symbol_worked_example(self):
        # p = [0.5, 0.5], V=2: floor(0.5 * 65534) = 32767 each, deficit 2
        # goes to the first (argmax tie-break lowest index).
        t = quantize(np.array([0.5, 0.5], dtype=np.float32))
        assert t.freqs.tolist() == [32769, 32767]

    def test_deficit_goes_to_argmax(self):
        t = quantize(np.array([0.1, 0.7, 0.2], dtype=np.float32))
        f = t.freqs
        assert f.sum() == TOTAL
        scale = TOTAL - 3
        floors = [max(1, math.floor(p * scale)) for p in (0.1, 0.7, 0.2)]
        assert f[0] == floors[0]
        assert f[2] == floors[2]
        assert f[1] == TOTAL - floors[0] - floors[2]

    def test_tiny_probabilities_get_floor_one(self):
        p = np.zeros(50, dtype=np.float32)
        p[0] = 1.0
        f = quantize(p).freqs
        assert f.min() == 1
        assert f.sum() == TOTAL
        assert f[0] == TOTAL - 49

    def test_vocab_too_large_raises(self):
        p = np.full(TOTAL, 1.0 / TOTAL, dtype=np.float32)
        with pytest.raises(ValueError):
            quantize_rows(p[None, :])

    def test_uniform_256_near_even(self):
        p = np.full(256, 1.0 / 256, dtype=np.float32)
        f = quantize(p).freqs
        assert f.sum() == TOTAL
        assert f.min() >= 255  # floor((65536-256)/256) = 255
        assert f.max() <= 256 + 256  # argmax row absorbs the deficit

    @given(st.integers(2, 500), st.integers(0, 2 ** 32 - 1))
    def test_rows_always_valid(self, v, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(v) * 0.1).astype(np.float32)
        f = quantize_rows(p[None, :])[0]
        assert int(f.sum()) == TOTAL
        assert int(f.min()) >= 1

    def test_consume_matches_copy(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(40), size=8).astype(np.float32)
        a = quantize_rows(p.copy())
        b = quantize_rows(p.copy(), consume=True)
        assert np.array_equal(a, b)

    def test_peaked_row_batch(self):
        p = np.zeros((3, 100), dtype=np.float32)
        p[0, 7] = 1.0
        p[1] = 1.0 / 100
        p[2, :2] = 0.5
        f = quantize_rows(p)
        assert (f.sum(axis=1) == TOTAL).all()
        assert (f >= 1).all()


class TestFrequencyTable:
    def test_from_freqs_validates_sum(self):
        with pytest.raises(ValueError):
            FrequencyTable.from_freqs(np.array([1, 2, 3]))

    def test_from_freqs_validates_min(self):
        f = np.zeros(4, dtype=np.int64)
        f[0] = TOTAL
        with pytest.raises(ValueError):
            FrequencyTable.from_freqs(f)

    def test_cumulative(self):
        f = np.array([10, 20, TOTAL - 30], dtype=np.int64)
        t = FrequencyTable.from_freqs(f)
        assert t.cumulative.tolist() == [0, 10, 30, TOTAL]


class TestRangeCoder:
    def test_empty_stream(self):
        payload = RangeEncoder().finish()
        assert len(payload) <= 6
        RangeDecoder(payload)  # constructible; nothing to decode

    @pytest.mark.parametrize("seed", range(6))
    def test_round_trip_random(self, seed):
        rng = np.random.default_rng(seed)
        tables, syms = [], []
        enc = RangeEncoder()
        for _ in range(400):
            v = int(rng.integers(2, 260))
            t = random_table(rng, v)
            s = int(rng.integers(v))
            enc.encode_symbol(t, s)
            tables.append(t)
            syms.append(s)
        dec = RangeDecoder(enc.finish())
        assert [dec.decode_symbol(t) for t in tables] == syms

    def test_round_trip_skewed_and_last_symbol(self):
        # Exercise the remainder-absorbing final symbol repeatedly.
        v = 17
        p = np.full(v, 1e-6, dtype=np.float32)
        p[-1] = 1.0 - p[:-1].sum()
        t = quantize(p)
        enc = RangeEncoder()
        seq = [v - 1] * 2000 + [0] + [v - 1] * 2000
        for s in seq:
            enc.encode_symbol(t, s)
        dec = RangeDecoder(enc.finish())
        assert [dec.decode_symbol(t) for _ in seq] == seq

    def test_code_length_bound(self):
        # payload bits <= sum of -log2(quantized p) + 64 slack bits
        rng = np.random.default_rng(99)
        for _ in range(20):
            n = int(rng.integers(1, 500))
            v = int(rng.integers(2, 300))
            t = random_table(rng, v)
            syms = rng.integers(0, v, size=n)
            enc = RangeEncoder()
            h = 0.0
            for s in syms:
                enc.encode_symbol(t, int(s))
                h += -math.log2(t.freqs[int(s)] / TOTAL)
            bits = 8 * len(enc.finish())
            assert bits <= h + 64, (bits, h)

    def test_truncated_payload_raises(self):
        t = quantize(np.full(16, 1 / 16, dtype=np.float32))
        enc = RangeEncoder()
        for s in range(16):
            enc.encode_symbol(t, s)
        payload = enc.finish()
        dec = RangeDecoder(payload[:3])
        with pytest.raises(CorruptionError):
            for _ in range(200):
                dec.decode_symbol(t)

    def test_payload_is_plain_bytes(self):
        enc = RangeEncoder()
        enc.encode_symbol(quantize(np.array([0.9, 0.1], dtype=np.float32)), 0)
        assert isinstance(enc.finish(), bytes)


class TestBatchHelpers:
    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30)
    def test_encode_lows_matches_cumsum(self, seed):
        rng = np.random.default_rng(seed)
        b, v = int(rng.integers(1, 9)), int(rng.integers(2, 130))
        freqs = rng.integers(1, 100, size=(b, v)).astype(np.int64)
        syms = rng.integers(0, v, size=b)
        ref = np.array([freqs[i, :syms[i]].sum() for i in range(b)])
        got = coder._encode_lows(freqs, syms)
        assert np.array_equal(ref, got)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30)
    def test_block_search_matches_searchsorted(self, seed):
        rng = np.random.default_rng(seed)
        b, v = int(rng.integers(1, 7)), int(rng.integers(2, 400))
        rows = []
        for _ in range(b):
            p = rng.dirichlet(np.ones(v) * 0.2).astype(np.float32)
            rows.append(quantize_rows(p[None, :])[0])
        freqs = np.stack(rows)
        targets = rng.integers(0, TOTAL, size=b)
        syms, cum_lo, fr = coder._BlockSearch(freqs).lookup(targets)
        for i in range(b):
            cum = np.concatenate([[0], np.cumsum(freqs[i])])
            want = int(np.searchsorted(cum, targets[i], side="right")) - 1
            assert syms[i] == want
            assert cum_lo[i] == cum[want]
            assert fr[i] == freqs[i, want]


class TestSequences:
    def test_round_trip_mixed_lengths(self, tiny_model):
        rng = np.random.default_rng(1)
        v = tiny_model.config.vocab_size
        seqs = [rng.integers(0, v, size=n).tolist()
                for n in (0, 1, 2, 37, 200, 5)]
        payloads = coder.encode_sequences(tiny_model, seqs)
        assert len(payloads) == len(seqs)
        back = coder.decode_sequences(tiny_model, payloads,
                                      [len(s) for s in seqs])
        assert [list(map(int, x)) for x in back] == seqs

    def test_debug_table_hashes_match(self, tiny_model):
        rng = np.random.default_rng(2)
        v = tiny_model.config.vocab_size
        seqs = [rng.integers(0, v, size=n).tolist() for n in (50, 3, 80)]
        payloads, enc_hashes = coder.encode_sequences(tiny_model, seqs,
                                                      hash_tables=True)
        back, dec_hashes = coder.decode_sequences(tiny_model, payloads,
                                                  [len(s) for s in seqs],
                                                  hash_tables=True)
        assert [list(map(int, x)) for x in back] == seqs
        assert enc_hashes == dec_hashes
        assert [len(h) for h in enc_hashes] == [50, 3, 80]

    def test_out_of_range_token_raises(self, tiny_model):
        with pytest.raises(ValueError):
            coder.encode_sequences(tiny_model,
                                   [[tiny_model.config.vocab_size]])

    def test_chunk_wrappers(self, tiny_model):
        rng = np.random.default_rng(3)
        v = tiny_model.config.vocab_size
        toks = rng.integers(0, v, size=64).tolist()
        blob = coder.encode_chunk(toks, tiny_model)
        assert coder.decode_chunk(blob, tiny_model, 64) == toks

    def test_empty_batch(self, tiny_model):
        assert coder.encode_sequences(tiny_model, []) == []
        assert coder.decode_sequences(tiny_model, [], []) == []

    def test_corrupt_payload_never_silent_garbage(self, tiny_model):
        # Flipping coded bytes must either raise or change decoded ids;
        # the container layer then catches id/outlier/length mismatches.
        rng = np.random.default_rng(4)
        v = tiny_model.config.vocab_size
        seq = rng.integers(0, v, size=120).tolist()
        payload = coder.encode_chunk(seq, tiny_model)
        tampered = bytearray(payload)
        tampered[len(tampered) // 2] ^= 0x10
        try:
            out = coder.decode_chunk(bytes(tampered), tiny_model, 120)
            assert out != seq
        except (CorruptionError, ValueError):
            pass
