from __future__ import annotations

import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from l3tc._binio import (ByteReader, ByteWriter, FormatError,
                         HashMismatchError, atomic_write, check_trailing_hash,
                         fnv1a)


def test_fnv1a_published_vectors():
    assert fnv1a(b"") == 0x811C9DC5
    assert fnv1a(b"a") == 0xE40C292C
    assert fnv1a(b"foobar") == 0xBF9CF968


def test_writer_reader_round_trip():
    w = ByteWriter()
    w.u8(7)
    w.u16(65535)
    w.u32(123456789)
    w.u64(1 << 60)
    w.f64(0.999)
    w.raw(b"abc")
    data = w.finish_with_hash()

    body, stored = check_trailing_hash(data, "test blob")
    assert stored == fnv1a(body)
    r = ByteReader(body)
    assert r.u8() == 7
    assert r.u16() == 65535
    assert r.u32() == 123456789
    assert r.u64() == 1 << 60
    assert r.f64() == 0.999
    assert r.raw(3) == b"abc"
    assert r.done()


def test_reader_truncation_raises():
    r = ByteReader(b"\x01\x02")
    r.u8()
    with pytest.raises(FormatError):
        r.u32()


def test_trailer_too_short():
    with pytest.raises(FormatError):
        check_trailing_hash(b"abc", "blob")


def test_trailer_mismatch():
    data = ByteWriter().finish_with_hash()
    bad = data[:-1] + bytes([data[-1] ^ 1])
    with pytest.raises(HashMismatchError):
        check_trailing_hash(bad, "blob")


def test_body_flip_detected():
    w = ByteWriter()
    w.raw(b"hello world")
    data = w.finish_with_hash()
    bad = bytes([data[0] ^ 0x40]) + data[1:]
    with pytest.raises(HashMismatchError):
        check_trailing_hash(bad, "blob")


@given(st.binary(max_size=300))
def test_trailer_round_trip_any_payload(payload):
    w = ByteWriter()
    w.raw(payload)
    body, _ = check_trailing_hash(w.finish_with_hash(), "blob")
    assert body == payload


def test_atomic_write(tmp_path):
    target = tmp_path / "out.bin"
    atomic_write(target, b"first")
    atomic_write(target, b"second")
    assert target.read_bytes() == b"second"
    leftovers = [p for p in tmp_path.iterdir() if p.name != "out.bin"]
    assert leftovers == []


def test_hash_trailer_is_little_endian():
    w = ByteWriter()
    w.raw(b"xyz")
    data = w.finish_with_hash()
    assert struct.unpack("<I", data[-4:])[0] == fnv1a(b"xyz")
