from dataclasses import fields

import pytest
from hypothesis import given, strategies as st

from roadauth.errors import DecodeError
from roadauth.messages import ADDR, BLOB, CID, DIGEST, ELEM, REGISTRY, TS, UINT, C3, M1, decode_message

KIND_STRATEGY = {
    ELEM: st.integers(0, 2**256 - 1),
    DIGEST: st.binary(min_size=32, max_size=32),
    CID: st.binary(min_size=16, max_size=16),
    TS: st.integers(0, 2**64 - 1),
    ADDR: st.integers(0, 2**128 - 1),
    BLOB: st.binary(max_size=64),
    UINT: st.integers(0, 2**300),
}


def message_strategy(cls):
    return st.builds(cls, *[KIND_STRATEGY[k] for k in cls.SCHEMA])


any_message = st.one_of([message_strategy(cls) for cls in REGISTRY.values()])


@given(any_message)
def test_roundtrip(msg):
    assert decode_message(msg.to_bytes()) == msg


@given(any_message, st.data())
def test_truncation_rejected(msg, data):
    raw = msg.to_bytes()
    cut = data.draw(st.integers(1, len(raw) - 2))
    # dropping a whole trailing field can leave valid framing, never a valid message
    with pytest.raises(DecodeError):
        decode_message(raw[:-cut])


@given(any_message, st.binary(min_size=1, max_size=8))
def test_trailing_bytes_rejected(msg, junk):
    with pytest.raises(DecodeError):
        decode_message(msg.to_bytes() + junk)


def test_header_checks():
    raw = M1(5, bytes(32), bytes(32), 7).to_bytes()
    with pytest.raises(DecodeError):
        decode_message(b"\x02" + raw[1:])
    with pytest.raises(DecodeError):
        decode_message(raw[:1] + b"\x7f" + raw[2:])
    with pytest.raises(DecodeError):
        decode_message(b"\x01")
    # reading an M1 body under another tag fails on the field count
    with pytest.raises(DecodeError):
        decode_message(raw[:1] + bytes([C3.TAG]) + raw[2:])


def test_element_width_follows_prime():
    msg = M1(200, bytes(32), bytes(32), 9)
    raw = msg.to_bytes(element_width=1)
    assert decode_message(raw, element_width=1) == msg
    with pytest.raises(DecodeError):
        decode_message(raw)


def test_fixed_widths_enforced_on_encode():
    with pytest.raises(ValueError):
        C3(b"short").to_bytes()


def test_layout():
    raw = C3(bytes(range(32))).to_bytes()
    assert raw[:2] == b"\x01\x23"
    assert raw[2:6] == b"\x00\x00\x00\x20"
    assert raw[6:] == bytes(range(32))


def test_every_tag_unique():
    assert len({cls.TAG for cls in REGISTRY.values()}) == len(REGISTRY)
    for cls in REGISTRY.values():
        assert len(fields(cls)) == len(cls.SCHEMA)
