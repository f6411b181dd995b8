"""Wire messages.

Encoding: ``0x01`` version byte, one type-tag byte, then the fields framed by
:func:`roadauth.crypto.encode_fields`.  Group elements are fixed-width
big-endian (width taken from the prime), digests and masked values are 32
bytes, pseudo-identities 16 bytes, timestamps 8 bytes.  Decoding checks every
width, so any truncation, extension or reframing is a :class:`DecodeError`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields
from typing import ClassVar

from .crypto import DIGEST_SIZE, TS_SIZE, bytes_to_int, decode_fields, encode_fields, int_to_bytes
from .errors import DecodeError

VERSION = 0x01
CID_SIZE = 16
ADDR_SIZE = 16

# field kinds
ELEM = "elem"
DIGEST = "digest"
CID = "cid"
TS = "ts"
ADDR = "addr"
BLOB = "blob"
UINT = "uint"

_FIXED = {DIGEST: DIGEST_SIZE, CID: CID_SIZE, TS: TS_SIZE, ADDR: ADDR_SIZE}


class Message:
    TAG: ClassVar[int]
    SCHEMA: ClassVar[tuple[str, ...]]

    def to_bytes(self, element_width: int = 32) -> bytes:
        body = []
        for f, kind in zip(dc_fields(self), self.SCHEMA):
            value = getattr(self, f.name)
            if kind == ELEM:
                body.append(int_to_bytes(value, element_width))
            elif kind in (TS, ADDR):
                body.append(int_to_bytes(value, _FIXED[kind]))
            elif kind == UINT:
                body.append(int_to_bytes(value, max(1, (value.bit_length() + 7) // 8)))
            else:
                if kind in _FIXED and len(value) != _FIXED[kind]:
                    raise ValueError(f"{type(self).__name__}.{f.name} must be {_FIXED[kind]} bytes")
                body.append(bytes(value))
        return bytes([VERSION, self.TAG]) + encode_fields(body)


def _message(tag: int, *schema: str):
    def wrap(cls):
        cls = dataclass(frozen=True)(cls)
        cls.TAG = tag
        cls.SCHEMA = schema
        if len(dc_fields(cls)) != len(schema):
            raise TypeError(f"schema mismatch on {cls.__name__}")
        REGISTRY[tag] = cls
        return cls
    return wrap


REGISTRY: dict[int, type[Message]] = {}


# registration (secure channel)
@_message(0x01, BLOB, DIGEST, BLOB)
class RegReq(Message):
    id_i: bytes
    d0: bytes
    st: bytes


@_message(0x02, DIGEST, BLOB, UINT, UINT, UINT)
class RegResp(Message):
    c: bytes
    escrow: bytes
    p: int
    x: int
    p_s: int


# first-time login and key agreement
@_message(0x11, ELEM, DIGEST, DIGEST, TS)
class M1(Message):
    q_i1: int
    x_1: bytes
    x_2: bytes
    ts: int


@_message(0x12, ELEM, DIGEST, DIGEST, TS, ELEM, DIGEST, DIGEST)
class M2(Message):
    q_i1: int
    x_1: bytes
    x_2: bytes
    ts: int
    q_j1: int
    y_1: bytes
    y_2: bytes


@_message(0x13, DIGEST, DIGEST)
class M3(Message):
    z_i: bytes
    z_j: bytes


@_message(0x14, ELEM, DIGEST, CID, TS, DIGEST)
class M4(Message):
    q_j1: int
    r_j: bytes
    cid: bytes
    t: int
    r: bytes


@_message(0x15, DIGEST)
class M5(Message):
    r_i: bytes


# consequent login and key agreement
@_message(0x21, CID, TS, DIGEST, DIGEST, TS)
class C1(Message):
    cid: bytes
    t: int
    x_1: bytes
    x_2: bytes
    ts: int


@_message(0x22, DIGEST, DIGEST)
class C2(Message):
    y_1: bytes
    y_2: bytes


@_message(0x23, DIGEST)
class C3(Message):
    r_i: bytes


# address configuration and application traffic
@_message(0x31, CID, BLOB)
class AddrReq(Message):
    cid: bytes
    box: bytes


@_message(0x32, BLOB)
class AddrResp(Message):
    box: bytes


@_message(0x41, CID, BLOB)
class Beacon(Message):
    cid: bytes
    box: bytes


@_message(0x42, BLOB)
class Notice(Message):
    box: bytes


@_message(0x43, ADDR, BLOB)
class AddrConflict(Message):
    addr: int
    claimant: bytes


def decode_message(data: bytes, element_width: int = 32) -> Message:
    if len(data) < 2:
        raise DecodeError("message too short")
    if data[0] != VERSION:
        raise DecodeError(f"unsupported version {data[0]:#x}")
    cls = REGISTRY.get(data[1])
    if cls is None:
        raise DecodeError(f"unknown message tag {data[1]:#x}")
    raw = decode_fields(data[2:])
    if len(raw) != len(cls.SCHEMA):
        raise DecodeError(f"{cls.__name__} expects {len(cls.SCHEMA)} fields, got {len(raw)}")
    values = []
    for field_bytes, kind in zip(raw, cls.SCHEMA):
        if kind == ELEM:
            if len(field_bytes) != element_width:
                raise DecodeError("group element has wrong width")
            values.append(bytes_to_int(field_bytes))
        elif kind in _FIXED:
            if len(field_bytes) != _FIXED[kind]:
                raise DecodeError(f"{kind} field has wrong width")
            values.append(bytes_to_int(field_bytes) if kind in (TS, ADDR) else field_bytes)
        elif kind == UINT:
            # canonical: no leading zero byte unless the value is zero
            if not field_bytes or (len(field_bytes) > 1 and field_bytes[0] == 0):
                raise DecodeError("non-canonical integer")
            values.append(bytes_to_int(field_bytes))
        else:
            values.append(field_bytes)
    return cls(*values)
