"""Length-prefixed binary containers used by the serialized artifacts.

Layout: 6-byte magic, ``u64`` field count, then for each field a ``u64``
name length, the UTF-8 name, a ``u64`` payload length and the payload.
Matrix payloads are fmat blobs; text payloads are UTF-8.
"""

from __future__ import annotations

import struct
from typing import Iterable

import numpy as np

from .errors import ParseError
from .matrixio import decode_fmat, encode_fmat

_U64 = struct.Struct("<Q")


def pack(magic: bytes, fields: Iterable[tuple[str, bytes]]) -> bytes:
    fields = list(fields)
    out = [magic, _U64.pack(len(fields))]
    for name, payload in fields:
        key = name.encode("utf-8")
        out += [_U64.pack(len(key)), key, _U64.pack(len(payload)), payload]
    return b"".join(out)


def unpack(magic: bytes, buf: bytes) -> dict[str, bytes]:
    if buf[: len(magic)] != magic:
        raise ParseError(f"bad magic: expected {magic!r}")
    pos = len(magic)

    def u64():
        nonlocal pos
        if pos + 8 > len(buf):
            raise ParseError("truncated container")
        (v,) = _U64.unpack_from(buf, pos)
        pos += 8
        return v

    def take(k):
        nonlocal pos
        if pos + k > len(buf):
            raise ParseError("truncated container")
        chunk = buf[pos : pos + k]
        pos += k
        return chunk

    fields = {}
    for _ in range(u64()):
        name = take(u64()).decode("utf-8")
        fields[name] = take(u64())
    if pos != len(buf):
        raise ParseError(f"{len(buf) - pos} trailing bytes in container")
    return fields


def mat(m) -> bytes:
    return encode_fmat(np.atleast_2d(np.asarray(m, dtype=np.float64)))


def unmat(payload: bytes) -> np.ndarray:
    m, end = decode_fmat(payload)
    if end != len(payload):
        raise ParseError("trailing bytes in matrix field")
    return m


def text(s: str) -> bytes:
    return s.encode("utf-8")


def untext(payload: bytes) -> str:
    return payload.decode("utf-8")
