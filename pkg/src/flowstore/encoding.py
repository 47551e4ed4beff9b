"""Canonical byte encodings for ground values and store payloads.

Every encoded node is tag(1) + length(8, big-endian) + content.  Integers are
8-byte big-endian two's complement so that equal-type payloads have equal
lengths; text is UTF-8; labels use their canonical text rendering; pairs
concatenate the encodings of both components.

The store payload bound into every ciphertext is
``encode(value) ++ encode(key) ++ version(8, big-endian)`` followed by the
integrity signatures, each length-prefixed.
"""

from __future__ import annotations

import base64
from typing import List, Tuple

from .labels import Label, LabelSyntaxError, parse_label
from .terms import UNIT, Ground, GroundPair, UnitType

TAG_UNIT = 0x00
TAG_BOOL = 0x01
TAG_INT = 0x02
TAG_TEXT = 0x03
TAG_LABEL = 0x04
TAG_PAIR = 0x05

_INT_MIN = -(1 << 63)
_INT_MAX = (1 << 63) - 1


class DecodeError(ValueError):
    pass


def u64(n: int) -> bytes:
    return n.to_bytes(8, "big")


def read_u64(data: bytes, pos: int) -> Tuple[int, int]:
    if pos + 8 > len(data):
        raise DecodeError("truncated length field")
    return int.from_bytes(data[pos:pos + 8], "big"), pos + 8


def encode_ground(v: Ground) -> bytes:
    if isinstance(v, UnitType):
        return _node(TAG_UNIT, b"")
    if isinstance(v, bool):
        return _node(TAG_BOOL, b"\x01" if v else b"\x00")
    if isinstance(v, int):
        if not _INT_MIN <= v <= _INT_MAX:
            raise ValueError(f"integer out of 64-bit range: {v}")
        return _node(TAG_INT, v.to_bytes(8, "big", signed=True))
    if isinstance(v, str):
        return _node(TAG_TEXT, v.encode("utf-8"))
    if isinstance(v, Label):
        return _node(TAG_LABEL, str(v).encode("utf-8"))
    if isinstance(v, GroundPair):
        return _node(TAG_PAIR, encode_ground(v.first) + encode_ground(v.second))
    raise TypeError(f"not a ground value: {v!r}")


def _node(tag: int, content: bytes) -> bytes:
    return bytes([tag]) + u64(len(content)) + content


def decode_ground(data: bytes) -> Ground:
    v, pos = _decode_at(data, 0)
    if pos != len(data):
        raise DecodeError("trailing bytes after ground value")
    return v


def _decode_at(data: bytes, pos: int) -> Tuple[Ground, int]:
    if pos >= len(data):
        raise DecodeError("truncated value")
    tag = data[pos]
    length, body = read_u64(data, pos + 1)
    end = body + length
    if end > len(data):
        raise DecodeError("content exceeds buffer")
    content = data[body:end]
    if tag == TAG_UNIT:
        if content:
            raise DecodeError("unit carries no content")
        return UNIT, end
    if tag == TAG_BOOL:
        if content not in (b"\x00", b"\x01"):
            raise DecodeError("bad boolean byte")
        return content == b"\x01", end
    if tag == TAG_INT:
        if length != 8:
            raise DecodeError("integer must be 8 bytes")
        return int.from_bytes(content, "big", signed=True), end
    if tag == TAG_TEXT:
        try:
            return content.decode("utf-8"), end
        except UnicodeDecodeError as exc:
            raise DecodeError("invalid UTF-8 text") from exc
    if tag == TAG_LABEL:
        try:
            return parse_label(content.decode("utf-8")), end
        except (UnicodeDecodeError, LabelSyntaxError) as exc:
            raise DecodeError(f"invalid label encoding: {exc}") from exc
    if tag == TAG_PAIR:
        first, mid = _decode_at(data, body)
        second, stop = _decode_at(data, mid)
        if stop != end:
            raise DecodeError("pair content length mismatch")
        return GroundPair(first, second), end
    raise DecodeError(f"unknown tag {tag:#x}")


def encode_payload(value: Ground, key: Ground, version: int) -> bytes:
    return encode_ground(value) + encode_ground(key) + u64(version)


def decode_payload(data: bytes) -> Tuple[Ground, Ground, int, int]:
    """Returns (value, key, version, end-offset of the payload prefix)."""
    value, pos = _decode_at(data, 0)
    key, pos = _decode_at(data, pos)
    version, pos = read_u64(data, pos)
    return value, key, version, pos


def append_signatures(payload: bytes, signatures: List[bytes]) -> bytes:
    parts = [payload]
    for sig in signatures:
        parts.append(u64(len(sig)))
        parts.append(sig)
    return b"".join(parts)


def split_signatures(blob: bytes, count: int) -> Tuple[bytes, List[bytes]]:
    """Split a decrypted blob into the payload prefix and `count` signatures."""
    try:
        _, _, _, pos = decode_payload(blob)
    except DecodeError:
        raise
    sigs: List[bytes] = []
    for _ in range(count):
        size, pos = read_u64(blob, pos)
        if pos + size > len(blob):
            raise DecodeError("truncated signature")
        sigs.append(blob[pos:pos + size])
        pos += size
    if pos != len(blob):
        raise DecodeError("trailing bytes after signatures")
    return blob[:_payload_end(blob)], sigs


def _payload_end(blob: bytes) -> int:
    _, _, _, pos = decode_payload(blob)
    return pos


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise DecodeError(f"invalid base64: {exc}") from exc
