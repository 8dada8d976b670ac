"""FSNS-lite: a small length-prefixed, CRC-checked record container.

Layout (all integers little-endian)::

    file    = b"FSNL" u16(version=1) record*
    record  = u32(payload length) u32(crc32 of payload) payload
    payload = u16(field count) field*
    field   = u16(key length) key(utf-8) u8(type) u32(value length) value

Type tags: 0 raw bytes, 1 list of i64, 2 UTF-8 string.

A record is exposed as an ordered ``dict`` mapping keys to ``bytes``,
``list[int]`` or ``str``; the value's Python type selects the tag.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Union

import numpy as np

MAGIC = b"FSNL"
VERSION = 1

TAG_BYTES, TAG_INTS, TAG_STR = 0, 1, 2

Value = Union[bytes, list, str]
Record = dict


class RecordError(ValueError):
    pass


class CorruptRecord(RecordError):
    pass


def encode_payload(fields: Record) -> bytes:
    if len(fields) > 0xFFFF:
        raise RecordError(f"too many fields: {len(fields)}")
    out = [struct.pack("<H", len(fields))]
    for key, value in fields.items():
        kb = key.encode("utf-8")
        if isinstance(value, (bytes, bytearray, memoryview)):
            tag, vb = TAG_BYTES, bytes(value)
        elif isinstance(value, str):
            tag, vb = TAG_STR, value.encode("utf-8")
        else:
            arr = np.asarray(value, dtype=np.int64).reshape(-1)
            tag, vb = TAG_INTS, arr.astype("<i8").tobytes()
        out.append(struct.pack("<H", len(kb)))
        out.append(kb)
        out.append(struct.pack("<BI", tag, len(vb)))
        out.append(vb)
    return b"".join(out)


def decode_payload(payload: bytes) -> Record:
    try:
        (count,) = struct.unpack_from("<H", payload, 0)
        pos = 2
        fields: Record = {}
        for _ in range(count):
            (klen,) = struct.unpack_from("<H", payload, pos)
            pos += 2
            key = payload[pos:pos + klen].decode("utf-8")
            pos += klen
            tag, vlen = struct.unpack_from("<BI", payload, pos)
            pos += 5
            vb = payload[pos:pos + vlen]
            if len(vb) != vlen:
                raise CorruptRecord(f"field {key!r} truncated")
            pos += vlen
            if tag == TAG_BYTES:
                fields[key] = bytes(vb)
            elif tag == TAG_STR:
                fields[key] = vb.decode("utf-8")
            elif tag == TAG_INTS:
                if vlen % 8:
                    raise CorruptRecord(f"field {key!r}: int list length {vlen} not a multiple of 8")
                fields[key] = np.frombuffer(vb, dtype="<i8").tolist()
            else:
                raise CorruptRecord(f"field {key!r}: unknown type tag {tag}")
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptRecord(f"malformed payload: {exc}") from exc
    if pos != len(payload):
        raise CorruptRecord(f"{len(payload) - pos} trailing bytes in payload")
    return fields


class RecordWriter:
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._fh: BinaryIO = open(self.path, "wb")
        self._fh.write(MAGIC + struct.pack("<H", VERSION))
        self.count = 0

    def write(self, fields: Record) -> None:
        payload = encode_payload(fields)
        self._fh.write(struct.pack("<II", len(payload), zlib.crc32(payload) & 0xFFFFFFFF))
        self._fh.write(payload)
        self.count += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "RecordWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_record_file(path: str | os.PathLike, records: Iterable[Record]) -> int:
    with RecordWriter(path) as w:
        for rec in records:
            w.write(rec)
        return w.count


def iter_record_file(path: str | os.PathLike) -> Iterator[Record]:
    """Stream records from ``path``, verifying every checksum."""
    with open(path, "rb") as fh:
        head = fh.read(6)
        if len(head) != 6 or head[:4] != MAGIC:
            raise RecordError(f"{path}: not an FSNS-lite file")
        (version,) = struct.unpack("<H", head[4:])
        if version != VERSION:
            raise RecordError(f"{path}: unsupported version {version}")
        index = 0
        while True:
            frame = fh.read(8)
            if not frame:
                return
            if len(frame) != 8:
                raise CorruptRecord(f"record {index}: truncated header")
            length, crc = struct.unpack("<II", frame)
            payload = fh.read(length)
            if len(payload) != length:
                raise CorruptRecord(f"record {index}: truncated payload")
            if zlib.crc32(payload) & 0xFFFFFFFF != crc:
                raise CorruptRecord(f"record {index}: CRC mismatch")
            try:
                fields = decode_payload(payload)
            except CorruptRecord as exc:
                raise CorruptRecord(f"record {index}: {exc}") from None
            yield fields
            index += 1
