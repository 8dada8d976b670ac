"""The per-image example record and its mapping onto FSNS-lite fields."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from ..textproc import MAX_LABEL_LEN, Charset, encode_text
from .records import Record, RecordError, iter_record_file, write_record_file

TILE = 150
VIEWS = 4

_KNOWN = (
    "image/format", "image/encoded", "image/class", "image/unpadded_class",
    "image/width", "image/orig_width", "image/height", "image/text",
    "geo/lat", "geo/lon", "synth/n_views",
)


class SchemaError(RecordError):
    pass


@dataclass
class SignExample:
    text: str
    unpadded_class: list[int]
    padded_class: list[int]
    encoded: bytes
    width: int = TILE * VIEWS
    height: int = TILE
    orig_width: int = TILE * VIEWS
    format: str = "RAW"
    lat: float | None = None
    lon: float | None = None
    n_views: int | None = None
    extra: dict = field(default_factory=dict)

    def image(self) -> np.ndarray:
        """The raster as a height x width x 3 uint8 array."""
        if self.format != "RAW":
            raise SchemaError(f"unsupported image format {self.format!r}")
        return np.frombuffer(self.encoded, dtype=np.uint8).reshape(self.height, self.width, 3)

    def to_fields(self) -> Record:
        rec: Record = {
            "image/format": self.format,
            "image/encoded": self.encoded,
            "image/class": list(self.padded_class),
            "image/unpadded_class": list(self.unpadded_class),
            "image/width": [self.width],
            "image/orig_width": [self.orig_width],
            "image/height": [self.height],
            "image/text": self.text,
        }
        if self.lat is not None:
            rec["geo/lat"] = struct.pack("<d", self.lat)
        if self.lon is not None:
            rec["geo/lon"] = struct.pack("<d", self.lon)
        if self.n_views is not None:
            rec["synth/n_views"] = [self.n_views]
        rec.update(self.extra)
        return rec

    @classmethod
    def from_fields(cls, rec: Record) -> "SignExample":
        try:
            ex = cls(
                text=_as_str(rec["image/text"]),
                unpadded_class=list(rec["image/unpadded_class"]),
                padded_class=list(rec["image/class"]),
                encoded=bytes(rec["image/encoded"]),
                width=_scalar(rec["image/width"]),
                height=_scalar(rec["image/height"]),
                orig_width=_scalar(rec["image/orig_width"]),
                format=_as_str(rec["image/format"]),
            )
        except KeyError as exc:
            raise SchemaError(f"missing field {exc.args[0]!r}") from None
        try:
            if "geo/lat" in rec:
                ex.lat = struct.unpack("<d", rec["geo/lat"])[0]
            if "geo/lon" in rec:
                ex.lon = struct.unpack("<d", rec["geo/lon"])[0]
        except (struct.error, TypeError) as exc:
            raise SchemaError(f"bad coordinate field: {exc}") from None
        if "synth/n_views" in rec:
            ex.n_views = _scalar(rec["synth/n_views"])
        ex.extra = {k: v for k, v in rec.items() if k not in _KNOWN}
        return ex


def _as_str(v) -> str:
    return v.decode("utf-8") if isinstance(v, bytes) else v


def _scalar(v) -> int:
    if not isinstance(v, list) or len(v) != 1:
        raise SchemaError(f"expected a single int64, got {v!r}")
    return int(v[0])


def write_records(path: str | os.PathLike, examples: Iterable[SignExample]) -> int:
    return write_record_file(path, (ex.to_fields() for ex in examples))


def read_records(path: str | os.PathLike) -> Iterator[SignExample]:
    for i, rec in enumerate(iter_record_file(path)):
        try:
            yield SignExample.from_fields(rec)
        except SchemaError as exc:
            raise SchemaError(f"record {i}: {exc}") from None


def validate_example(ex: SignExample, cs: Charset | None = None, tile: int = TILE, views: int = VIEWS) -> list[str]:
    """Invariant violations of ``ex`` (empty when valid)."""
    problems = []
    if ex.width != tile * views or ex.height != tile:
        problems.append(f"size {ex.width}x{ex.height} != {tile * views}x{tile}")
    if ex.orig_width % tile or not 1 <= ex.orig_width // tile <= views:
        problems.append(f"orig_width {ex.orig_width} is not a whole number of views")
    if ex.n_views is not None and ex.n_views * tile != ex.orig_width:
        problems.append(f"orig_width {ex.orig_width} disagrees with {ex.n_views} views")
    if len(ex.encoded) != ex.width * ex.height * 3:
        problems.append(f"raster holds {len(ex.encoded)} bytes, expected {ex.width * ex.height * 3}")
    if len(ex.unpadded_class) > MAX_LABEL_LEN or len(ex.padded_class) != MAX_LABEL_LEN:
        problems.append("label lengths out of range")
    elif cs is not None:
        if list(ex.padded_class) != list(ex.unpadded_class) + [cs.null_id] * (MAX_LABEL_LEN - len(ex.unpadded_class)):
            problems.append("padded class ids are not the null-padded unpadded ids")
        try:
            if list(encode_text(cs, ex.text).unpadded) != list(ex.unpadded_class):
                problems.append("text does not encode to unpadded_class")
        except ValueError as exc:
            problems.append(f"text not encodable: {exc}")
    return problems
