"""Sign records, the FSNS-lite container, synthetic signs and geographic splits."""

from .records import CorruptRecord, RecordError, RecordWriter, iter_record_file, write_record_file
from .sign import TILE, VIEWS, SchemaError, SignExample, read_records, validate_example, write_records
from .splits import (DEFAULT_FRACTIONS, SUBSETS, SplitError, SplitSet, corpus_stats, filter_encodable,
                     format_stats, geo_distance_m, make_splits)

__all__ = [
    "CorruptRecord", "RecordError", "RecordWriter", "iter_record_file", "write_record_file",
    "TILE", "VIEWS", "SchemaError", "SignExample", "read_records", "validate_example", "write_records",
    "DEFAULT_FRACTIONS", "SUBSETS", "SplitError", "SplitSet", "corpus_stats", "filter_encodable",
    "format_stats", "geo_distance_m", "make_splits", "SignStyle", "StyleError", "synth_corpus", "synth_sign",
]


def __getattr__(name):
    # the renderer pulls in scipy; load it only when asked for
    if name in ("SignStyle", "StyleError", "synth_corpus", "synth_sign"):
        from . import synth

        return getattr(synth, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
