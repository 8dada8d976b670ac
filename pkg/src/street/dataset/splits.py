"""Geographically separated subsets, truth-string dedup, encodability filter and OOV statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..textproc import PREFIXES, STOP_WORDS, Charset, encode_text
from .sign import SignExample

EARTH_RADIUS_M = 6_371_000.0
SUBSETS = ("train", "validation", "test", "private-test")
DEFAULT_FRACTIONS = {"train": 0.85, "validation": 0.05, "test": 0.05, "private-test": 0.05}


class SplitError(ValueError):
    pass


def geo_distance_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Equirectangular distance in metres."""
    phi = math.radians((lat1 + lat2) / 2)
    dx = math.radians(lon2 - lon1) * math.cos(phi)
    dy = math.radians(lat2 - lat1)
    return EARTH_RADIUS_M * math.hypot(dx, dy)


@dataclass
class SplitSet:
    subsets: dict[str, list[SignExample]]
    dropped_wall: int = 0
    dropped_unassigned: int = 0
    dropped_duplicate: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, name: str) -> list[SignExample]:
        return self.subsets[name]

    def names(self) -> list[str]:
        return list(self.subsets)


def make_splits(examples: Iterable[SignExample], fractions: dict[str, float] | None = None,
                wall_m: float = 100.0) -> SplitSet:
    """Partition examples into longitude strips separated by unused walls, then dedup truth strings.

    Strips are laid out west to east in the order of ``fractions``; boundaries
    sit at the cumulative example quantiles. Examples within ``wall_m / 2``
    (east-west) of a boundary, or beyond the last fraction, are dropped.
    Strip x-coordinates use the smallest longitude scale over the data, so
    the east-west gap alone already guarantees ``wall_m`` of separation.
    """
    fractions = dict(DEFAULT_FRACTIONS if fractions is None else fractions)
    if any(f < 0 for f in fractions.values()) or sum(fractions.values()) > 1 + 1e-9:
        raise SplitError(f"fractions must be non-negative and sum to <= 1: {fractions}")
    examples = list(examples)
    out = SplitSet({name: [] for name in fractions})
    if not examples:
        return out
    for i, ex in enumerate(examples):
        if ex.lat is None or ex.lon is None:
            raise SplitError(f"example {i} has no coordinates")

    max_abs_lat = max(abs(ex.lat) for ex in examples)
    scale = EARTH_RADIUS_M * math.cos(math.radians(max_abs_lat)) * math.pi / 180.0
    order = sorted(range(len(examples)), key=lambda i: examples[i].lon)
    xs = [examples[i].lon * scale for i in order]

    n = len(examples)
    bounds: list[float] = []
    acc = 0.0
    for f in list(fractions.values()):
        acc += f
        k = min(int(round(acc * n)), n)
        if k <= 0:
            bounds.append(xs[0] - wall_m)
        elif k >= n:
            bounds.append(xs[-1] + wall_m)
        else:
            bounds.append((xs[k - 1] + xs[k]) / 2)
    names = list(fractions)
    half = wall_m / 2
    for idx, x in zip(order, xs):
        slot = next((j for j, b in enumerate(bounds) if x < b), None)
        if slot is None:
            out.dropped_unassigned += 1
            continue
        lo = bounds[slot - 1] if slot > 0 else -math.inf
        # internal boundaries carry walls; the outer edge of the last strip does not need one
        near_hi = slot < len(bounds) - 1 and bounds[slot] - x < half
        near_lo = slot > 0 and x - lo < half
        if near_hi or near_lo:
            out.dropped_wall += 1
            continue
        out.subsets[names[slot]].append(examples[idx])

    seen: set[str] = set()
    for name in names:
        kept = [ex for ex in out.subsets[name] if ex.text not in seen]
        out.dropped_duplicate[name] = len(out.subsets[name]) - len(kept)
        out.subsets[name] = kept
        seen.update(ex.text for ex in kept)
    return out


def filter_encodable(examples: Iterable[SignExample], cs: Charset) -> tuple[list[SignExample], int]:
    """Keep examples whose truth encodes to at most 37 ids; returns (kept, number dropped)."""
    kept, dropped = [], 0
    for ex in examples:
        try:
            encode_text(cs, ex.text)
        except ValueError:
            dropped += 1
            continue
        kept.append(ex)
    return kept, dropped


def content_words(text: str, stop_words: Iterable[str] = STOP_WORDS) -> list[str]:
    """Space-delimited words with d'/l' prefixes split off and stop words removed."""
    stops = set(stop_words)
    words = []
    for w in text.split(" "):
        if not w:
            continue
        low = w.lower()
        for p in PREFIXES:
            if low.startswith(p):
                w = w[len(p):]
                break
        if w and w.lower() not in stops and w not in stops:
            words.append(w)
    return words


@dataclass
class SubsetStats:
    name: str
    words: int
    unique: int
    unique_oov: int
    total_oov: int

    @property
    def percent_oov(self) -> float:
        return 100.0 * self.total_oov / self.words if self.words else 0.0


def corpus_stats(split: SplitSet | dict[str, Sequence[SignExample]], stop_words: Iterable[str] = STOP_WORDS,
                 frequent_threshold: int | None = None) -> list[SubsetStats]:
    """Per-subset non-stop word counts and out-of-vocabulary counts relative to train.

    With ``frequent_threshold``, words seen more than that many times in train
    are also treated as stop words.
    """
    subsets = split.subsets if isinstance(split, SplitSet) else dict(split)
    if "train" not in subsets:
        raise SplitError("corpus statistics need a 'train' subset")
    stops = set(stop_words)
    if frequent_threshold is not None:
        freq = Counter(w for ex in subsets["train"] for w in content_words(ex.text, stops))
        stops |= {w for w, c in freq.items() if c > frequent_threshold}
    vocab = {w for ex in subsets["train"] for w in content_words(ex.text, stops)}
    report = []
    for name, exs in subsets.items():
        words = [w for ex in exs for w in content_words(ex.text, stops)]
        uniq = set(words)
        report.append(SubsetStats(
            name=name,
            words=len(words),
            unique=len(uniq),
            unique_oov=len(uniq - vocab),
            total_oov=sum(1 for w in words if w not in vocab),
        ))
    return report


def format_stats(report: Sequence[SubsetStats]) -> str:
    head = "subset\tnon_stop_words\tunique_words\tunique_oov\ttotal_oov\tpercent_oov"
    rows = [f"{s.name}\t{s.words}\t{s.unique}\t{s.unique_oov}\t{s.total_oov}\t{s.percent_oov:.1f}" for s in report]
    return "\n".join([head] + rows) + "\n"
