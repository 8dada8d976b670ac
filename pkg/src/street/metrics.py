"""Word recall, word precision and sequence error over (truth, output) pairs.

Words are space-delimited and matched case-sensitively as multisets within
each pair; corpus figures are micro-averaged (summed matches over summed counts).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .textproc import fold_spaces

Pair = tuple[str, str]


def words(text: str) -> list[str]:
    return [w for w in text.split(" ") if w]


def _matches(truth: str, output: str) -> int:
    return sum((Counter(words(truth)) & Counter(words(output))).values())


def word_recall(pairs: Iterable[Pair]) -> float:
    pairs = list(pairs)
    total = sum(len(words(t)) for t, _ in pairs)
    if total == 0:
        # mirror of precision's degenerate case, so recall(pairs) == precision(swapped pairs)
        return 0.0 if any(words(o) for _, o in pairs) else 1.0
    return sum(_matches(t, o) for t, o in pairs) / total


def word_precision(pairs: Iterable[Pair]) -> float:
    pairs = list(pairs)
    total = sum(len(words(o)) for _, o in pairs)
    if total == 0:
        return 0.0 if any(words(t) for t, _ in pairs) else 1.0
    return sum(_matches(t, o) for t, o in pairs) / total


def sequence_error(pairs: Iterable[Pair]) -> float:
    pairs = list(pairs)
    if not pairs:
        return 0.0
    return sum(fold_spaces(t) != fold_spaces(o) for t, o in pairs) / len(pairs)


@dataclass(frozen=True)
class Report:
    count: int
    word_recall: float
    word_precision: float
    sequence_error: float

    def format(self) -> str:
        return (f"examples\t{self.count}\n"
                f"word_recall\t{100 * self.word_recall:.2f}\n"
                f"word_precision\t{100 * self.word_precision:.2f}\n"
                f"sequence_error\t{100 * self.sequence_error:.2f}\n")


def score(pairs: Sequence[Pair]) -> Report:
    pairs = list(pairs)
    return Report(len(pairs), word_recall(pairs), word_precision(pairs), sequence_error(pairs))
