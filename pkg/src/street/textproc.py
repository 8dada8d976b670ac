"""Charsets, label encoding and Title Case normalization of street names."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO

MAX_LABEL_LEN = 37
NULL_MARKER = "<nul>"

STOP_WORDS = frozenset(["au", "aux", "de", "des", "du", "et", "la", "le", "les", "sous", "sur"])
PREFIXES = ("d'", "l'")

# Accented letters of the FSNS inventory. Lower-case-only letters (ä, ï, œ, ü, ÿ)
# have no upper-case form in it and are left alone when capitalizing.
_ACCENT_PAIRS = "ÀàÂâÇçÉéÈèÊêËëÎîÔôÙùÛû"
_UPPER_TO_LOWER = {chr(c): chr(c + 32) for c in range(ord("A"), ord("Z") + 1)}
_UPPER_TO_LOWER.update({_ACCENT_PAIRS[i]: _ACCENT_PAIRS[i + 1] for i in range(0, len(_ACCENT_PAIRS), 2)})
_LOWER_TO_UPPER = {v: k for k, v in _UPPER_TO_LOWER.items()}

FSNS_ACCENTS = "àÀâÂäçÇéÉèÈêÊëËîÎïôÔœùÙûÛüÿ"
FSNS_PUNCT = "<=_-,;!?/.'\"()]\\&+"


class TextError(ValueError):
    pass


class CharsetError(TextError):
    pass


class UnencodableChar(TextError):
    pass


class TooLong(TextError):
    pass


@dataclass
class Charset:
    """Dense class-id <-> string table. Id 0 is the space, the last id is the CTC null."""

    canonical: list[str]
    aliases: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.canonical:
            raise CharsetError("charset is empty")
        if self.canonical[0] != " ":
            raise CharsetError("class 0 must be a single space")
        self._lookup: dict[str, int] = {}
        for i, s in enumerate(self.canonical[:-1]):
            if s in self._lookup:
                raise CharsetError(f"string {s!r} declared for ids {self._lookup[s]} and {i}")
            self._lookup[s] = i
        for s, i in self.aliases.items():
            if self._lookup.get(s, i) != i:
                raise CharsetError(f"alias {s!r} conflicts with id {self._lookup[s]}")
            self._lookup[s] = i
        self._max_len = max(len(s) for s in self._lookup)

    @property
    def size(self) -> int:
        return len(self.canonical)

    @property
    def null_id(self) -> int:
        return len(self.canonical) - 1

    @property
    def space_id(self) -> int:
        return 0

    def encode(self, text: str) -> list[int]:
        """Greedy longest-match tokenization, without the length limit."""
        ids: list[int] = []
        pos = 0
        while pos < len(text):
            for n in range(min(self._max_len, len(text) - pos), 0, -1):
                k = self._lookup.get(text[pos:pos + n])
                if k is not None:
                    ids.append(k)
                    pos += n
                    break
            else:
                raise UnencodableChar(f"{text[pos]!r} at position {pos} of {text!r} is not in the charset")
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self.canonical[k] for k in ids if k != self.null_id)

    def dumps(self) -> str:
        lines = [f"{i}\t{s}" for i, s in enumerate(self.canonical)]
        lines += [f"{i}\t{s}" for s, i in self.aliases.items()]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LabelSeq:
    unpadded: tuple[int, ...]
    padded: tuple[int, ...]


def load_charset(stream: TextIO | str) -> Charset:
    """Parse ``<id><TAB><string>`` lines.

    A repeated id declares an alias folding onto the first string given for
    it. The null class is the last id if its string is ``<nul>``; otherwise a
    null class is appended after the declared ids.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    first: dict[int, str] = {}
    aliases: dict[str, int] = {}
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\r\n")
        if not line:
            continue
        head, tab, text = line.partition("\t")
        if not tab or not head.strip().isdigit() or text == "":
            raise CharsetError(f"line {lineno}: expected '<id>\\t<string>', got {line!r}")
        k = int(head)
        if k in first:
            if text != first[k]:
                aliases[text] = k
        else:
            first[k] = text
    if not first:
        raise CharsetError("empty charset stream")
    n = max(first) + 1
    if len(first) != n:
        missing = sorted(set(range(n)) - set(first))
        raise CharsetError(f"class ids are not dense; missing {missing[:5]}")
    canonical = [first[i] for i in range(n)]
    if canonical[-1] != NULL_MARKER:
        canonical.append(NULL_MARKER)
    return Charset(canonical, aliases)


def encode_text(cs: Charset, text: str, max_len: int = MAX_LABEL_LEN) -> LabelSeq:
    ids = cs.encode(text)
    if len(ids) > max_len:
        raise TooLong(f"{text!r} encodes to {len(ids)} ids (max {max_len})")
    padded = ids + [cs.null_id] * (max_len - len(ids))
    return LabelSeq(tuple(ids), tuple(padded))


def fsns_charset() -> Charset:
    """A 109-class charset with the FSNS conventions (space first, null last).

    Holds the 108 characters listed for the FSNS truth text; curly and
    guillemet double quotes are aliases of '"'. The published 134-class
    table is not reproduced.
    """
    chars = [" "] + [str(d) for d in range(10)]
    chars += [chr(c) for c in range(ord("A"), ord("Z") + 1)]
    chars += [chr(c) for c in range(ord("a"), ord("z") + 1)]
    chars += list(FSNS_ACCENTS) + list(FSNS_PUNCT)
    aliases = {"“": chars.index('"'), "”": chars.index('"'), "«": chars.index('"'), "»": chars.index('"')}
    return Charset(chars + [NULL_MARKER], aliases)


def mini_charset(letters: str = "RuedlaGrPinSto") -> Charset:
    """Small charset for desk-scale models: space, ``letters``, null."""
    return Charset([" "] + list(letters) + [NULL_MARKER])


def _lower(s: str) -> str:
    return "".join(_UPPER_TO_LOWER.get(ch, ch) for ch in s)


def _capitalize(s: str) -> str:
    if not s:
        return s
    return _LOWER_TO_UPPER.get(s[0], s[0]) + _lower(s[1:])


def _fold_word(word: str) -> str:
    low = _lower(word)
    if low in STOP_WORDS:
        return low
    for prefix in PREFIXES:
        if low.startswith(prefix):
            return prefix + _capitalize(word[len(prefix):])
    return _capitalize(word)


def title_case_fold(text: str) -> str:
    """Map-style Title Case: stop words and d'/l' prefixes lower-case, other words capitalized."""
    return " ".join(_fold_word(w) for w in text.split(" "))


def fold_spaces(text: str) -> str:
    """Collapse runs of spaces to one and trim."""
    return " ".join(w for w in text.split(" ") if w)
