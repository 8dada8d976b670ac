"""Built-in 5x7 bitmap font used by the synthetic sign renderer.

Accented letters are composed from a base glyph plus a mark drawn over the
top row (or the bottom row for the cedilla).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

GLYPH_W, GLYPH_H = 5, 7

_FONT = {
    " ": ".....|.....|.....|.....|.....|.....|.....",
    "0": ".###.|#...#|#..##|#.#.#|##..#|#...#|.###.",
    "1": "..#..|.##..|..#..|..#..|..#..|..#..|.###.",
    "2": ".###.|#...#|....#|...#.|..#..|.#...|#####",
    "3": "#####|...#.|..#..|...#.|....#|#...#|.###.",
    "4": "...#.|..##.|.#.#.|#..#.|#####|...#.|...#.",
    "5": "#####|#....|####.|....#|....#|#...#|.###.",
    "6": "..##.|.#...|#....|####.|#...#|#...#|.###.",
    "7": "#####|....#|...#.|..#..|.#...|.#...|.#...",
    "8": ".###.|#...#|#...#|.###.|#...#|#...#|.###.",
    "9": ".###.|#...#|#...#|.####|....#|...#.|.##..",
    "A": ".###.|#...#|#...#|#####|#...#|#...#|#...#",
    "B": "####.|#...#|#...#|####.|#...#|#...#|####.",
    "C": ".###.|#...#|#....|#....|#....|#...#|.###.",
    "D": "###..|#..#.|#...#|#...#|#...#|#..#.|###..",
    "E": "#####|#....|#....|####.|#....|#....|#####",
    "F": "#####|#....|#....|####.|#....|#....|#....",
    "G": ".###.|#...#|#....|#.###|#...#|#...#|.####",
    "H": "#...#|#...#|#...#|#####|#...#|#...#|#...#",
    "I": ".###.|..#..|..#..|..#..|..#..|..#..|.###.",
    "J": "..###|...#.|...#.|...#.|...#.|#..#.|.##..",
    "K": "#...#|#..#.|#.#..|##...|#.#..|#..#.|#...#",
    "L": "#....|#....|#....|#....|#....|#....|#####",
    "M": "#...#|##.##|#.#.#|#.#.#|#...#|#...#|#...#",
    "N": "#...#|#...#|##..#|#.#.#|#..##|#...#|#...#",
    "O": ".###.|#...#|#...#|#...#|#...#|#...#|.###.",
    "P": "####.|#...#|#...#|####.|#....|#....|#....",
    "Q": ".###.|#...#|#...#|#...#|#.#.#|#..#.|.##.#",
    "R": "####.|#...#|#...#|####.|#.#..|#..#.|#...#",
    "S": ".####|#....|#....|.###.|....#|....#|####.",
    "T": "#####|..#..|..#..|..#..|..#..|..#..|..#..",
    "U": "#...#|#...#|#...#|#...#|#...#|#...#|.###.",
    "V": "#...#|#...#|#...#|#...#|#...#|.#.#.|..#..",
    "W": "#...#|#...#|#...#|#.#.#|#.#.#|#.#.#|.#.#.",
    "X": "#...#|#...#|.#.#.|..#..|.#.#.|#...#|#...#",
    "Y": "#...#|#...#|.#.#.|..#..|..#..|..#..|..#..",
    "Z": "#####|....#|...#.|..#..|.#...|#....|#####",
    "a": ".....|.....|.###.|....#|.####|#...#|.####",
    "b": "#....|#....|#.##.|##..#|#...#|#...#|####.",
    "c": ".....|.....|.###.|#....|#....|#...#|.###.",
    "d": "....#|....#|.##.#|#..##|#...#|#...#|.####",
    "e": ".....|.....|.###.|#...#|#####|#....|.###.",
    "f": "..##.|.#..#|.#...|###..|.#...|.#...|.#...",
    "g": ".....|.####|#...#|#...#|.####|....#|.###.",
    "h": "#....|#....|#.##.|##..#|#...#|#...#|#...#",
    "i": "..#..|.....|.##..|..#..|..#..|..#..|.###.",
    "j": "...#.|.....|..##.|...#.|...#.|#..#.|.##..",
    "k": "#....|#....|#..#.|#.#..|##...|#.#..|#..#.",
    "l": ".##..|..#..|..#..|..#..|..#..|..#..|.###.",
    "m": ".....|.....|##.#.|#.#.#|#.#.#|#...#|#...#",
    "n": ".....|.....|#.##.|##..#|#...#|#...#|#...#",
    "o": ".....|.....|.###.|#...#|#...#|#...#|.###.",
    "p": ".....|.....|####.|#...#|####.|#....|#....",
    "q": ".....|.....|.##.#|#..##|.####|....#|....#",
    "r": ".....|.....|#.##.|##..#|#....|#....|#....",
    "s": ".....|.....|.###.|#....|.###.|....#|####.",
    "t": ".#...|.#...|###..|.#...|.#...|.#..#|..##.",
    "u": ".....|.....|#...#|#...#|#...#|#..##|.##.#",
    "v": ".....|.....|#...#|#...#|#...#|.#.#.|..#..",
    "w": ".....|.....|#...#|#...#|#.#.#|#.#.#|.#.#.",
    "x": ".....|.....|#...#|.#.#.|..#..|.#.#.|#...#",
    "y": ".....|.....|#...#|#...#|.####|....#|.###.",
    "z": ".....|.....|#####|...#.|..#..|.#...|#####",
    "œ": ".....|.....|.#.#.|#.#.#|#.##.|#.#..|.#.##",
    "<": "...#.|..#..|.#...|#....|.#...|..#..|...#.",
    "=": ".....|.....|#####|.....|#####|.....|.....",
    "_": ".....|.....|.....|.....|.....|.....|#####",
    "-": ".....|.....|.....|#####|.....|.....|.....",
    ",": ".....|.....|.....|.....|.##..|..#..|.#...",
    ";": ".....|.##..|.##..|.....|.##..|..#..|.#...",
    "!": "..#..|..#..|..#..|..#..|..#..|.....|..#..",
    "?": ".###.|#...#|....#|...#.|..#..|.....|..#..",
    "/": ".....|....#|...#.|..#..|.#...|#....|.....",
    ".": ".....|.....|.....|.....|.....|.##..|.##..",
    "'": ".##..|..#..|.#...|.....|.....|.....|.....",
    '"': ".#.#.|.#.#.|.#.#.|.....|.....|.....|.....",
    "(": "...#.|..#..|.#...|.#...|.#...|..#..|...#.",
    ")": ".#...|..#..|...#.|...#.|...#.|..#..|.#...",
    "[": ".###.|.#...|.#...|.#...|.#...|.#...|.###.",
    "]": ".###.|...#.|...#.|...#.|...#.|...#.|.###.",
    "\\": ".....|#....|.#...|..#..|...#.|....#|.....",
    "&": ".##..|#..#.|#.#..|.#...|#.#.#|#..#.|.##.#",
    "+": ".....|..#..|..#..|#####|..#..|..#..|.....",
    ":": ".....|.##..|.##..|.....|.##..|.##..|.....",
}

_MARKS = {
    "grave": ".#...",
    "acute": "...#.",
    "circ": ".#.#.",
    "diaer": "#...#",
}

_ACCENTED = {
    "à": ("a", "grave"), "À": ("A", "grave"),
    "â": ("a", "circ"), "Â": ("A", "circ"),
    "ä": ("a", "diaer"),
    "é": ("e", "acute"), "É": ("E", "acute"),
    "è": ("e", "grave"), "È": ("E", "grave"),
    "ê": ("e", "circ"), "Ê": ("E", "circ"),
    "ë": ("e", "diaer"), "Ë": ("E", "diaer"),
    "î": ("i", "circ"), "Î": ("I", "circ"),
    "ï": ("i", "diaer"),
    "ô": ("o", "circ"), "Ô": ("O", "circ"),
    "ù": ("u", "grave"), "Ù": ("U", "grave"),
    "û": ("u", "circ"), "Û": ("U", "circ"),
    "ü": ("u", "diaer"),
    "ÿ": ("y", "diaer"),
}


def _parse(rows: str) -> np.ndarray:
    return np.array([[ch == "#" for ch in row] for row in rows.split("|")], dtype=bool)


@lru_cache(maxsize=None)
def glyph(ch: str) -> np.ndarray:
    """7x5 boolean bitmap for ``ch``; unknown characters render as a filled box outline."""
    if ch in _FONT:
        return _parse(_FONT[ch])
    if ch in _ACCENTED:
        base, mark = _ACCENTED[ch]
        g = _parse(_FONT[base]).copy()
        g[0] = _parse(_MARKS[mark])[0]
        if base == "i":
            g[1] = False
        return g
    if ch in "çÇ":
        g = _parse(_FONT["c" if ch == "ç" else "C"]).copy()
        g[-1] = _parse("..##.")[0]
        return g
    if ch in "“”«»":
        return glyph('"')
    box = np.zeros((GLYPH_H, GLYPH_W), dtype=bool)
    box[0, :] = box[-1, :] = box[:, 0] = box[:, -1] = True
    return box


def has_glyph(ch: str) -> bool:
    return ch in _FONT or ch in _ACCENTED or ch in "çÇ“”«»"


def render_line(text: str, scale: int = 1, spacing: int = 1) -> np.ndarray:
    """Boolean bitmap of one text line, ``7*scale`` rows tall."""
    if scale < 1:
        raise ValueError(f"glyph scale must be >= 1, got {scale}")
    if not text:
        return np.zeros((GLYPH_H * scale, 0), dtype=bool)
    cols = []
    gap = np.zeros((GLYPH_H, spacing), dtype=bool)
    for i, ch in enumerate(text):
        if i:
            cols.append(gap)
        cols.append(glyph(ch))
    line = np.concatenate(cols, axis=1)
    return np.kron(line, np.ones((scale, scale), dtype=bool))


def line_width(text: str, scale: int = 1, spacing: int = 1) -> int:
    if not text:
        return 0
    return (len(text) * GLYPH_W + (len(text) - 1) * spacing) * scale
