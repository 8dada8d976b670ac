"""Synthetic multi-view street-name signs.

Each view is a tile showing the same sign with its own position jitter,
contrast and blur. Missing views are filled with uniform noise, as in the
real dataset. Names are wrapped onto at most three lines; a smaller
"distractor" line (district, number) can be drawn that is not part of the
truth text.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Iterator, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from ..glyphs import GLYPH_H, line_width, render_line
from ..rng import derive_seed
from ..textproc import Charset, encode_text, fsns_charset, title_case_fold
from .sign import TILE, VIEWS, SignExample

MAX_LINES = 3

STREET_TYPES = ["RUE", "AVENUE", "BOULEVARD", "PLACE", "IMPASSE", "ALLÉE", "CHEMIN", "QUAI", "ROUTE", "COURS"]
LINKERS = ["DE LA", "DU", "DES", "DE", "DE L'", "D'", "AUX", "SUR", "", "", ""]
PROPER = [
    "GARE", "ÉGLISE", "MAIRIE", "VICTOR HUGO", "JEAN JAURÈS", "PASTEUR", "LILAS", "MOULIN", "CHÂTEAU",
    "FONTAINE", "PONT", "MARCHÉ", "ÉCOLES", "GÉNÉRAL LECLERC", "FOCH", "PAIX", "RÉPUBLIQUE", "ROSIERS",
    "TILLEULS", "PRÉS", "ARTS", "CLOÎTRE", "HALLES", "PÉPINIÈRE", "VERDUN", "ANJOU", "ORMEAUX", "OUEST",
    "ÎLE", "ÉTANG", "ABBAYE", "AQUEDUC", "BOIS", "COLLINE", "PEUPLIERS", "CERISIERS", "SAULES", "VIGNES",
]
DISTRACTORS = ["75005", "PARIS 5E", "N 12", "ARRt 3", "CEDEX", "1892-1954", "13E", "NICE"]

MINI_WORDS = ["Rue", "Pin", "Gare", "Port", "Sol", "Sud", "Pont", "Riel", "Sira", "Pa", "Go", "Rio"]
MINI_LINKERS = ["de", "la", "du", "et"]


class StyleError(ValueError):
    pass


@dataclass(frozen=True)
class SignStyle:
    noise_std: float = 0.03
    blur_max: float = 0.8
    jitter: float = 1.0  # fraction of the free space used for per-view offsets
    contrast_min: float = 0.55
    distractor_prob: float = 0.3
    font_scale: int | None = None  # None picks the largest scale that fits

    def __post_init__(self):
        if self.font_scale is not None and self.font_scale < 1:
            raise StyleError(f"font_scale must be >= 1, got {self.font_scale}")
        if not 0 <= self.contrast_min <= 1 or self.noise_std < 0 or self.blur_max < 0:
            raise StyleError(f"degenerate style {self}")
        if not 0 <= self.distractor_prob <= 1 or not 0 <= self.jitter <= 1:
            raise StyleError(f"degenerate style {self}")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "SignStyle":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in values.items():
            if k not in kinds:
                continue
            if k == "font_scale":
                kw[k] = None if v in ("", "auto", "None") else int(v)
            else:
                kw[k] = float(v)
        return cls(**kw)

    def as_dict(self) -> dict:
        return asdict(self)


def wrap_words(text: str, max_width: int, scale: int) -> list[str] | None:
    """Greedy word wrap to lines of at most ``max_width`` pixels, or None if a word cannot fit."""
    lines: list[str] = []
    cur = ""
    for word in text.split(" "):
        if not word:
            continue
        trial = f"{cur} {word}" if cur else word
        if line_width(trial, scale) <= max_width:
            cur = trial
            continue
        if line_width(word, scale) > max_width:
            return None
        lines.append(cur)
        cur = word
    if cur:
        lines.append(cur)
    return lines


def _layout(text: str, inner_w: int, inner_h: int, style: SignStyle) -> tuple[list[str], int]:
    scales = [style.font_scale] if style.font_scale else range(max(1, inner_h // GLYPH_H), 0, -1)
    for scale in scales:
        lines = wrap_words(text, inner_w, scale)
        if lines is None or len(lines) > MAX_LINES:
            continue
        if len(lines) * (GLYPH_H + 1) * scale - scale <= inner_h:
            return lines, scale
    # fall back to one character per column slot at the smallest scale; text is clipped
    scale = style.font_scale or 1
    return (wrap_words(text, 10 ** 9, scale) or [text])[:MAX_LINES], scale


def _background(rng: np.random.Generator, tile: int) -> np.ndarray:
    coarse = rng.uniform(0.2, 0.8, (4, 4, 3))
    reps = -(-tile // 4)
    bg = np.kron(coarse, np.ones((reps, reps, 1)))[:tile, :tile]
    return gaussian_filter(bg, sigma=(tile / 8, tile / 8, 0))


def _render_view(rng: np.random.Generator, tile: int, lines: list[str], scale: int, palette, style: SignStyle,
                 distractor: str | None) -> np.ndarray:
    img = _background(rng, tile)
    plate, ink = palette
    line_h = (GLYPH_H + 1) * scale
    text_w = max(line_width(s, scale) for s in lines)
    text_h = len(lines) * line_h - scale
    dscale = max(1, scale - 1)
    d_h = (GLYPH_H + 1) * dscale if distractor else 0
    margin = max(1, scale)
    box_w = min(tile, text_w + 2 * margin)
    box_h = min(tile, text_h + d_h + 2 * margin)
    free_x, free_y = tile - box_w, tile - box_h
    x0 = int(round(free_x / 2 + (rng.uniform(-0.5, 0.5) * free_x * style.jitter)))
    y0 = int(round(free_y / 2 + (rng.uniform(-0.5, 0.5) * free_y * style.jitter)))
    x0, y0 = min(max(x0, 0), free_x), min(max(y0, 0), free_y)

    contrast = rng.uniform(style.contrast_min, 1.0)
    ink_v = plate + contrast * (ink - plate)
    img[y0:y0 + box_h, x0:x0 + box_w] = plate
    mask = np.zeros((tile, tile), dtype=bool)
    ty = y0 + margin
    for s in lines:
        bm = render_line(s, scale)
        lx = x0 + (box_w - bm.shape[1]) // 2
        _blit(mask, bm, ty, lx)
        ty += line_h
    if distractor:
        bm = render_line(distractor, dscale)
        _blit(mask, bm, ty, x0 + (box_w - bm.shape[1]) // 2)
    img[mask] = ink_v

    sigma = rng.uniform(0.0, style.blur_max)
    if sigma > 0.05:
        img = gaussian_filter(img, sigma=(sigma, sigma, 0))
    if style.noise_std > 0:
        img = img + rng.normal(0.0, style.noise_std, img.shape)
    return np.clip(img, 0.0, 1.0)


def _blit(mask: np.ndarray, bm: np.ndarray, y: int, x: int) -> None:
    h, w = mask.shape
    y1, x1 = max(y, 0), max(x, 0)
    y2, x2 = min(y + bm.shape[0], h), min(x + bm.shape[1], w)
    if y2 > y1 and x2 > x1:
        mask[y1:y2, x1:x2] |= bm[y1 - y:y2 - y, x1 - x:x2 - x]


_PALETTES = [
    (np.array([0.10, 0.20, 0.55]), np.array([0.95, 0.95, 0.95])),  # blue plate, white text
    (np.array([0.95, 0.95, 0.92]), np.array([0.05, 0.05, 0.05])),  # white plate, black text
    (np.array([0.95, 0.95, 0.92]), np.array([0.05, 0.35, 0.15])),  # white plate, green text
    (np.array([0.10, 0.10, 0.10]), np.array([0.95, 0.95, 0.95])),  # black plate, white text
]


def synth_sign(seed: int, name: str, n_views: int, style: SignStyle = SignStyle(), cs: Charset | None = None,
               tile: int = TILE, views: int = VIEWS, lat: float | None = None, lon: float | None = None) -> SignExample:
    """Render ``name`` on ``n_views`` of ``views`` tiles; the truth text is Title Case folded."""
    if not 1 <= n_views <= views:
        raise StyleError(f"n_views must be in 1..{views}, got {n_views}")
    if tile < GLYPH_H + 2:
        raise StyleError(f"tile size {tile} too small to draw text")
    cs = cs or fsns_charset()
    text = title_case_fold(" ".join(name.split()))
    label = encode_text(cs, text)
    rng = np.random.default_rng(derive_seed(seed, "synth_sign"))

    lines, scale = _layout(text, tile - 2 * max(1, tile // 30), tile - 2, style)
    palette = _PALETTES[rng.integers(len(_PALETTES))]
    distractor = None
    if rng.random() < style.distractor_prob and scale > 1:
        distractor = DISTRACTORS[rng.integers(len(DISTRACTORS))]
    tiles = [_render_view(rng, tile, lines, scale, palette, style, distractor) for _ in range(n_views)]
    tiles += [rng.uniform(0.0, 1.0, (tile, tile, 3)) for _ in range(views - n_views)]
    raster = np.concatenate(tiles, axis=1)
    pixels = np.round(raster * 255.0).astype(np.uint8)
    return SignExample(
        text=text,
        unpadded_class=list(label.unpadded),
        padded_class=list(label.padded),
        encoded=pixels.tobytes(),
        width=tile * views,
        height=tile,
        orig_width=tile * n_views,
        lat=lat,
        lon=lon,
        n_views=n_views,
    )


def random_street_name(rng: np.random.Generator) -> str:
    """An upper-case French-style street name, as it might be painted on a sign."""
    kind = STREET_TYPES[rng.integers(len(STREET_TYPES))]
    link = LINKERS[rng.integers(len(LINKERS))]
    proper = PROPER[rng.integers(len(PROPER))]
    if link.endswith("'"):
        return f"{kind} {link}{proper}"
    return " ".join(p for p in (kind, link, proper) if p)


def random_mini_name(rng: np.random.Generator, max_ids: int = 8) -> str:
    """One or two short words over the mini charset, at most ``max_ids`` characters."""
    while True:
        words = [MINI_WORDS[rng.integers(len(MINI_WORDS))] for _ in range(1 + int(rng.integers(2)))]
        if len(words) == 2 and rng.random() < 0.25:
            words.insert(1, MINI_LINKERS[rng.integers(len(MINI_LINKERS))])
        name = " ".join(words)
        if len(name) <= max_ids:
            return name


def synth_corpus(seed: int, count: int, preset: str = "full", style: SignStyle | None = None,
                 cs: Charset | None = None, tile: int = TILE, views: int = VIEWS,
                 region=(48.80, 2.25, 48.90, 2.42), signs_per_street: float = 3.0,
                 names: Sequence[str] | None = None) -> Iterator[SignExample]:
    """Geo-tagged signs scattered along synthetic streets inside ``region`` (lat0, lon0, lat1, lon1).

    Each street gets one name and several signs a few hundred metres apart,
    so the same truth string shows up at nearby locations.
    """
    rng = np.random.default_rng(derive_seed(seed, "synth_corpus"))
    style = style or SignStyle()
    lat0, lon0, lat1, lon1 = region
    made = 0
    street = 0
    while made < count:
        if names is not None:
            name = names[street % len(names)]
        elif preset == "mini":
            name = random_mini_name(rng)
        else:
            name = random_street_name(rng)
        lat, lon = rng.uniform(lat0, lat1), rng.uniform(lon0, lon1)
        heading = rng.uniform(0, 2 * np.pi)
        n_signs = 1 + int(rng.poisson(max(signs_per_street - 1, 0)))
        for _ in range(n_signs):
            if made >= count:
                break
            step = rng.uniform(50, 400) / 111_320.0
            lat += step * np.sin(heading)
            lon += step * np.cos(heading) / np.cos(np.radians(lat))
            n_views = int(rng.integers(1, views + 1))
            yield synth_sign(derive_seed(seed, f"sign:{made}"), name, n_views, style, cs, tile, views,
                             float(lat), float(lon))
            made += 1
        street += 1
