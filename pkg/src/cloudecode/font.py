"""Fonts used both to build glyph atlases and to render synthetic clouds.

The built-in font is a hand-drawn bitmap face on a 10-unit em: cap and
ascender height 7 units, x-height 5, descender 2. It is scaled to any pixel
size by sampling unit cells at pixel centres, so every unit is at least one
pixel wide once the size reaches 10 px and the one-unit letter spacing never
collapses. TrueType files are supported through Pillow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from cloudecode.errors import ConfigError

BUILTIN_FONT_ID = "builtin"

EM_UNITS = 10
GLYPH_ROWS = 9
SPACING_UNITS = 1

# (top row, bitmap rows); "#" is ink
_GLYPHS: dict[str, tuple[int, str]] = {
    "A": (0, ".###. #...# #...# ##### #...# #...# #...#"),
    "B": (0, "####. #...# #...# ####. #...# #...# ####."),
    "C": (0, ".###. #...# #.... #.... #.... #...# .###."),
    "D": (0, "####. #...# #...# #...# #...# #...# ####."),
    "E": (0, "##### #.... #.... ####. #.... #.... #####"),
    "F": (0, "##### #.... #.... ####. #.... #.... #...."),
    "G": (0, ".###. #...# #.... #.### #...# #...# .###."),
    "H": (0, "#...# #...# #...# ##### #...# #...# #...#"),
    "I": (0, "### .#. .#. .#. .#. .#. ###"),
    "J": (0, "..### ...#. ...#. ...#. #..#. #..#. .##.."),
    "K": (0, "#...# #..#. #.#.. ##... #.#.. #..#. #...#"),
    "L": (0, "#.... #.... #.... #.... #.... #.... #####"),
    "M": (0, "#...# ##.## #.#.# #.#.# #...# #...# #...#"),
    "N": (0, "#...# #...# ##..# #.#.# #..## #...# #...#"),
    "O": (0, ".###. #...# #...# #...# #...# #...# .###."),
    "P": (0, "####. #...# #...# ####. #.... #.... #...."),
    "Q": (0, ".###. #...# #...# #...# #.#.# #..#. .##.#"),
    "R": (0, "####. #...# #...# ####. #.#.. #..#. #...#"),
    "S": (0, ".#### #.... #.... .###. ....# ....# ####."),
    "T": (0, "##### ..#.. ..#.. ..#.. ..#.. ..#.. ..#.."),
    "U": (0, "#...# #...# #...# #...# #...# #...# .###."),
    "V": (0, "#...# #...# #...# #...# #...# .#.#. ..#.."),
    "W": (0, "#...# #...# #...# #.#.# #.#.# #.#.# .#.#."),
    "X": (0, "#...# #...# .#.#. ..#.. .#.#. #...# #...#"),
    "Y": (0, "#...# #...# .#.#. ..#.. ..#.. ..#.. ..#.."),
    "Z": (0, "##### ....# ...#. ..#.. .#... #.... #####"),
    "a": (2, ".###. ....# .#### #...# .####"),
    "b": (0, "#.... #.... ####. #...# #...# #...# ####."),
    "c": (2, ".#### #.... #.... #.... .####"),
    "d": (0, "....# ....# .#### #...# #...# #...# .####"),
    "e": (2, ".###. #...# ##### #.... .####"),
    "f": (0, "..## .#.. #### .#.. .#.. .#.. .#.."),
    "g": (2, ".#### #...# #...# .#### ....# ....# .###."),
    "h": (0, "#.... #.... ####. #...# #...# #...# #...#"),
    "i": (0, ".#. ... ##. .#. .#. .#. ###"),
    "j": (0, "..# ... .## ..# ..# ..# ..# #.# .#."),
    "k": (0, "#... #... #..# #.#. ##.. #.#. #..#"),
    "l": (0, "##. .#. .#. .#. .#. .#. .##"),
    "m": (2, "##.#. #.#.# #.#.# #.#.# #.#.#"),
    "n": (2, "####. #...# #...# #...# #...#"),
    "o": (2, ".###. #...# #...# #...# .###."),
    "p": (2, "####. #...# #...# #...# ####. #.... #...."),
    "q": (2, ".#### #...# #...# #...# .#### ....# ....#"),
    "r": (2, "#.## ##.. #... #... #..."),
    "s": (2, ".#### #.... .###. ....# ####."),
    "t": (0, ".#.. .#.. #### .#.. .#.. .#.. ..##"),
    "u": (2, "#...# #...# #...# #...# .####"),
    "v": (2, "#...# #...# #...# .#.#. ..#.."),
    "w": (2, "#...# #...# #.#.# #.#.# .#.#."),
    "x": (2, "#...# .#.#. ..#.. .#.#. #...#"),
    "y": (2, "#...# #...# #...# #...# .#### ....# .###."),
    "z": (2, "##### ...#. ..#.. .#... #####"),
    "0": (0, ".###. #...# #..## #.#.# ##..# #...# .###."),
    "1": (0, "..# .## #.# ..# ..# ..# ..#"),
    "2": (0, ".###. #...# ....# ...#. ..#.. .#... #####"),
    "3": (0, "####. ....# ....# .###. ....# ....# ####."),
    "4": (0, "...#. ..##. .#.#. #..#. ##### ...#. ...#."),
    "5": (0, "##### #.... ####. ....# ....# #...# .###."),
    "6": (0, "..##. .#... #.... ####. #...# #...# .###."),
    "7": (0, "##### ....# ...#. ..#.. .#... .#... .#..."),
    "8": (0, ".###. #...# #...# .###. #...# #...# .###."),
    "9": (0, ".###. #...# #...# .#### ....# ...#. .##.."),
}

DEFAULT_ALPHABET = "".join(sorted(_GLYPHS, key=lambda c: (not c.isupper(), not c.islower(), c)))


@lru_cache(maxsize=None)
def glyph_bitmap(ch: str) -> np.ndarray:
    """Full-height (GLYPH_ROWS x width) boolean bitmap of a built-in glyph."""
    try:
        top, rows = _GLYPHS[ch]
    except KeyError:
        raise ConfigError(f"character {ch!r} is not in the built-in font") from None
    rows = rows.split()
    out = np.zeros((GLYPH_ROWS, len(rows[0])), dtype=bool)
    for r, line in enumerate(rows):
        out[top + r] = [c == "#" for c in line]
    out.flags.writeable = False
    return out


@dataclass
class RenderedText:
    """A rendered run of text, upright, in its own pixel frame.

    coverage: float array in [0, 1], one value per pixel.
    letter_boxes: per character, ink bbox (x, y, w, h) in that frame, or None
    for characters with no ink.
    """

    coverage: np.ndarray
    letter_boxes: list[tuple[int, int, int, int] | None]

    @property
    def mask(self) -> np.ndarray:
        return self.coverage >= 0.5

    def rotated(self) -> "RenderedText":
        """Rotate 90 degrees counter-clockwise (text then reads bottom to top)."""
        h, w = self.coverage.shape
        boxes = []
        for box in self.letter_boxes:
            if box is None:
                boxes.append(None)
                continue
            x, y, bw, bh = box
            # (x, y) -> (y, w - 1 - x) under a CCW quarter turn
            boxes.append((y, w - x - bw, bh, bw))
        return RenderedText(np.rot90(self.coverage, 1).copy(), boxes)


def _box_of(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    ys = np.flatnonzero(mask.any(axis=1))
    if ys.size == 0:
        return None
    xs = np.flatnonzero(mask.any(axis=0))
    return int(xs[0]), int(ys[0]), int(xs[-1] - xs[0] + 1), int(ys[-1] - ys[0] + 1)


class BitmapFont:
    """The built-in bitmap face."""

    font_id = BUILTIN_FONT_ID

    def has_char(self, ch: str) -> bool:
        return ch in _GLYPHS

    def render(self, text: str, size: float, offset: tuple[float, float] = (0.0, 0.0),
               antialias: bool = False) -> RenderedText:
        """Render `text` at `size` px per em.

        `offset` shifts the unit grid by a sub-pixel (dx, dy) phase; with
        `antialias` the pixel coverage is box-filtered from a 4x supersample.
        """
        if size <= 0:
            raise ValueError("font size must be positive")
        # per unit cell: index of the owning character, or -1
        cols = []
        for idx, ch in enumerate(text):
            bmp = glyph_bitmap(ch)
            if idx:
                cols.append(np.full((GLYPH_ROWS, SPACING_UNITS), -1, dtype=np.int32))
            cols.append(np.where(bmp, idx, -1).astype(np.int32))
        if not cols:
            return RenderedText(np.zeros((0, 0)), [])
        owner = np.concatenate(cols, axis=1)

        unit = size / EM_UNITS
        dx, dy = offset
        ss = 4 if antialias else 1
        h = math.ceil(GLYPH_ROWS * unit + dy)
        w = math.ceil(owner.shape[1] * unit + dx)
        ry = np.floor(((np.arange(h * ss) + 0.5) / ss - dy) / unit).astype(np.int64)
        rx = np.floor(((np.arange(w * ss) + 0.5) / ss - dx) / unit).astype(np.int64)
        oky = (ry >= 0) & (ry < owner.shape[0])
        okx = (rx >= 0) & (rx < owner.shape[1])
        grid = np.full((h * ss, w * ss), -1, dtype=np.int32)
        grid[np.ix_(oky, okx)] = owner[np.ix_(ry[oky], rx[okx])]

        ink = grid >= 0
        if ss > 1:
            coverage = ink.reshape(h, ss, w, ss).mean(axis=(1, 3))
            # a pixel belongs to a letter if any subsample of it does
            pix_owner = grid.reshape(h, ss, w, ss).max(axis=(1, 3))
        else:
            coverage = ink.astype(np.float64)
            pix_owner = grid
        boxes = [_box_of((pix_owner == i) & (coverage >= 0.5)) for i in range(len(text))]
        return RenderedText(coverage, boxes)


class TrueTypeFont:
    """A TrueType/OpenType face rendered through Pillow's FreeType binding."""

    def __init__(self, path: str | Path):
        from PIL import ImageFont

        self.path = str(path)
        self.font_id = f"ttf:{Path(path).name}"
        try:
            ImageFont.truetype(self.path, 16)
        except OSError as exc:
            raise ConfigError(f"cannot load font {self.path!r}: {exc}") from exc
        self._cache: dict[int, object] = {}

    def _face(self, size: float):
        from PIL import ImageFont

        key = max(1, int(round(size)))
        if key not in self._cache:
            self._cache[key] = ImageFont.truetype(self.path, key)
        return self._cache[key]

    def has_char(self, ch: str) -> bool:
        # Pillow exposes no cmap; a missing glyph renders as the .notdef box
        face = self._face(32)
        mask = face.getmask(ch)
        if mask.getbbox() is None:
            return False
        notdef = face.getmask("\U0010fffd")
        return bytes(mask) != bytes(notdef) or mask.size != notdef.size

    def render(self, text: str, size: float, offset: tuple[float, float] = (0.0, 0.0),
               antialias: bool = True) -> RenderedText:
        from PIL import Image, ImageDraw

        face = self._face(size)
        ascent, descent = face.getmetrics()
        spacing = max(1, int(round(size / EM_UNITS)))
        xs, x = [], 0.0
        for ch in text:
            xs.append(x)
            x += face.getlength(ch) + spacing
        w = int(math.ceil(x + offset[0])) + 2
        h = ascent + descent + 2
        coverage = np.zeros((h, w))
        boxes = []
        for ch, cx in zip(text, xs):
            layer = Image.new("L", (w, h), 0)
            ImageDraw.Draw(layer).text((cx + offset[0], 1 + offset[1]), ch, font=face, fill=255)
            arr = np.asarray(layer, dtype=np.float64) / 255.0
            if not antialias:
                arr = (arr >= 0.5).astype(np.float64)
            boxes.append(_box_of(arr >= 0.5))
            np.maximum(coverage, arr, out=coverage)
        return RenderedText(coverage, boxes)


def load_font(font_spec: str | Path):
    """Resolve a font spec: the built-in id or a path to a TrueType file."""
    if str(font_spec) == BUILTIN_FONT_ID:
        return BitmapFont()
    path = Path(font_spec)
    if not path.is_file():
        raise ConfigError(f"font {str(font_spec)!r} is neither {BUILTIN_FONT_ID!r} nor a readable file")
    return TrueTypeFont(path)
