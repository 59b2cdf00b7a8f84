"""Template-matching letter classifier over a rendered glyph atlas."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from cloudecode.errors import ConfigError
from cloudecode.font import BUILTIN_FONT_ID, DEFAULT_ALPHABET, load_font
from cloudecode.raster import ComponentRegion


class Classification(NamedTuple):
    letter: str
    confidence: float


@dataclass(frozen=True, eq=False)
class GlyphAtlas:
    """Binary templates, one per alphabet character, each ref_size x ref_size."""

    alphabet: str
    templates: np.ndarray  # (len(alphabet), ref_size, ref_size) bool
    font_id: str
    ref_size: int
    font: object = field(repr=False, default=None)

    def __post_init__(self):
        flat = self.templates.reshape(len(self.alphabet), -1)
        object.__setattr__(self, "_flat", flat.astype(np.float64))
        object.__setattr__(self, "_sizes", flat.sum(axis=1).astype(np.float64))

    def template(self, ch: str) -> np.ndarray:
        return self.templates[self.alphabet.index(ch)]

    def ink_height(self, ch: str) -> float:
        """Height of the rendered glyph in em units."""
        return _pair_metrics(self, ch, ch)[0]

    def pair_gap(self, a: str, b: str) -> float:
        """Blank run between glyph `a` and a following `b`, in em units."""
        return _pair_metrics(self, a, b)[2]


_METRIC_SIZE = 100.0


@lru_cache(maxsize=8192)
def _pair_metrics(atlas: GlyphAtlas, a: str, b: str) -> tuple[float, float, float]:
    if atlas.font is None:
        raise ValueError("atlas carries no font to measure")
    boxes = atlas.font.render(a + b, _METRIC_SIZE).letter_boxes
    ba, bb = boxes
    return ba[3] / _METRIC_SIZE, bb[3] / _METRIC_SIZE, (bb[0] - ba[0] - ba[2]) / _METRIC_SIZE


def _resample_matrix(n: int, t: int) -> np.ndarray:
    """(t x n) box-filter weights mapping n source cells onto t target cells."""
    edges = np.arange(t + 1) * (n / t)
    lo = np.maximum(edges[:-1, None], np.arange(n)[None, :])
    hi = np.minimum(edges[1:, None], np.arange(n)[None, :] + 1)
    return np.clip(hi - lo, 0, None) / (n / t)


def _crop(mask: np.ndarray) -> np.ndarray:
    ys = np.flatnonzero(mask.any(axis=1))
    xs = np.flatnonzero(mask.any(axis=0))
    if ys.size == 0:
        raise ValueError("cannot normalise an empty mask")
    return mask[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1]


def fit_mask(mask: np.ndarray, ref_size: int) -> np.ndarray:
    """Crop, scale aspect-preserving into a ref_size box (centred), binarise at 50%."""
    m = _crop(np.asarray(mask, dtype=bool))
    h, w = m.shape
    s = ref_size / max(h, w)
    th = min(ref_size, max(1, int(round(h * s))))
    tw = min(ref_size, max(1, int(round(w * s))))
    cov = _resample_matrix(h, th) @ m.astype(np.float64) @ _resample_matrix(w, tw).T
    out = np.zeros((ref_size, ref_size), dtype=bool)
    oy, ox = (ref_size - th) // 2, (ref_size - tw) // 2
    out[oy:oy + th, ox:ox + tw] = cov >= 0.5 - 1e-9
    return out


def normalize_mask(region: ComponentRegion | np.ndarray, ref_size: int, quarter_turns: int = 0) -> np.ndarray:
    """Region mask in atlas coordinates.

    `quarter_turns` rotates the mask clockwise first, which turns text set
    bottom-to-top back upright.
    """
    mask = region.mask if isinstance(region, ComponentRegion) else np.asarray(region, dtype=bool)
    if quarter_turns % 4:
        mask = np.rot90(mask, -quarter_turns)
    return fit_mask(mask, ref_size)


def build_atlas(font_spec: str = BUILTIN_FONT_ID, alphabet: str = DEFAULT_ALPHABET,
                ref_size: int = 32) -> GlyphAtlas:
    if not alphabet:
        raise ConfigError("alphabet must be nonempty")
    if len(set(alphabet)) != len(alphabet):
        raise ConfigError("alphabet has repeated characters")
    if ref_size < 8:
        raise ConfigError(f"ref_size must be >= 8, got {ref_size}")
    font = load_font(font_spec)
    # render well above the reference box so downscaling keeps thin strokes
    size = 3.0 * ref_size
    templates = []
    for ch in alphabet:
        if not font.has_char(ch):
            raise ConfigError(f"character {ch!r} missing from font {font.font_id}")
        mask = font.render(ch, size).mask
        if not mask.any():
            raise ConfigError(f"character {ch!r} renders no ink in font {font.font_id}")
        templates.append(fit_mask(mask, ref_size))
    return GlyphAtlas(alphabet, np.stack(templates), font.font_id, ref_size, font)


def match_scores(norm: np.ndarray, atlas: GlyphAtlas) -> np.ndarray:
    """Jaccard overlap of a normalised mask with every template."""
    m = norm.reshape(-1).astype(np.float64)
    inter = atlas._flat @ m
    union = atlas._sizes + m.sum() - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def classify(region: ComponentRegion | np.ndarray, atlas: GlyphAtlas, quarter_turns: int = 0) -> Classification:
    """Best-matching atlas letter; ties go to the earlier alphabet entry."""
    scores = match_scores(normalize_mask(region, atlas.ref_size, quarter_turns), atlas)
    best = int(np.argmax(scores))
    return Classification(atlas.alphabet[best], float(min(1.0, scores[best])))
