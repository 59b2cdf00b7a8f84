"""Synthetic word clouds with known ground truth, and decoder scoring."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from cloudecode.errors import ConfigError, LayoutError
from cloudecode.font import BUILTIN_FONT_ID, load_font
from cloudecode.raster import Color, RasterImage
from cloudecode.sizing import CloudData, DecodedWord
from cloudecode.wordgraph import HORIZONTAL, VERTICAL

DARK2 = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")

VOCABULARY = (
    "data cloud word visual design chart graph value weight number table figure image pixel "
    "letter color shape model method result error system user study paper search query index "
    "network signal window screen layout spiral random vector matrix sample cluster segment "
    "region border corner center margin column header footer report summary analysis science "
    "history culture language market energy health nature travel season winter summer autumn "
    "spring garden forest river mountain ocean island desert valley bridge castle village "
    "city street house kitchen window school teacher student library museum theater music "
    "guitar piano violin rhythm melody poetry novel story author reader editor journal "
    "camera movie actor drama comedy festival holiday birthday family friend neighbor "
    "doctor nurse patient hospital medicine vaccine protein genome cell tissue brain memory "
    "sleep dream coffee bread cheese apple orange banana lemon cherry grape pepper onion "
    "tomato potato rice noodle butter sugar honey salt water juice tea milk "
    "engine motor wheel rocket planet galaxy comet orbit gravity quantum photon laser "
    "crystal metal copper silver gold iron carbon oxygen helium plastic paper glass "
    "market price budget profit invest stock trade export import tariff policy law justice "
    "vote senate council mayor public private secure privacy freedom equal health "
    "python kernel compiler parser syntax token stream buffer socket server client cache "
    "thread mutex queue stack heap graph tree node edge path cycle sort merge split"
).split()


def parse_color(value) -> Color:
    if isinstance(value, str):
        s = value.lstrip("#")
        if len(s) != 6:
            raise ConfigError(f"bad colour {value!r}")
        return Color(int(s[0:2], 16), int(s[2:4], 16), int(s[4:6], 16))
    return Color.of(value)


@dataclass(frozen=True)
class LayoutConfig:
    width: int = 1024
    height: int = 768
    background: tuple = (255, 255, 255)
    palette: tuple = DARK2
    min_contrast: int = 96
    p_vertical: float = 0.1
    padding: int = 2
    spiral_step: int = 2
    antialias: bool = False
    font: str = BUILTIN_FONT_ID

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("layout width and height must be >= 1")
        if not 0 <= self.p_vertical <= 1:
            raise ConfigError("p_vertical must be in [0, 1]")
        if self.padding < 2:
            raise ConfigError("padding must be >= 2")
        if self.spiral_step < 1:
            raise ConfigError("spiral_step must be >= 1")

    def colors(self) -> list[Color]:
        bg = parse_color(self.background)
        usable = [c for c in map(parse_color, self.palette)
                  if max(abs(a - b) for a, b in zip(c, bg)) >= self.min_contrast]
        if not usable:
            raise ConfigError("no palette colour has the required contrast against the background")
        return usable

    @classmethod
    def from_dict(cls, data: dict) -> "LayoutConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown layout keys: {', '.join(unknown)}")
        data = dict(data)
        for key in ("background", "palette"):
            if key in data:
                data[key] = tuple(data[key]) if key == "palette" else tuple(parse_color(data[key]))
        return cls(**data)


@dataclass(frozen=True)
class GroundTruthEntry:
    text: str
    font_size: float
    bbox: tuple[int, int, int, int]
    orientation: str
    color: Color
    letters: tuple[tuple[int, int, int, int], ...]

    def to_dict(self) -> dict:
        return {"text": self.text, "font_size": self.font_size, "bbox": list(self.bbox),
                "orientation": self.orientation, "color": list(self.color),
                "letters": [list(b) for b in self.letters]}


@dataclass(frozen=True)
class GroundTruth:
    entries: tuple[GroundTruthEntry, ...]
    background: Color
    width: int = 0
    height: int = 0

    def to_json(self) -> dict:
        return {"background": list(self.background), "width": self.width, "height": self.height,
                "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_json(cls, data: dict) -> "GroundTruth":
        entries = []
        for e in data["entries"]:
            entries.append(GroundTruthEntry(
                str(e["text"]), float(e["font_size"]), tuple(e.get("bbox", (0, 0, 0, 0))),
                e.get("orientation", HORIZONTAL), Color.of(e.get("color", (0, 0, 0))),
                tuple(tuple(b) for b in e.get("letters", ()))))
        return cls(tuple(entries), Color.of(data["background"]), int(data.get("width", 0)),
                   int(data.get("height", 0)))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def _spiral_ring(r: int) -> np.ndarray:
    """Offsets at Chebyshev radius r, clockwise from the top-left corner."""
    if r == 0:
        return np.zeros((1, 2), dtype=np.int64)
    span = np.arange(-r, r)
    top = np.stack([span, np.full_like(span, -r)], axis=1)
    right = np.stack([np.full_like(span, r), span], axis=1)
    bottom = np.stack([-span, np.full_like(span, r)], axis=1)
    left = np.stack([np.full_like(span, -r), -span], axis=1)
    return np.concatenate([top, right, bottom, left])


def _place(bw: int, bh: int, placed: list[tuple[int, int, int, int]], layout: LayoutConfig):
    cx, cy = (layout.width - bw) // 2, (layout.height - bh) // 2
    if bw > layout.width or bh > layout.height:
        return None
    rects = np.array(placed, dtype=np.int64).reshape(-1, 4)
    pad = layout.padding
    max_r = max(layout.width, layout.height) // layout.spiral_step + 1
    for r in range(max_r + 1):
        pts = _spiral_ring(r) * layout.spiral_step + (cx, cy)
        x, y = pts[:, 0], pts[:, 1]
        ok = (x >= 0) & (y >= 0) & (x + bw <= layout.width) & (y + bh <= layout.height)
        if rects.size:
            # overlap with padding against every placed rect
            hit = ((x[:, None] < rects[None, :, 0] + rects[None, :, 2] + pad)
                   & (x[:, None] + bw + pad > rects[None, :, 0])
                   & (y[:, None] < rects[None, :, 1] + rects[None, :, 3] + pad)
                   & (y[:, None] + bh + pad > rects[None, :, 1]))
            ok &= ~hit.any(axis=1)
        idx = np.flatnonzero(ok)
        if idx.size:
            return int(x[idx[0]]), int(y[idx[0]])
    return None


def synthesize_cloud(entries: Sequence[tuple[str, float]], layout: LayoutConfig | None = None,
                     seed: int = 0) -> tuple[RasterImage, GroundTruth]:
    """Render a word cloud from (text, font size) pairs.

    Words go largest first onto a rectangular spiral from the image centre;
    the first position clear of all placed words (plus padding) wins.
    """
    layout = layout or LayoutConfig()
    font = load_font(layout.font)
    colors = layout.colors()
    bg = parse_color(layout.background)
    rng = np.random.default_rng(seed)

    specs = []
    for i, (text, size) in enumerate(entries):
        if not text:
            raise ConfigError("word texts must be nonempty")
        missing = [c for c in text if not font.has_char(c)]
        if missing:
            raise ConfigError(f"word {text!r} uses characters outside the font: {''.join(missing)!r}")
        if not 8 <= size <= 128:
            raise ConfigError(f"font size {size} for {text!r} outside [8, 128]")
        vertical = bool(rng.random() < layout.p_vertical)
        color = colors[int(rng.integers(len(colors)))]
        specs.append((i, text, float(size), vertical, color))

    canvas = np.empty((layout.height, layout.width, 3), dtype=np.float64)
    canvas[...] = bg
    placed: list[tuple[int, int, int, int]] = []
    results: dict[int, GroundTruthEntry] = {}
    for i, text, size, vertical, color in sorted(specs, key=lambda s: (-s[2], s[0])):
        rendered = font.render(text, size, antialias=layout.antialias)
        if vertical:
            rendered = rendered.rotated()
        boxes = [b for b in rendered.letter_boxes if b is not None]
        x0 = min(b[0] for b in boxes)
        y0 = min(b[1] for b in boxes)
        x1 = max(b[0] + b[2] for b in boxes)
        y1 = max(b[1] + b[3] for b in boxes)
        cov = rendered.coverage[y0:y1, x0:x1]
        spot = _place(x1 - x0, y1 - y0, placed, layout)
        if spot is None:
            raise LayoutError(text)
        px, py = spot
        region = canvas[py:py + cov.shape[0], px:px + cov.shape[1]]
        c = cov[..., None]
        region[...] = np.where(c > 0, region * (1 - c) + np.asarray(color, dtype=float) * c, region)
        bbox = (px, py, x1 - x0, y1 - y0)
        placed.append(bbox)
        letters = tuple((b[0] - x0 + px, b[1] - y0 + py, b[2], b[3]) for b in boxes)
        results[i] = GroundTruthEntry(text, size, bbox, VERTICAL if vertical else HORIZONTAL, color, letters)

    image = RasterImage(np.rint(canvas).astype(np.uint8))
    gt = GroundTruth(tuple(results[i] for i in range(len(specs))), bg, layout.width, layout.height)
    return image, gt


def random_entries(rng: np.random.Generator, n: int, size_range: tuple[float, float] = (12, 72),
                   vocabulary: Sequence[str] = VOCABULARY) -> list[tuple[str, float]]:
    """n distinct vocabulary words with font sizes uniform in size_range (0.1 px resolution)."""
    vocab = sorted(set(vocabulary))
    if n > len(vocab):
        raise ValueError(f"vocabulary has only {len(vocab)} words")
    words = rng.choice(len(vocab), size=n, replace=False)
    sizes = rng.uniform(size_range[0], size_range[1], size=n)
    return [(vocab[int(w)], round(float(s), 1)) for w, s in zip(words, sizes)]


# --------------------------------------------------------------------------
# scoring


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_distance(a: str, b: str) -> float:
    a, b = a.lower(), b.lower()
    longest = max(len(a), len(b))
    return levenshtein(a, b) / longest if longest else 0.0


@dataclass(frozen=True)
class MatchedPair:
    pred_index: int
    gt_index: int
    predicted: str
    truth: str
    distance: int
    s_e: float
    s_gt: float

    @property
    def error(self) -> float:
        return self.s_e - self.s_gt


def match_words(predicted: Sequence[DecodedWord | tuple[str, float]], gt: GroundTruth,
                max_normalized: float = 0.5) -> list[MatchedPair]:
    """Greedy cheapest-first pairing by (edit distance, size gap); case-insensitive."""
    preds = [(w.text, w.weight) if isinstance(w, DecodedWord) else (str(w[0]), float(w[1])) for w in predicted]
    cands = []
    for i, (text, size) in enumerate(preds):
        for j, e in enumerate(gt.entries):
            if normalized_distance(text, e.text) > max_normalized:
                continue
            d = levenshtein(text.lower(), e.text.lower())
            cands.append((d, abs(size - e.font_size), i, j))
    cands.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs = []
    for d, _, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append(MatchedPair(i, j, preds[i][0], gt.entries[j].text, d, preds[i][1], gt.entries[j].font_size))
    return pairs


def rmse(pairs: Iterable[tuple[float, float]]) -> float:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("rmse of an empty pair list is undefined")
    return math.sqrt(sum((e - g) ** 2 for e, g in pairs) / len(pairs))


@dataclass
class EvalReport:
    rmse: float | None
    pairs: list[MatchedPair]
    unmatched_gt: list[str]
    spurious_pred: list[str]
    recovery_rate: float
    within_one_rate: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "rmse": self.rmse,
            "recovery_rate": self.recovery_rate,
            "within_one_rate": self.within_one_rate,
            "pairs": [{"predicted": p.predicted, "truth": p.truth, "edit_distance": p.distance,
                       "s_e": p.s_e, "s_gt": p.s_gt, "error": p.error} for p in self.pairs],
            "unmatched_gt": self.unmatched_gt,
            "spurious_pred": self.spurious_pred,
            **self.extra,
        }


def evaluate(decoded: CloudData, gt: GroundTruth) -> EvalReport:
    pairs = match_words(decoded.words, gt)
    n_gt = len(gt.entries)
    exact = sum(p.distance == 0 for p in pairs)
    near = sum(p.distance <= 1 for p in pairs)
    matched_g = {p.gt_index for p in pairs}
    matched_p = {p.pred_index for p in pairs}
    return EvalReport(
        rmse=rmse((p.s_e, p.s_gt) for p in pairs) if pairs else None,
        pairs=pairs,
        unmatched_gt=[e.text for j, e in enumerate(gt.entries) if j not in matched_g],
        spurious_pred=[w.text for i, w in enumerate(decoded.words) if i not in matched_p],
        recovery_rate=exact / n_gt if n_gt else 1.0,
        within_one_rate=near / n_gt if n_gt else 1.0,
    )


def rank_agreement(pairs: Sequence[MatchedPair], gt: GroundTruth, min_gap: float = 8.0) -> tuple[int, int]:
    """(agreeing, total) over ground-truth word pairs whose sizes differ by >= min_gap.

    A pair involving an unmatched ground-truth word counts as disagreeing.
    """
    est = {p.gt_index: p.s_e for p in pairs}
    agree = total = 0
    sizes = [e.font_size for e in gt.entries]
    for a in range(len(sizes)):
        for b in range(a + 1, len(sizes)):
            if abs(sizes[a] - sizes[b]) < min_gap:
                continue
            total += 1
            if a in est and b in est and (est[a] - est[b]) * (sizes[a] - sizes[b]) > 0:
                agree += 1
    return agree, total
