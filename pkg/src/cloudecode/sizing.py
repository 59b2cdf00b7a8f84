"""Word size estimation and the end-to-end decoder."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from cloudecode.config import PipelineConfig
from cloudecode.glyph import GlyphAtlas, build_atlas, classify
from cloudecode.raster import (ComponentRegion, RasterImage, detect_background, extract_components,
                               merge_diacritics)
from cloudecode.wordgraph import (HORIZONTAL, VERTICAL, SweepConfig, WeightParams, WordCluster,
                                  build_nodes, chain_to_word, check_partition, default_k,
                                  resolve_orientations, split_at_gaps, split_at_size_change,
                                  sweep_extract)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodedWord:
    text: str
    raw_size: float
    font_size_estimate: float
    bbox: tuple[int, int, int, int]
    orientation: str = HORIZONTAL

    @property
    def weight(self) -> float:
        return self.font_size_estimate

    def to_dict(self) -> dict:
        return {"text": self.text, "weight": self.weight, "raw_size": self.raw_size,
                "bbox": list(self.bbox), "orientation": self.orientation}


@dataclass(frozen=True)
class CloudData:
    """Decoded (word, weight) records, heaviest first."""

    words: tuple[DecodedWord, ...]
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        words = tuple(sorted(self.words, key=lambda w: (-w.weight, w.text, w.bbox)))
        object.__setattr__(self, "words", words)

    def to_json(self) -> dict:
        return {"words": [w.to_dict() for w in self.words], "meta": dict(self.source)}

    @classmethod
    def from_json(cls, data: dict) -> "CloudData":
        words = []
        for item in data["words"]:
            words.append(DecodedWord(str(item["text"]), float(item.get("raw_size", 0.0)),
                                     float(item["weight"]), tuple(item.get("bbox", (0, 0, 0, 0))),
                                     item.get("orientation", HORIZONTAL)))
        return cls(tuple(words), dict(data.get("meta", {})))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["text", "weight"])
        for w in self.words:
            writer.writerow([w.text, repr(w.weight)])
        return buf.getvalue()


def estimate_size(cluster: WordCluster) -> float:
    """Word bbox area divided by its letter count."""
    _, _, w, h = cluster.bbox
    return w * h / len(cluster.nodes)


def _calibration_words(alphabet: str) -> list[str]:
    # prefer lowercase runs: word clouds are mostly lowercase words
    letters = "".join(c for c in alphabet if c.islower()) or alphabet
    return [letters[i:i + 5] for i in range(0, len(letters), 5)]


@lru_cache(maxsize=32)
def calibration_factor(atlas: GlyphAtlas, reference_size: float = 48.0) -> float:
    """Font size per sqrt(raw size), measured on the atlas font at `reference_size`."""
    roots = []
    for word in _calibration_words(atlas.alphabet):
        boxes = [b for b in atlas.font.render(word, reference_size).letter_boxes if b is not None]
        x0 = min(b[0] for b in boxes)
        y0 = min(b[1] for b in boxes)
        x1 = max(b[0] + b[2] for b in boxes)
        y1 = max(b[1] + b[3] for b in boxes)
        roots.append(math.sqrt((x1 - x0) * (y1 - y0) / len(boxes)))
    return reference_size / float(np.mean(roots))


def calibrate_font_size(raw_size: float, atlas: GlyphAtlas, reference_size: float = 48.0) -> float:
    if raw_size <= 0:
        raise ValueError("raw_size must be > 0")
    return math.sqrt(raw_size) * calibration_factor(atlas, reference_size)


@lru_cache(maxsize=8)
def _cached_atlas(font: str, alphabet: str, ref_size: int) -> GlyphAtlas:
    return build_atlas(font, alphabet, ref_size)


def atlas_for(config: PipelineConfig) -> GlyphAtlas:
    return _cached_atlas(config.font, config.alphabet, config.ref_size)


@dataclass
class DecodeTrace:
    """Intermediate products of one decode, for debugging dumps."""

    background: tuple = ()
    components: list[ComponentRegion] = field(default_factory=list)
    clusters: list[WordCluster] = field(default_factory=list)
    sweep_events: list[dict] = field(default_factory=list)


def _weight_params(config: PipelineConfig, nodes) -> WeightParams:
    if config.weight_mode == "pairwise":
        base = WeightParams.pairwise(config.color_scale)
    else:
        base = WeightParams.from_nodes(nodes, config.color_scale)
    return WeightParams(config.x_scale or base.x_scale, config.y_scale or base.y_scale,
                        config.color_scale, config.size_scale or base.size_scale, base.relative)


def _frame_nodes(components, config, atlas, axis, quarter_turns):
    def accept(mark, body, union):
        # a real mark makes the body a better glyph, never a worse or unreadable one
        merged = classify(union, atlas, quarter_turns).confidence
        return merged >= config.confidence_floor and merged >= classify(body, atlas, quarter_turns).confidence

    merged = merge_diacritics(components, config.diacritic_max_gap, config.color_tolerance, axis=axis,
                              gap_ratio=config.diacritic_gap_ratio, mark_ratio=config.diacritic_mark_ratio,
                              accept=accept)
    # specks too small to be letters only survive as marks
    merged = [r for r in merged if r.pixel_count >= config.min_pixel_count]
    classes = [classify(r, atlas, quarter_turns) for r in merged]
    return build_nodes(merged, classes, config.confidence_floor)


def _split_clusters(clusters, atlas, tolerance, size_tolerance=None):
    def implied_size(node, orientation):
        if node.letter is None:
            return None
        extent = node.height if orientation == HORIZONTAL else node.width
        return extent / atlas.ink_height(node.letter)

    def expected_gap(a, b, size):
        return atlas.pair_gap(a.letter, b.letter) * size

    out = []
    for c in clusters:
        pieces = [c]
        if tolerance is not None and len(c.nodes) > 1:
            pieces = split_at_gaps(c, implied_size, expected_gap, tolerance)
        if size_tolerance is not None:
            pieces = [q for p in pieces for q in split_at_size_change(p, implied_size, size_tolerance)]
        out.extend(pieces)
    return out


def decode_clusters(image: RasterImage, config: PipelineConfig, atlas: GlyphAtlas,
                    trace: DecodeTrace | None = None) -> list[WordCluster]:
    """Letter extraction and word extraction: the image as a cover of word clusters."""
    background = detect_background(image)
    # keep every speck for now: the dot of a small i can be a single pixel
    components = extract_components(image, background, config.connectivity, config.color_tolerance, 1)
    if trace is not None:
        trace.background = tuple(background)
        trace.components = components
    letters = [c for c in components if c.pixel_count >= config.min_pixel_count]
    if not letters:
        return []
    emit: Callable[[dict], None] | None = trace.sweep_events.append if trace is not None else None

    h_nodes = _frame_nodes(components, config, atlas, "vertical", 0)
    h_cfg = SweepConfig(config.k or default_k(h_nodes, HORIZONTAL), config.tau, HORIZONTAL,
                        config.window_along, config.window_across)
    horizontal = sweep_extract(h_nodes, h_cfg, _weight_params(config, h_nodes), emit)
    vertical: list[WordCluster] = []
    fallback = []
    if config.vertical:
        # text set bottom-to-top: marks sit beside the stem, glyphs need a clockwise turn
        v_nodes = _frame_nodes(components, config, atlas, "horizontal", 1)
        v_cfg = SweepConfig(config.k or default_k(v_nodes, VERTICAL), config.tau, VERTICAL,
                            config.window_along, config.window_across)
        vertical = sweep_extract(v_nodes, v_cfg, _weight_params(config, v_nodes), emit)
        fallback = build_nodes(letters, [classify(c, atlas) for c in letters], config.confidence_floor)
    if config.split_tolerance is not None or config.size_split_tolerance is not None:
        horizontal = _split_clusters(horizontal, atlas, config.split_tolerance, config.size_split_tolerance)
        vertical = _split_clusters(vertical, atlas, config.split_tolerance, config.size_split_tolerance)
    required = [k for c in letters for k in c.parts]
    clusters = resolve_orientations(horizontal, vertical, fallback, required)
    used = {k for c in clusters for n in c.nodes for k in n.keys}
    check_partition(clusters, used | set(required))
    if trace is not None:
        trace.clusters = clusters
    return clusters


def decode_cloud(image: RasterImage, config: PipelineConfig | None = None,
                 trace: DecodeTrace | None = None, source: dict | None = None) -> CloudData:
    """Decode a word-cloud bitmap into (word, weight) records."""
    config = config or PipelineConfig()
    atlas = atlas_for(config)
    clusters = decode_clusters(image, config, atlas, trace)
    words = []
    for cluster in clusters:
        raw = estimate_size(cluster)
        x, y, w, h = cluster.bbox
        words.append(DecodedWord(chain_to_word(cluster), raw,
                                 calibrate_font_size(raw, atlas, config.calibration_size),
                                 (int(round(x)), int(round(y)), int(round(w)), int(round(h))),
                                 cluster.orientation))
    meta = {"config_hash": config.digest(), "width": image.width, "height": image.height}
    meta.update(source or {})
    logger.info("decoded %d words from %d clusters", len(words), len(clusters))
    return CloudData(tuple(words), meta)
