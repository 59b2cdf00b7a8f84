import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cloudecode.config import PipelineConfig
from cloudecode.evalgen import LayoutConfig, evaluate, random_entries, synthesize_cloud
from cloudecode.raster import Color, RasterImage
from cloudecode.sizing import (CloudData, DecodedWord, DecodeTrace, calibrate_font_size, calibration_factor,
                               decode_cloud, estimate_size)
from cloudecode.wordgraph import GlyphNode, WordCluster


def box_node(i, x0, y0, w, h):
    return GlyphNode(i, "a", 1.0, x0 + w / 2, y0 + h / 2, w, h, Color(0, 0, 0))


def test_estimate_size_examples():
    word = WordCluster(tuple(box_node(i, 20 * i, 0, 20, 20) for i in range(5)))
    assert word.bbox == (0, 0, 100, 20)
    assert estimate_size(word) == 400
    assert estimate_size(WordCluster((box_node(0, 3, 4, 12, 30),))) == 360


def single_word_size(text, size, **layout):
    image, _ = synthesize_cloud([(text, size)], LayoutConfig(width=600, height=300, **layout), 0)
    (word,) = decode_cloud(image).words
    assert word.text == text
    return word


def test_raw_size_grows_quadratically():
    ratio = single_word_size("cloud", 40).raw_size / single_word_size("cloud", 20).raw_size
    assert 3.5 <= ratio <= 4.5


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e6))
def test_calibration_is_sqrt_homogeneous(atlas, raw):
    assert calibrate_font_size(4 * raw, atlas) == pytest.approx(2 * calibrate_font_size(raw, atlas), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e6), st.floats(1e-3, 1e6))
def test_calibration_is_monotone(atlas, a, b):
    if a < b:
        assert calibrate_font_size(a, atlas) < calibrate_font_size(b, atlas)


def test_calibration_rejects_non_positive(atlas):
    with pytest.raises(ValueError):
        calibrate_font_size(0, atlas)


def test_calibration_factor_is_cached(atlas):
    assert calibration_factor(atlas) is calibration_factor(atlas)


@pytest.mark.parametrize("text", ["data", "cloud", "vision", "graph"])
def test_self_calibration_at_reference_size(text):
    assert single_word_size(text, 48).font_size_estimate == pytest.approx(48, rel=0.15)


def test_single_word_round_trip():
    word = single_word_size("data", 48)
    assert word.font_size_estimate == pytest.approx(48, rel=0.20)
    assert word.orientation == "horizontal"


def test_blank_image_decodes_to_nothing():
    data = decode_cloud(RasterImage.blank(64, 48))
    assert data.words == ()
    assert data.to_json()["words"] == []


def test_twenty_word_cloud_recovery():
    image, gt = synthesize_cloud(random_entries(np.random.default_rng(77), 20), LayoutConfig(p_vertical=0.2), 77)
    assert evaluate(decode_cloud(image), gt).recovery_rate >= 0.9


def test_scale_equivariance():
    entries = random_entries(np.random.default_rng(5), 8, (14, 36))
    small, gt1 = synthesize_cloud(entries, LayoutConfig(width=600, height=400, p_vertical=0.2), 5)
    big, gt2 = synthesize_cloud([(t, 2 * s) for t, s in entries], LayoutConfig(width=1200, height=800, p_vertical=0.2), 5)
    a = {w.text: w.font_size_estimate for w in decode_cloud(small).words}
    b = {w.text: w.font_size_estimate for w in decode_cloud(big).words}
    common = set(a) & set(b) & {t for t, _ in entries}
    assert len(common) >= 6
    for t in common:
        assert b[t] / a[t] == pytest.approx(2.0, rel=0.10), t


def test_decode_is_deterministic():
    image, _ = synthesize_cloud(random_entries(np.random.default_rng(9), 12), LayoutConfig(p_vertical=0.2), 9)
    first = json.dumps(decode_cloud(image).to_json(), sort_keys=True)
    assert json.dumps(decode_cloud(image).to_json(), sort_keys=True) == first


def test_cloud_data_invariants():
    image, _ = synthesize_cloud(random_entries(np.random.default_rng(3), 12), LayoutConfig(p_vertical=0.2), 3)
    data = decode_cloud(image, PipelineConfig(), source={"path": "x.png"})
    weights = [w.weight for w in data.words]
    assert weights == sorted(weights, reverse=True) and min(weights) > 0
    assert all(w.text and w.raw_size > 0 for w in data.words)
    assert data.source["path"] == "x.png" and data.source["config_hash"] == PipelineConfig().digest()
    assert CloudData.from_json(json.loads(json.dumps(data.to_json()))).words == data.words


def test_cloud_data_sorts_and_exports_csv():
    words = (DecodedWord("b", 1.0, 10.0, (0, 0, 1, 1)), DecodedWord("a", 1.0, 30.0, (0, 0, 1, 1)))
    data = CloudData(words)
    assert [w.text for w in data.words] == ["a", "b"]
    assert data.to_csv() == "text,weight\na,30.0\nb,10.0\n"


def test_trace_records_the_pipeline():
    image, _ = synthesize_cloud([("trace", 30), ("me", 20)], LayoutConfig(width=300, height=200), 1)
    trace = DecodeTrace()
    decode_cloud(image, trace=trace)
    assert trace.background == (255, 255, 255)
    assert trace.components and trace.clusters and trace.sweep_events


@pytest.mark.parametrize("seed", range(3))
def test_rank_order_survives_round_trip(seed):
    from cloudecode.evalgen import rank_agreement
    image, gt = synthesize_cloud(random_entries(np.random.default_rng(100 + seed), 20), LayoutConfig(p_vertical=0.2),
                                 seed)
    agree, total = rank_agreement(evaluate(decode_cloud(image), gt).pairs, gt, min_gap=4.0)
    assert agree / total >= 0.8
