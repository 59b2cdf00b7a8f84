import io
import itertools
import json
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cloudecode.errors import ConfigError, LayoutError
from cloudecode.evalgen import (GroundTruth, GroundTruthEntry, LayoutConfig, evaluate, levenshtein, match_words,
                                normalized_distance, parse_color, random_entries, rank_agreement, rmse,
                                synthesize_cloud)
from cloudecode.raster import Color, save_image
from cloudecode.sizing import CloudData, DecodedWord


def gt_of(words):
    return GroundTruth(tuple(GroundTruthEntry(t, float(s), (0, 0, 1, 1), "horizontal", Color(0, 0, 0), ())
                             for t, s in words), Color(255, 255, 255))


def decoded_of(words):
    return CloudData(tuple(DecodedWord(t, 1.0, float(s), (0, 0, 1, 1)) for t, s in words))


# rmse


def oracle_rmse(pairs):
    e = np.array([p[0] for p in pairs], dtype=np.float64)
    g = np.array([p[1] for p in pairs], dtype=np.float64)
    return float(np.sqrt(np.mean((e - g) ** 2)))


pair_lists = st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=50)


@settings(max_examples=100, deadline=None)
@given(pair_lists)
def test_rmse_matches_oracle(pairs):
    got = rmse(pairs)
    assert abs(got - oracle_rmse(pairs)) <= 1e-12 * max(1.0, got)


tenths = st.integers(-10000, 10000).map(lambda v: v / 10)  # sizes at the generator's resolution


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(tenths, tenths), min_size=1, max_size=50), st.randoms(use_true_random=False))
def test_rmse_permutation_invariant_and_zero_iff_equal(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    assert rmse(shuffled) == pytest.approx(rmse(pairs), rel=1e-12, abs=1e-12)
    assert (rmse(pairs) == 0) == all(e == g for e, g in pairs)


def test_rmse_examples():
    assert rmse([(10, 10), (20, 20)]) == 0
    assert rmse([(3, 0), (4, 0)]) == pytest.approx(3.5355339, abs=1e-6)
    with pytest.raises(ValueError):
        rmse([])


# edit distance and matching


@lru_cache(maxsize=None)
def oracle_levenshtein(a, b):
    if not a or not b:
        return len(a) + len(b)
    return min(oracle_levenshtein(a[1:], b) + 1, oracle_levenshtein(a, b[1:]) + 1,
               oracle_levenshtein(a[1:], b[1:]) + (a[0] != b[0]))


@settings(max_examples=200, deadline=None)
@given(st.text("abcd", max_size=7), st.text("abcd", max_size=7))
def test_levenshtein_matches_oracle(a, b):
    assert levenshtein(a, b) == oracle_levenshtein(a, b) == levenshtein(b, a)


def test_matching_examples():
    gt = gt_of([("data", 20), ("cloud", 30)])
    pairs = match_words([("cloud", 29.0), ("data", 20.0)], gt)
    assert sorted((p.predicted, p.truth, p.distance) for p in pairs) == [("cloud", "cloud", 0), ("data", "data", 0)]
    (p,) = match_words([("dat?", 20.0)], gt)
    assert (p.truth, p.distance) == ("data", 1)
    assert match_words([("DATA", 20.0)], gt)[0].distance == 0
    assert match_words([("xyzw", 20.0)], gt) == []


word_sets = st.lists(st.text("abc", min_size=1, max_size=5), min_size=5, max_size=5, unique=True)


@settings(max_examples=120, deadline=None)
@given(word_sets, word_sets, st.lists(st.integers(10, 70), min_size=10, max_size=10))
def test_greedy_matching_against_exhaustive(pred_words, gt_words, sizes):
    gt = gt_of(zip(gt_words, sizes[:5]))
    preds = list(zip(pred_words, map(float, sizes[5:])))
    greedy = {(p.pred_index, p.gt_index) for p in match_words(preds, gt)}

    def eligible(i, j):
        return normalized_distance(pred_words[i], gt_words[j]) <= 0.5

    reachable = [{(i, j) for i, j in enumerate(perm) if eligible(i, j)} for perm in itertools.permutations(range(5))]
    assert greedy in reachable
    assert all(eligible(i, j) for i, j in greedy)

    exact = {(i, j) for i in range(5) for j in range(5) if pred_words[i] == gt_words[j]}
    assert {(i, j) for i, j in greedy if pred_words[i] == gt_words[j]} == exact
    totals = {perm: sum(levenshtein(pred_words[i], gt_words[j]) for i, j in enumerate(perm))
              for perm in itertools.permutations(range(5))}
    best = min(totals.values())
    assert any(t == best and exact <= set(enumerate(perm)) for perm, t in totals.items())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text("abc", min_size=1, max_size=5), max_size=6), st.lists(st.text("abc", min_size=1, max_size=5), max_size=6))
def test_matching_never_exceeds_half_distance(pred_words, gt_words):
    pairs = match_words([(w, 10.0) for w in pred_words], gt_of((w, 10) for w in gt_words))
    assert all(normalized_distance(p.predicted, p.truth) <= 0.5 for p in pairs)
    assert len({p.pred_index for p in pairs}) == len({p.gt_index for p in pairs}) == len(pairs)


# evaluate


def test_evaluate_identity():
    words = [("data", 20), ("cloud", 30), ("vision", 44)]
    report = evaluate(decoded_of(words), gt_of(words))
    assert report.rmse == 0 and report.recovery_rate == 1.0 and report.within_one_rate == 1.0
    assert report.unmatched_gt == [] and report.spurious_pred == []
    json.dumps(report.to_json())


def test_evaluate_empty_prediction():
    report = evaluate(decoded_of([]), gt_of([("data", 20), ("cloud", 30)]))
    assert report.rmse is None and report.recovery_rate == 0
    assert report.unmatched_gt == ["data", "cloud"]
    assert json.loads(json.dumps(report.to_json()))["rmse"] is None


def test_evaluate_counts_near_misses():
    report = evaluate(decoded_of([("dat?", 22), ("cloud", 30), ("junk", 5)]), gt_of([("data", 20), ("cloud", 30)]))
    assert report.recovery_rate == 0.5 and report.within_one_rate == 1.0
    assert report.spurious_pred == ["junk"]
    assert report.rmse == pytest.approx(math.sqrt(2.0))


def test_rank_agreement():
    gt = gt_of([("a", 10), ("b", 20), ("c", 40), ("d", 44)])
    pairs = match_words([("a", 12.0), ("b", 30.0), ("c", 25.0)], gt)
    agree, total = rank_agreement(pairs, gt, 8)
    # pairs with gap >= 8: ab ac ad bc bd; bc is inverted and d is unmatched
    assert (agree, total) == (2, 5)


# synthesis


def test_empty_entries_give_blank_cloud():
    image, gt = synthesize_cloud([], LayoutConfig(width=40, height=30, background=(240, 240, 240)), 0)
    assert (image.pixels == 240).all() and gt.entries == ()
    assert (image.width, image.height) == (40, 30)


def png_bytes(image):
    buf = io.BytesIO()
    from PIL import Image
    Image.fromarray(image.pixels).save(buf, format="PNG")
    return buf.getvalue()


def test_synthesis_is_deterministic():
    entries = random_entries(np.random.default_rng(1), 15)
    layout = LayoutConfig(p_vertical=0.3, antialias=True)
    a_img, a_gt = synthesize_cloud(entries, layout, 4)
    b_img, b_gt = synthesize_cloud(entries, layout, 4)
    assert png_bytes(a_img) == png_bytes(b_img)
    assert a_gt.dumps() == b_gt.dumps()


@pytest.mark.parametrize("seed", range(5))
def test_placements_are_disjoint(seed):
    layout = LayoutConfig(p_vertical=0.2)
    _, gt = synthesize_cloud(random_entries(np.random.default_rng(seed), 20), layout, seed)
    assert len(gt.entries) == 20
    for a, b in itertools.combinations([e.bbox for e in gt.entries], 2):
        pad = layout.padding
        apart = (a[0] + a[2] + pad <= b[0] or b[0] + b[2] + pad <= a[0]
                 or a[1] + a[3] + pad <= b[1] or b[1] + b[3] + pad <= a[1])
        assert apart, (a, b)
    for e in gt.entries:
        x, y, w, h = e.bbox
        assert 0 <= x and 0 <= y and x + w <= layout.width and y + h <= layout.height
        assert len(e.letters) == len(e.text)
        for lx, ly, lw, lh in e.letters:
            assert x <= lx and y <= ly and lx + lw <= x + w and ly + lh <= y + h


def test_ground_truth_records_the_rendering():
    image, gt = synthesize_cloud([("ink", 40)], LayoutConfig(width=200, height=100, p_vertical=0.0), 0)
    (e,) = gt.entries
    x, y, w, h = e.bbox
    ink = (image.pixels != 255).any(axis=-1)
    ys, xs = np.nonzero(ink)
    assert (xs.min(), ys.min(), xs.max() + 1 - xs.min(), ys.max() + 1 - ys.min()) == (x, y, w, h)
    assert tuple(image.pixels[ys[0], xs[0]]) == tuple(e.color)


def test_vertical_words_are_rotated():
    _, gt = synthesize_cloud([("long", 40)], LayoutConfig(width=300, height=300, p_vertical=1.0), 0)
    (e,) = gt.entries
    assert e.orientation == "vertical" and e.bbox[3] > e.bbox[2]
    # letters run bottom to top
    assert [b[1] for b in e.letters] == sorted((b[1] for b in e.letters), reverse=True)


def test_ground_truth_json_round_trip(tmp_path):
    image, gt = synthesize_cloud([("round", 30), ("trip", 20)], LayoutConfig(width=300, height=200), 2)
    back = GroundTruth.from_json(json.loads(gt.dumps()))
    assert back == gt
    save_image(image, tmp_path / "x.png")


def test_layout_error_names_the_word():
    with pytest.raises(LayoutError, match="enormous"):
        synthesize_cloud([("enormous", 120)], LayoutConfig(width=100, height=60), 0)


@pytest.mark.parametrize("entries", [[("", 20)], [("ok", 7)], [("ok", 129)], [("wavy~", 20)]])
def test_bad_entries_rejected(entries):
    with pytest.raises(ConfigError):
        synthesize_cloud(entries, LayoutConfig(), 0)


def test_layout_validation():
    with pytest.raises(ConfigError):
        LayoutConfig(padding=1)
    with pytest.raises(ConfigError):
        LayoutConfig(p_vertical=1.5)
    with pytest.raises(ConfigError):
        LayoutConfig.from_dict({"colour": "red"})
    with pytest.raises(ConfigError):
        LayoutConfig(background=(0, 0, 0), palette=("#101010",)).colors()
    assert LayoutConfig.from_dict({"background": "#f0f0f0"}).background == (240, 240, 240)
    assert parse_color("#0a0b0c") == Color(10, 11, 12)


def test_random_entries():
    entries = random_entries(np.random.default_rng(0), 20)
    assert len({t for t, _ in entries}) == 20
    assert all(12 <= s <= 72 for _, s in entries)
    assert entries == random_entries(np.random.default_rng(0), 20)
