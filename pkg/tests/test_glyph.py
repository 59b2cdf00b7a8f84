import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cloudecode.errors import ConfigError
from cloudecode.font import DEFAULT_ALPHABET, load_font
from cloudecode.glyph import build_atlas, classify, match_scores, normalize_mask
from cloudecode.raster import WHITE, ComponentRegion, Color, extract_components, union_regions
from conftest import paint

FONT = load_font("builtin")


def render_region(ch, size, offset=(0.0, 0.0), shift=(0, 0), color=(0, 0, 0)):
    """Render one character on a white canvas and extract it as a single region."""
    mask = np.pad(FONT.render(ch, size, offset=offset).mask, 3)
    mask = np.roll(mask, shift, axis=(1, 0))
    comps = extract_components(paint(mask, color), WHITE, min_pixel_count=1)
    return union_regions(comps)


def accuracy(atlas, sizes, **kw):
    hits = total = 0
    for size in sizes:
        for ch in atlas.alphabet:
            hits += classify(render_region(ch, size, **kw), atlas).letter == ch
            total += 1
    return hits / total


def test_atlas_structure():
    atlas = build_atlas("builtin", "AB", 32)
    assert atlas.templates.shape == (2, 32, 32)
    assert atlas.alphabet == "AB" and atlas.ref_size == 32


@pytest.mark.parametrize("alphabet,ref_size", [("", 32), ("aa", 32), ("ab", 4), ("aé", 32)])
def test_atlas_config_errors(alphabet, ref_size):
    with pytest.raises(ConfigError):
        build_atlas("builtin", alphabet, ref_size)


def test_missing_character_is_named():
    with pytest.raises(ConfigError, match="'~'"):
        build_atlas("builtin", "a~", 32)


def test_unloadable_font_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        build_atlas(str(tmp_path / "none.ttf"), "a", 32)


def test_templates_nonempty_and_fill_their_box(atlas):
    for ch, t in zip(atlas.alphabet, atlas.templates):
        assert t.any(), ch
        rows, cols = t.any(axis=1), t.any(axis=0)
        # the major axis spans the box; the minor axis is centred
        assert (rows[0] and rows[-1]) or (cols[0] and cols[-1]), ch


def test_self_match_is_exact(atlas):
    for ch in atlas.alphabet:
        got = classify(atlas.template(ch), atlas)
        assert got == (ch, 1.0)


def test_normalize_identity_and_point():
    rng = np.random.default_rng(0)
    m = rng.random((16, 16)) < 0.5
    m[0, 0] = m[-1, -1] = True
    assert np.array_equal(normalize_mask(m, 16), m)
    assert normalize_mask(np.ones((1, 1), dtype=bool), 16).all()


def test_rendered_h_agrees_with_template(atlas):
    norm = normalize_mask(render_region("H", 40), atlas.ref_size)
    assert (norm == atlas.template("H")).mean() >= 0.9


@pytest.mark.parametrize("size", [24, 36, 60])
def test_rendered_glyph_accuracy(atlas, size):
    assert accuracy(atlas, [size]) >= 0.95


@pytest.mark.parametrize("shift", [(-1, 0), (1, 0), (0, -1), (0, 1), (1, 1), (-1, -1)])
def test_jittered_glyph_accuracy(atlas, shift):
    # whole-pixel shift plus a sub-pixel phase that changes how strokes rasterise
    phase = (0.5 * (shift[0] % 2), 0.5 * (shift[1] % 2))
    assert accuracy(atlas, [24, 36, 60], offset=phase, shift=shift) >= 0.90


def test_scale_invariance(atlas):
    # every character at every integer size in 12..96 reads as it does at 48
    changed = []
    for ch in atlas.alphabet:
        ref = classify(render_region(ch, 48), atlas).letter
        changed += [(ch, size) for size in range(12, 97) if classify(render_region(ch, size), atlas).letter != ref]
    assert not changed, f"classification changes with size: {changed}"


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(DEFAULT_ALPHABET), st.integers(16, 60), st.tuples(*[st.integers(0, 255)] * 3))
def test_recolouring_keeps_classification(atlas, ch, size, color):
    if max(255 - c for c in color) <= 48:
        color = (0, 0, 0)
    region = render_region(ch, size)
    recoloured = ComponentRegion(region.bbox, region.mask, Color(*color), region.parts)
    assert classify(recoloured, atlas) == classify(region, atlas)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(DEFAULT_ALPHABET), st.floats(10, 80))
def test_confidence_bounded_and_deterministic(atlas, ch, size):
    region = render_region(ch, size)
    first = classify(region, atlas)
    assert 0.0 <= first.confidence <= 1.0
    assert classify(region, atlas) == first
    assert first.letter in atlas.alphabet


def test_ties_go_to_alphabet_order():
    atlas = build_atlas("builtin", "ab", 16)
    twin = type(atlas)("xy", np.stack([atlas.templates[0]] * 2), atlas.font_id, 16)
    assert classify(atlas.templates[0], twin).letter == "x"
    assert np.all(match_scores(atlas.templates[0], twin) == 1.0)


def test_pair_metrics_of_builtin_font(atlas):
    assert atlas.ink_height("a") == pytest.approx(0.5)
    assert atlas.ink_height("d") == pytest.approx(0.7)
    assert atlas.pair_gap("a", "b") == pytest.approx(0.1)
