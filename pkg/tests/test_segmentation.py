import numpy as np
import pytest
from hypothesis import given

import oracles
from conftest import bitmaps
from voltage.raster import Rect, binarize
from voltage.segmentation import (LineBand, ScriptClass, SegmentationConfig, Zone, classify_zones,
                                  connected_components, drop_specks, extract_symbols, find_valleys,
                                  segment_characters, segment_lines, segment_words, skeletonize)
from voltage.synthscript import render_page


def test_find_valleys_examples():
    v = find_valleys([5, 5, 0, 0, 5, 5], 0.1, 1)
    assert [(x.start, x.end, x.cut) for x in v] == [(2, 3, 2)]
    assert find_valleys([4, 4, 4], 0.1, 1) == []
    assert find_valleys([3, 0, 3, 0, 3], 0.1, 2) == []
    with pytest.raises(ValueError):
        find_valleys([], 0.1)


def test_segment_lines_two_strips():
    page = np.zeros((40, 30), dtype=np.uint8)
    page[0:10, 2:28] = 1
    page[20:30, 2:28] = 1
    bands = segment_lines(page)
    assert [(b.y_start, b.y_end) for b in bands] == [(0, 10), (20, 30)]
    for b in bands:
        assert b.y_start <= b.upper_boundary < b.lower_boundary <= b.y_end
    assert segment_lines(np.zeros((10, 10))) == []


def test_thin_band_joins_its_line():
    # a short stroke 2 rows under a line body belongs to that line
    page = np.zeros((60, 30), dtype=np.uint8)
    page[5:21, 2:28] = 1
    page[23:27, 4:8] = 1
    page[40:56, 2:28] = 1
    bands = segment_lines(page, SegmentationConfig(min_gap_px=2))
    assert [(b.y_start, b.y_end) for b in bands] == [(5, 27), (40, 56)]


def test_segment_words():
    line = np.zeros((10, 40), dtype=np.uint8)
    line[2:8, 0:10] = 1
    line[2:8, 20:30] = 1
    cfg = SegmentationConfig(word_min_gap=5)
    assert segment_words(line, cfg) == [Rect(0, 2, 10, 6), Rect(20, 2, 10, 6)]
    assert len(segment_words(line, SegmentationConfig(word_min_gap=12))) == 1
    assert segment_words(np.zeros((5, 5)), cfg) == []


def _overlap_word():
    # two bodies; a top-row overhang bridges the blank column between them
    w = np.zeros((12, 13), dtype=np.uint8)
    w[4:12, 0:6] = 1
    w[4:12, 7:13] = 1
    w[0:2, 3:10] = 1
    return w


def test_ehx_splits_overhang_hx_does_not():
    word = _overlap_word()
    hx = SegmentationConfig(script_class=ScriptClass.ALPHABET, char_min_gap=1, valley_threshold_fraction=0.15)
    ehx = SegmentationConfig(script_class=ScriptClass.ABUGIDA, char_min_gap=1, valley_threshold_fraction=0.15,
                             penalty_weight=1.0)
    assert len(segment_characters(word, hx)) == 1
    assert len(segment_characters(word, ehx)) == 2


@given(bitmaps(12, 2))
def test_penalty_zero_equals_hx(word):
    a = SegmentationConfig(script_class=ScriptClass.ALPHABET, char_min_gap=1)
    b = SegmentationConfig(script_class=ScriptClass.ABUGIDA, char_min_gap=1, penalty_weight=0.0)
    assert segment_characters(word, a) == segment_characters(word, b)


@given(bitmaps(14, 2))
def test_character_rects_cover_ink(word):
    rects = segment_characters(word, SegmentationConfig(char_min_gap=1))
    covered = np.zeros_like(word)
    for r in rects:
        covered[r.y:r.y2, r.x:r.x2] = 1
    assert not (word & (1 - covered)).any()
    assert all(a.x2 <= b.x for a, b in zip(rects, rects[1:]))


def test_skeleton_examples():
    line = np.zeros((5, 9), dtype=np.uint8)
    line[2] = 1
    assert np.array_equal(skeletonize(line), line)
    bar = np.zeros((7, 13), dtype=np.uint8)
    bar[2:5, 2:11] = 1
    sk = skeletonize(bar)
    assert sk.sum(axis=0).max() == 1
    assert abs(int(sk.any(axis=0).sum()) - 9) <= 2
    block = np.zeros((4, 4), dtype=np.uint8)
    block[1:3, 1:3] = 1
    assert 1 <= skeletonize(block).sum() <= 2
    assert not skeletonize(np.zeros((3, 3))).any()


@given(bitmaps(12))
def test_skeleton_keeps_components(bits):
    sk = skeletonize(bits)
    assert not (sk & (1 - bits)).any()
    assert len(oracles.flood_components(sk)) == len(oracles.flood_components(bits))


@given(bitmaps(10))
def test_components_match_flood_fill(bits):
    comps = connected_components(bits)
    ref = oracles.flood_components(bits)
    assert len(comps) == len(ref)
    assert sorted(c.size for c in comps) == sorted(len(c) for c in ref)
    anchors = [(c.rect.y, int(np.argmax(c.mask[0])) + c.rect.x) for c in comps]
    assert anchors == sorted(anchors)


def test_drop_specks():
    img = np.zeros((6, 6), dtype=np.uint8)
    img[0, 0] = 1
    img[2:5, 2:4] = 1
    out = drop_specks(img, 3)
    assert out[0, 0] == 0 and out[2:5, 2:4].all()


def test_classify_zones_stack():
    char = np.zeros((20, 6), dtype=np.uint8)
    char[0:2, 2:4] = 1
    char[6:14, 0:6] = 1
    char[18:20, 2:4] = 1
    band = LineBand(0, 20, 5, 15)
    syms = classify_zones(char, band)
    assert [s.zone for s in syms] == [Zone.UPPER, Zone.MIDDLE, Zone.BOTTOM]
    one = classify_zones(char, band, SegmentationConfig(script_class=ScriptClass.ALPHABET))
    assert len(one) == 1 and one[0].zone == Zone.MIDDLE
    assert classify_zones(np.zeros((4, 4)), band) == []


def test_extract_round_trip(charset):
    page = render_page(charset, text=12, seed=3)
    syms = extract_symbols(binarize(page.image))
    assert len(syms) == len(page.symbols)
    assert sorted(s.zone.value for s in syms) == sorted(t.zone.value for t in page.symbols)
    truth = {t.box for t in page.symbols}
    assert {s.box for s in syms} == truth
