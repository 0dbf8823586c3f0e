import random

import pytest
from hypothesis import given, strategies as st

import oracles
from voltage.metrics import (MISCLASSIFICATION, OVER_SEGMENTATION, BoxedSymbol, ErrorRecord, EvaluationReport,
                             UndefinedRate, align_words, cer, e2e_error, evaluate_symbols, rate,
                             taxonomy_report, wer)
from voltage.raster import Rect


def test_headline_rates():
    assert cer(EvaluationReport(n_s=100, n_s_err=0)) == 0.0
    assert cer(EvaluationReport(n_s=100, n_s_err=4)) == 0.04
    assert wer(EvaluationReport(n_w=100, n_w_err=12)) == 0.12
    assert wer(EvaluationReport(n_w=100)) == 0.0


def test_fig_shape_e2e_unrounded():
    truth = [f"w{i}" for i in range(162)]
    rec = list(truth)
    for i in range(0, 19 * 8, 8):
        rec[i] = rec[i] + "x"
    assert e2e_error(truth, rec) == 19 / 162
    assert 19 / 162 == pytest.approx(0.11728, abs=1e-5)


def test_undefined_and_invalid():
    with pytest.raises(UndefinedRate):
        cer(EvaluationReport())
    with pytest.raises(UndefinedRate):
        e2e_error([], ["a"])
    with pytest.raises(ValueError):
        EvaluationReport(n_s=1, n_s_err=2)
    with pytest.raises(ValueError):
        rate(3, 2)


def test_e2e_examples():
    words = [f"w{i}" for i in range(10)]
    assert e2e_error(words, words) == 0.0
    assert e2e_error(words, words[:4] + words[5:]) == 0.1
    assert e2e_error(["a", "b"], []) == 1.0


@given(st.lists(st.sampled_from("abc"), max_size=8), st.lists(st.sampled_from("abc"), max_size=8))
def test_alignment_cost_is_levenshtein(t, r):
    pairs = align_words(t, r)
    assert [i for i, _ in pairs if i is not None] == list(range(len(t)))
    assert [j for _, j in pairs if j is not None] == list(range(len(r)))
    cost = sum(1 for i, j in pairs if i is None or j is None or t[i] != r[j])
    assert cost == oracles.levenshtein(t, r)


@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=8), st.lists(st.sampled_from("abcd"), max_size=8))
def test_e2e_bounds(t, r):
    assert 0.0 <= e2e_error(t, r) <= 1.0
    assert e2e_error(t, r) >= 1 - min(len(t), len(r)) / len(t) - 1e-12


def sym(x, label, word=0, zone="middle", w=8):
    return BoxedSymbol(Rect(x, 0, w, 10), label, zone, word)


def test_taxonomy_examples():
    truth = [sym(0, "ka"), sym(20, "ga")]
    split = [sym(0, "ka", w=4), sym(4, "vi", w=4), sym(20, "ga")]
    rep = evaluate_symbols(truth, split)
    assert taxonomy_report(rep.errors)[OVER_SEGMENTATION] == 1
    assert rep.n_s == 1 and rep.segmentation == {"over": 1}
    wrong = evaluate_symbols(truth, [sym(0, "ra"), sym(20, "ga")])
    tax = taxonomy_report(wrong.errors)
    assert (tax[MISCLASSIFICATION], tax[OVER_SEGMENTATION]) == (1, 0)
    assert taxonomy_report([]) == {OVER_SEGMENTATION: 0, MISCLASSIFICATION: 0}


def test_mixed_fixture_hand_count():
    truth = [sym(0, "a", 0), sym(10, "b", 0), sym(30, "c", 1), sym(40, "d", 1), sym(60, "e", 2)]
    rec = [sym(0, "a", 0), sym(10, "x", 0), sym(30, "c", 1, w=4), sym(34, "c2", 1, w=4), sym(40, "d", 1),
           sym(60, "e", 2), sym(90, "z", 3)]
    rep = evaluate_symbols(truth, rec)
    assert (rep.n_s, rep.n_s_err) == (4, 1)
    assert (rep.n_w, rep.n_w_err, rep.n_truth_words) == (2, 1, 3)
    assert rep.segmentation == {"over": 1, "spurious": 1}
    assert taxonomy_report(rep.errors) == {OVER_SEGMENTATION: 1, MISCLASSIFICATION: 1}
    assert rep.zones == {"middle": (3, 4)}


def test_root_marker_independence():
    truth = [sym(0, "ka", zone="middle"), BoxedSymbol(Rect(0, 12, 8, 4), "u", "bottom", 0)]
    rec = [sym(0, "ga", zone="middle"), BoxedSymbol(Rect(0, 12, 8, 4), "u", "bottom", 0)]
    rep = evaluate_symbols(truth, rec)
    assert (rep.n_s, rep.n_s_err) == (2, 1)
    assert rep.zones == {"middle": (0, 1), "bottom": (1, 1)}


def _recount(truth, rec_labels, dropped):
    n_s = sum(1 for i in range(len(truth)) if i not in dropped)
    err = sum(1 for i, t in enumerate(truth) if i not in dropped and rec_labels[i] != t.label)
    words = {}
    for i, t in enumerate(truth):
        ok, bad = words.get(t.word, (True, False))
        words[t.word] = (ok and i not in dropped, bad or (i not in dropped and rec_labels[i] != t.label))
    n_w = sum(ok for ok, _ in words.values())
    n_w_err = sum(ok and bad for ok, bad in words.values())
    return n_s, err, n_w, n_w_err


@given(st.integers(0, 2**32 - 1))
def test_random_fixture_recount(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 25)
    truth = [sym(12 * i, rng.choice("abc"), word=i // 4) for i in range(n)]
    labels = [t.label if rng.random() < 0.7 else rng.choice("abcx") for t in truth]
    dropped = {i for i in range(n) if rng.random() < 0.15}
    rec = [sym(12 * i, labels[i], word=i // 4) for i in range(n) if i not in dropped]
    rep = evaluate_symbols(truth, rec)
    assert (rep.n_s, rep.n_s_err, rep.n_w, rep.n_w_err) == _recount(truth, labels, dropped)
    # word-index prefix keeps distinct words from aligning by accident
    words_t = [f"{w}:" + "".join(t.label for t in truth if t.word == w) for w in sorted({t.word for t in truth})]
    words_r = [f"{w}:" + "".join(labels[i] for i in range(n) if truth[i].word == w and i not in dropped)
               for w in sorted({t.word for t in truth})]
    if rep.n_w and dropped:
        assert wer(rep) <= e2e_error(words_t, words_r) + 1e-12
    for f in (cer, wer):
        try:
            assert 0 <= f(rep) <= 1
        except UndefinedRate:
            pass


def test_merge_and_serialize():
    a = EvaluationReport(3, 1, 1, 0, 4, 2, {"over": 1}, {"middle": (2, 3)},
                         [ErrorRecord(MISCLASSIFICATION, "a", ("b",))])
    b = EvaluationReport(2, 0, 1, 0, 2, 1, {}, {"middle": (2, 2), "upper": (0, 0)})
    m = a.merge(b)
    assert (m.n_s, m.n_s_err, m.zones["middle"], m.segmentation) == (5, 1, (4, 5), {"over": 1})
    rows = dict(m.rows())
    assert rows["cer"] == "0.2000" and rows["zone_upper"] == "0/0"
    assert "CER 0.2000" in m.summary() and "n/a" in m.summary()
    assert "CER n/a" in EvaluationReport().summary()
