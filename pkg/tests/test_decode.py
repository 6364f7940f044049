import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from mvladdm import decode as D
from mvladdm.errors import DegenerateLabels, LengthMismatch

from oracles import brute_force_decode


# ---------------------------------------------------------------- Viterbi

def test_zero_transitions_is_framewise_argmax(rng):
    U = rng.normal(size=(12, 4))
    assert_array_equal(D.viterbi_decode(U, np.zeros((4, 4))).labels, U.argmax(axis=1))


def test_uniform_unaries_tie_breaks_to_zeros():
    e = D.viterbi_decode(np.zeros((7, 3)), np.eye(3))
    assert_array_equal(e.labels, np.zeros(7))


def test_viterbi_matches_enumeration():
    for seed in range(100):
        r = np.random.default_rng(seed)
        T, N = int(r.integers(1, 9)), int(r.integers(1, 5))
        if N ** T > 5000:
            T = max(1, int(np.log(5000) / np.log(N)))
        U, B = r.normal(size=(T, N)), r.normal(size=(N, N))
        best, _ = brute_force_decode(U, B)
        assert_array_equal(D.viterbi_decode(U, B).labels, best)


def test_viterbi_beats_random_paths(rng):
    for _ in range(5):
        U, B = rng.normal(size=(30, 4)), rng.normal(size=(4, 4))
        e = D.viterbi_decode(U, B)
        s = D.path_score(U, B, e.labels)
        assert all(s >= D.path_score(U, B, rng.integers(0, 4, 30)) for _ in range(1000))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(-100, 100))
def test_viterbi_shift_invariant(seed, c):
    r = np.random.default_rng(seed)
    U, B = r.normal(size=(10, 3)), r.normal(size=(3, 3))
    assert_array_equal(D.viterbi_decode(U, B).labels, D.viterbi_decode(U + c, B).labels)


def test_viterbi_keeps_scores_and_rejects_empty(rng):
    U = rng.normal(size=(3, 2))
    assert_array_equal(D.viterbi_decode(U, np.zeros((2, 2))).scores, U)
    with pytest.raises(ValueError):
        D.viterbi_decode(np.zeros((0, 2)), np.zeros((2, 2)))


# ---------------------------------------------------------------- accuracy and confusion

def test_per_class_accuracy_examples():
    acc, avg = D.per_class_accuracy([2, 0, 1, 1], [2, 0, 1, 1])
    assert_array_equal(acc, 1.0)
    assert avg == 1.0
    acc, avg = D.per_class_accuracy([1, 1, 0, 0], [1, 0, 0, 0])
    assert_allclose(acc, [1.0, 0.5])
    assert avg == 0.75
    acc, avg = D.per_class_accuracy([0, 0, 2], [0, 1, 0], 3)
    assert np.isnan(acc[1]) and avg == 0.25
    with pytest.raises(LengthMismatch):
        D.per_class_accuracy([0, 1], [0])


def test_confusion_totals(rng):
    t, p = rng.integers(0, 4, 50), rng.integers(0, 4, 50)
    cm = D.confusion_matrix(t, p, 4)
    assert cm.sum() == 50 and np.all(cm >= 0)
    assert_array_equal(cm.sum(axis=1), np.bincount(t, minlength=4))


# ---------------------------------------------------------------- ROC

def test_roc_examples():
    assert D.roc_auc([3.0, 2.0, 1.0, 0.0], [1, 1, 0, 0])[2] == 1.0
    assert D.roc_auc([0.7] * 6, [1, 0, 1, 0, 0, 1])[2] == 0.5
    fpr, tpr, auc = D.roc_auc([0.9, 0.4, 0.6, 0.1], [1, 0, 1, 0])
    assert auc == 1.0 and fpr[0] == tpr[0] == 0.0 and fpr[-1] == tpr[-1] == 1.0
    with pytest.raises(DegenerateLabels):
        D.roc_auc([0.1, 0.2], [1, 1])


def rank_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    return np.mean([(a > b) + 0.5 * (a == b) for a in pos for b in neg])


def test_roc_matches_rank_statistic_and_monotone_transform(rng):
    for _ in range(20):
        s = np.round(rng.normal(size=40), 1)
        y = (rng.random(40) < 0.4).astype(int)
        y[:2] = [0, 1]
        auc = D.roc_auc(s, y)[2]
        assert_allclose(auc, rank_auc(s, y), rtol=1e-12)
        assert_allclose(D.roc_auc(np.exp(3 * s) + 1, y)[2], auc, rtol=1e-12)


def test_metrics_report_layout(tmp_path):
    truth = np.array([0, 0, 1, 1, 2])
    scores = np.eye(3)[[0, 0, 1, 0, 2]] * 2.0
    rep = D.metrics_report(truth, scores.argmax(axis=1), scores, ["a", "b", "c"])
    assert set(rep) == {"per_class", "average", "confusion", "auc"}
    assert rep["per_class"] == {"a": 1.0, "b": 0.5, "c": 1.0}
    D.write_metrics(rep, tmp_path / "m.json")
    assert json.loads((tmp_path / "m.json").read_text()) == rep
    rep = D.metrics_report(np.zeros(3, int), np.zeros(3, int), np.zeros((3, 2)), ["a", "b"])
    assert rep["auc"] == {"a": None, "b": None} and rep["per_class"]["b"] is None


# ---------------------------------------------------------------- ethograms

def test_segments_examples():
    assert D.Ethogram(np.full(9, 2)).segments == [(2, 0, 9)]
    alt = np.arange(8) % 2
    assert len(D.Ethogram(alt).segments) == 8
    segs = D.run_segments([0, 0, 1, 1, 1, 0])
    assert segs == [(0, 0, 2), (1, 2, 5), (0, 5, 6)]


def test_ethogram_round_trip(tmp_path, rng):
    labels = np.repeat(rng.integers(0, 5, 30), rng.integers(1, 6, 30))
    csv_path, svg_path = D.export_ethogram(D.Ethogram(labels), tmp_path / "e", 5)
    assert_array_equal(D.read_ethogram_csv(csv_path), labels)
    svg = open(svg_path).read()
    assert f'width="{labels.size}"' in svg and 'height="50"' in svg
    assert svg.count("<rect") == 1 + len(D.run_segments(labels))


def test_svg_width_cap():
    labels = np.repeat([0, 1, 2, 1], 2500)
    svg = D.ethogram_svg(labels, 3)
    assert f'width="{D.SVG_MAX_WIDTH}"' in svg
    # every run survives the downsampling
    assert svg.count("<rect") == 1 + 4


def test_export_failure(tmp_path):
    from mvladdm.errors import IoFailure
    with pytest.raises(IoFailure):
        D.export_ethogram(D.Ethogram([0, 1]), tmp_path / "missing" / "e")
