import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given, settings, strategies as st

from firerisk.errors import ArgumentError
from firerisk.metrics import (Confusion, accuracy, auc_roc, confusion, evaluate_scores,
                              precision_recall_f1, roc_curve)
from metric_cases import CASES, brute_auc, random_instances


def test_auc_matches_brute_force_with_ties():
    for scores, labels in random_instances():
        assert abs(auc_roc(scores, labels) - brute_auc(scores, labels)) <= 1e-9


def test_auc_examples():
    assert auc_roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc_roc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc_roc([0.9, 0.7, 0.7, 0.2], [1, 1, 0, 0]) == 0.875
    for labels in ([0, 0, 0], [1, 1]):
        with pytest.raises(ArgumentError):
            auc_roc(np.linspace(0, 1, len(labels)), labels)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 1)), min_size=2, max_size=40))
def test_auc_invariances(pairs):
    scores = np.array([p[0] for p in pairs], dtype=float)
    labels = np.array([p[1] for p in pairs])
    if labels.min() == labels.max():
        return
    a = auc_roc(scores, labels)
    assert 0.0 <= a <= 1.0
    assert auc_roc(np.exp(scores / 3.0) + 7.0, labels) == pytest.approx(a, abs=1e-12)
    assert auc_roc(scores, 1 - labels) == pytest.approx(1 - a, abs=1e-12)


@pytest.mark.parametrize("scores,labels,threshold,counts,prf", CASES)
def test_hand_tallied_cases(scores, labels, threshold, counts, prf):
    c = confusion(scores, labels, threshold)
    assert (c.tp, c.fp, c.tn, c.fn) == counts
    assert c.total == len(scores)
    got = precision_recall_f1(c)
    assert got == tuple(float(v) for v in prf)


def test_confusion_examples():
    c = confusion([0.9, 0.2, 0.7], [1, 0, 1])
    assert c.fp == 0 and c.fn == 0
    c = confusion([0.9, 0.2, 0.7], [0, 0, 0])
    assert c.tp == 0 and c.fn == 0
    assert confusion([0.5], [1]).tp == 1  # >= convention
    with pytest.raises(ArgumentError):
        confusion([0.1, 0.2], [1])
    with pytest.raises(ArgumentError):
        confusion([], [])


def test_precision_recall_conventions():
    assert precision_recall_f1(Confusion(tp=2, fp=1, tn=0, fn=1)) == pytest.approx((2 / 3,) * 3)
    assert precision_recall_f1(Confusion(tp=3, fp=0, tn=5, fn=0)) == (1.0, 1.0, 1.0)
    assert precision_recall_f1(Confusion(tp=0, fp=0, tn=4, fn=2)) == (0.0, 0.0, 0.0)
    assert accuracy(Confusion(0, 0, 0, 0)) == 0.0


def test_evaluate_scores_report():
    rep = evaluate_scores([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0])
    assert (rep.tp, rep.fp, rep.tn, rep.fn) == (1, 1, 1, 1)
    assert rep.accuracy == 0.5 and rep.auc_roc == 0.75
    assert np.isnan(evaluate_scores([0.2, 0.3], [0, 0]).auc_roc)
    assert set(rep.as_dict()) == {"tp", "fp", "tn", "fn", "precision", "recall", "f1",
                                  "accuracy", "auc_roc"}


def test_roc_curve_area_equals_auc():
    for scores, labels in random_instances(30, seed=7):
        fpr, tpr = roc_curve(scores, labels)
        assert fpr[0] == 0 and tpr[0] == 0 and fpr[-1] == 1 and tpr[-1] == 1
        assert trapezoid(tpr, fpr) == pytest.approx(auc_roc(scores, labels), abs=1e-12)
