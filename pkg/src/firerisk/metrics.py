"""Binary classification metrics.

Decisions use the ``score >= threshold`` convention. Any 0/0 ratio is
reported as 0 so degenerate splits do not raise.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    auc_roc: float

    def as_dict(self):
        return asdict(self)


def _pair(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ArgumentError(f"{scores.size} scores but {labels.size} labels")
    if scores.size == 0:
        raise ArgumentError("no samples")
    if not np.all((labels == 0) | (labels == 1)):
        raise ArgumentError("labels must be binary")
    return scores, labels.astype(np.int64)


def confusion(scores, labels, threshold=0.5):
    scores, labels = _pair(scores, labels)
    pred = scores >= threshold
    pos = labels == 1
    return Confusion(tp=int(np.sum(pred & pos)), fp=int(np.sum(pred & ~pos)),
                     tn=int(np.sum(~pred & ~pos)), fn=int(np.sum(~pred & pos)))


def _ratio(a, b):
    return a / b if b else 0.0


def precision_recall_f1(counts):
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    # equals the harmonic mean of precision and recall, with a single rounding
    f1 = _ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn)
    return precision, recall, f1


def accuracy(counts):
    return _ratio(counts.tp + counts.tn, counts.total)


def auc_roc(scores, labels):
    """Mann-Whitney AUC from average ranks; ties between classes count one half."""
    scores, labels = _pair(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ArgumentError("AUC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate_scores(scores, labels, threshold=0.5):
    counts = confusion(scores, labels, threshold)
    p, r, f = precision_recall_f1(counts)
    labels = np.asarray(labels).ravel()
    both = 0 < labels.sum() < labels.size
    auc = auc_roc(scores, labels) if both else float("nan")
    return MetricsReport(tp=counts.tp, fp=counts.fp, tn=counts.tn, fn=counts.fn,
                         precision=p, recall=r, f1=f, accuracy=accuracy(counts), auc_roc=auc)


def roc_curve(scores, labels):
    """(false positive rate, true positive rate) points at every distinct threshold."""
    scores, labels = _pair(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), y.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    n_pos, n_neg = y.sum(), y.size - y.sum()
    tpr = np.r_[0.0, tps / max(n_pos, 1)]
    fpr = np.r_[0.0, fps / max(n_neg, 1)]
    return fpr, tpr
