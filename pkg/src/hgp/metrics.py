"""ROC-AUC, average precision, F1, and the temporal train/validation/test split."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

DEFAULT_SPLIT = (11 / 17, 2 / 17, 4 / 17)


def _arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.shape[0]} scores for {y.shape[0]} labels")
    return s, y.astype(bool)


def roc_auc(scores, labels) -> float:
    """P(score+ > score-) + P(tie)/2 via the Mann-Whitney rank sum."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes")
    ranks = rankdata(s)  # average ranks on ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Average precision; tied scores keep their input order."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("pr_auc needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    tp = np.cumsum(hits)
    ranks = np.arange(1, s.size + 1)
    return float(np.sum(tp[hits] / ranks[hits]) / n_pos)


def f1(scores, labels, threshold: float = 0.5) -> float:
    s, y = _arrays(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    n_pred = int(pred.sum())
    n_pos = int(y.sum())
    if tp == 0 or n_pred == 0 or n_pos == 0:
        return 0.0
    precision = tp / n_pred
    recall = tp / n_pos
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalReport:
    roc_auc: float
    pr_auc: float
    f1: float
    positives: int
    negatives: int
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_scores(scores, labels, threshold: float = 0.5) -> EvalReport:
    s, y = _arrays(scores, labels)
    return EvalReport(roc_auc(s, y), pr_auc(s, y), f1(s, y, threshold),
                      int(y.sum()), int((~y).sum()), float(threshold))


class SplitError(ValueError):
    pass


def split_boundaries(days, fractions=DEFAULT_SPLIT) -> tuple[int, int]:
    """First day of validation and of test, at cumulative fractions of the day span."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise SplitError(f"split fractions must be three positive reals summing to 1, got {fractions}")
    days = np.asarray(days)
    if days.size == 0:
        raise SplitError("no timestamps to split")
    first, last = int(days.min()), int(days.max())
    span = last - first + 1
    b1 = first + int(round(span * fr[0]))
    b2 = first + int(round(span * (fr[0] + fr[1])))
    return b1, b2


def temporal_split(pairs, fractions=DEFAULT_SPLIT):
    """Split by day into train / validation / test at cumulative day fractions.

    With 17 days and the default fractions, the first 11 days train, the next
    two validate and the last four test.
    """
    b1, b2 = split_boundaries(pairs.days, fractions)
    d = pairs.days
    masks = (d < b1, (d >= b1) & (d < b2), d >= b2)
    out = []
    for name, mask in zip(("train", "validation", "test"), masks):
        if not mask.any():
            raise SplitError(f"{name} split is empty (boundaries at days {b1} and {b2}, "
                             f"data spans {int(d.min())}..{int(d.max())})")
        idx = np.flatnonzero(mask)
        idx = idx[np.lexsort((pairs.items[idx], pairs.users[idx], d[idx]))]
        out.append(pairs.take(idx))
    return tuple(out)
