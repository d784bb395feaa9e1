import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgp.ctr import Pairs
from hgp.metrics import SplitError, evaluate_scores, f1, pr_auc, roc_auc, temporal_split
from hgp.numerics import make_rng


def brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (pos.size * neg.size)


def brute_ap(s, y):
    """Precision at each positive's rank, ties in input order."""
    n = s.size
    rank = np.empty(n, dtype=np.int64)
    for i in range(n):
        # items ranked before i: strictly higher, or equal and earlier in input
        rank[i] = 1 + sum(1 for j in range(n) if s[j] > s[i] or (s[j] == s[i] and j < i))
    total = 0.0
    for i in np.flatnonzero(y == 1):
        above = sum(1 for j in np.flatnonzero(y == 1) if rank[j] <= rank[i])
        total += above / rank[i]
    return total / (y == 1).sum()


def random_instance(rng, n):
    y = rng.integers(0, 2, n)
    y[0], y[1] = 1, 0
    s = np.round(rng.random(n), int(rng.integers(1, 4)))  # rounding forces ties
    return s, y


def test_roc_examples():
    assert roc_auc([0.9, 0.1], [1, 0]) == 1.0
    assert roc_auc([0.3] * 4, [1, 0, 1, 0]) == 0.5
    assert roc_auc([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0]) == 0.75
    with pytest.raises(ValueError, match="both classes"):
        roc_auc([0.1, 0.2], [1, 1])


def test_ap_examples():
    assert pr_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert pr_auc([0.9, 0.1], [0, 1]) == 0.5
    with pytest.raises(ValueError, match="positive"):
        pr_auc([0.1], [0])


def test_f1_examples():
    assert f1([0.9, 0.2], [1, 0]) == 1.0
    assert f1([0.9, 0.9], [1, 0]) == pytest.approx(2 / 3)
    assert f1([0.1, 0.2], [1, 0]) == 0.0
    assert f1([0.5, 0.2], [1, 0]) == 1.0  # score at threshold counts as positive


def test_f1_threshold_zero_closed_form(rng):
    y = rng.integers(0, 2, 50)
    P, N = int(y.sum()), int((1 - y).sum())
    assert f1(rng.random(50), y, 0.0) == pytest.approx(2 * P / (P + N + P))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_brute_force_oracles(seed, n):
    s, y = random_instance(make_rng(seed), n)
    assert abs(roc_auc(s, y) - brute_auc(s, y)) <= 1e-12
    assert abs(pr_auc(s, y) - brute_ap(s, y)) <= 1e-12


def test_brute_force_large(rng):
    s, y = random_instance(rng, 1000)
    assert abs(roc_auc(s, y) - brute_auc(s, y)) <= 1e-12


def test_roc_monotone_invariance(rng):
    s, y = random_instance(rng, 300)
    base = roc_auc(s, y)
    assert roc_auc(np.exp(s), y) == base
    assert roc_auc(3.0 * s - 7.0, y) == base


def test_evaluate_scores_report():
    rep = evaluate_scores([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])
    d = rep.to_dict()
    assert d["positives"] == 2 and d["negatives"] == 2 and d["threshold"] == 0.5
    assert d["roc_auc"] == 0.75


def day_pairs(days):
    days = np.asarray(days, dtype=np.int64)
    n = days.size
    return Pairs(np.arange(n), np.arange(n) + 100, np.ones(n, dtype=np.int64), days)


def test_split_sizes_11_2_4():
    tr, va, te = temporal_split(day_pairs(np.arange(17)))
    assert (len(tr), len(va), len(te)) == (11, 2, 4)
    assert tr.days.max() < va.days.min() and va.days.max() < te.days.min()


def test_split_degenerate_and_fractions():
    with pytest.raises(SplitError, match="empty"):
        temporal_split(day_pairs([3, 3, 3]))
    with pytest.raises(SplitError, match="sum"):
        temporal_split(day_pairs(np.arange(17)), (0.5, 0.5, 0.5))


def test_split_order_independent(rng):
    p = day_pairs(rng.integers(0, 17, 200))
    perm = rng.permutation(200)
    a = temporal_split(p)
    b = temporal_split(p.take(perm))
    for x, y in zip(a, b):
        for f in ("users", "items", "labels", "days"):
            np.testing.assert_array_equal(getattr(x, f), getattr(y, f))
