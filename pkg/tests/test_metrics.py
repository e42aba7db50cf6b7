import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caunet.errors import ContractError, DimensionError
from caunet.metrics import (
    ConfusionCounts,
    binarize,
    confusion,
    evaluate,
    metrics_from_counts,
    pr_curve,
    roc_curve,
)
from caunet.tensor import Tensor


def brute_force_metrics(pred: np.ndarray, truth: np.ndarray) -> dict:
    """Set-form evaluation straight from pixel arrays; mcc as Pearson correlation."""
    a, b = pred.astype(bool).ravel(), truth.astype(bool).ravel()
    inter, union = np.sum(a & b), np.sum(a | b)
    out = {
        "accuracy": np.mean(a == b),
        "jaccard": inter / union if union else 0.0,
        "precision": inter / a.sum() if a.sum() else 0.0,
        "recall": inter / b.sum() if b.sum() else 0.0,
        "dice": 2 * inter / (a.sum() + b.sum()) if inter else 0.0,
        "specificity": np.sum(~a & ~b) / np.sum(~b) if np.sum(~b) else 0.0,
    }
    if a.std() == 0 or b.std() == 0:
        out["mcc"] = 0.0
    else:
        out["mcc"] = np.corrcoef(a.astype(float), b.astype(float))[0, 1]
    return out


def mann_whitney_auc(scores, truth):
    s, t = np.asarray(scores, float), np.asarray(truth, bool)
    pos, neg = s[t], s[~t]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


def test_binarize():
    assert binarize(np.array(0.5), 0.5) == 1
    assert binarize(np.array(0.49), 0.5) == 0
    assert binarize(Tensor(np.full((1, 1, 3, 3), 0.7))).all()


def test_confusion_examples():
    truth = np.array([1, 0, 1, 1, 0, 0, 0, 1])
    assert confusion(truth, truth) == ConfusionCounts(4, 0, 0, 4)
    c = confusion(1 - truth, truth)
    assert c.tp == c.tn == 0
    pred = np.array([1, 1, 0, 0, 1, 0, 0, 0])
    truth = np.array([1, 0, 0, 0, 1, 1, 0, 0])
    assert confusion(pred, truth) == ConfusionCounts(tp=2, fp=1, fn=1, tn=4)


def test_confusion_rejects_nonbinary_and_mismatch():
    with pytest.raises(ContractError):
        confusion(np.array([0, 2]), np.array([0, 1]))
    with pytest.raises(DimensionError):
        confusion(np.zeros(3), np.zeros(4))


def test_metrics_hand_example():
    m = metrics_from_counts(ConfusionCounts(tp=2, fp=1, fn=1, tn=4))
    assert m.accuracy == 0.75
    assert m.precision == pytest.approx(2 / 3, abs=1e-15)
    assert m.recall == pytest.approx(2 / 3, abs=1e-15)
    assert m.dice == pytest.approx(2 / 3, abs=1e-15)
    assert m.jaccard == 0.5
    assert m.specificity == 0.8
    assert m.mcc == pytest.approx(7 / 15, abs=1e-15)
    assert m.undefined == []


def test_metrics_perfect_and_degenerate():
    m = metrics_from_counts(ConfusionCounts(5, 0, 0, 7))
    assert all(getattr(m, k) == 1.0 for k in ("accuracy", "jaccard", "precision", "recall", "dice", "specificity", "mcc"))
    d = metrics_from_counts(ConfusionCounts(0, 0, 0, 9))
    assert d.specificity == 1.0
    assert d.precision == 0.0 and "precision" in d.undefined
    assert "mcc" in d.undefined
    with pytest.raises(ContractError):
        metrics_from_counts(ConfusionCounts(0, 0, 0, 0))


def test_report_json_roundtrip(tmp_path):
    m = evaluate(np.array([[0.9, 0.2], [0.6, 0.1]]), np.array([[1, 0], [0, 0]]))
    m.to_json(tmp_path / "m.json")
    assert json.loads((tmp_path / "m.json").read_text())["precision"] == 0.5


def test_metrics_match_brute_force_on_random_masks():
    rng = np.random.default_rng(0)
    for _ in range(300):
        h, w = rng.integers(1, 33, size=2)
        pred = rng.random((h, w)) < rng.random()
        truth = rng.random((h, w)) < rng.random()
        got = metrics_from_counts(confusion(pred, truth)).to_dict()
        for k, v in brute_force_metrics(pred, truth).items():
            assert got[k] == pytest.approx(v, abs=1e-12), k


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_count_invariants(tp, fp, fn, tn):
    if tp + fp + fn + tn == 0:
        return
    m = metrics_from_counts(ConfusionCounts(tp, fp, fn, tn))
    for k in ("accuracy", "jaccard", "precision", "recall", "dice", "specificity"):
        assert 0.0 <= getattr(m, k) <= 1.0
    assert -1.0 <= m.mcc <= 1.0
    if tp:
        p, r = Fraction(tp, tp + fp), Fraction(tp, tp + fn)
        assert m.dice == float(2 * p * r / (p + r))
    else:
        assert m.dice == 0.0
    assert (m.mcc == 1.0) == (fp == 0 and fn == 0 and tp > 0 and tn > 0)


def test_roc_examples():
    assert roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]).auc == 1.0
    assert roc_curve([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]).auc == 0.0
    c = roc_curve([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
    assert c.auc == pytest.approx(0.75, abs=1e-15)
    assert c.points[0] == (0.0, 0.0) and c.points[-1] == (1.0, 1.0)


def test_roc_single_class_rejected():
    with pytest.raises(ContractError, match="negative"):
        roc_curve([0.1, 0.5], [1, 1])
    with pytest.raises(ContractError, match="positive"):
        roc_curve([0.1, 0.5], [0, 0])


def test_roc_ties_grouped_at_one_threshold():
    c = roc_curve([0.5, 0.5, 0.5, 0.2], [1, 0, 1, 0])
    assert c.points == [(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)]
    assert c.auc == pytest.approx(mann_whitney_auc([0.5, 0.5, 0.5, 0.2], [1, 0, 1, 0]))


def test_roc_auc_equals_mann_whitney():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = rng.integers(2, 200)
        truth = rng.random(n) < 0.4
        truth[0], truth[1] = True, False
        scores = np.round(rng.random(n), 2)  # induce ties
        assert abs(roc_curve(scores, truth).auc - mann_whitney_auc(scores, truth)) < 1e-10


def test_roc_points_monotone_and_invariant_to_monotone_transform():
    rng = np.random.default_rng(2)
    truth = rng.random(300) < 0.3
    scores = rng.standard_normal(300)
    c = roc_curve(scores, truth)
    xs, ys = np.array(c.points).T
    assert (np.diff(xs) >= 0).all() and (np.diff(ys) >= 0).all()
    assert roc_curve(np.exp(3 * scores) + 1, truth).auc == pytest.approx(c.auc, abs=1e-15)


def test_pr_examples():
    assert pr_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]).auc == 1.0
    flat = pr_curve([0.3] * 5, [1, 0, 0, 1, 0])
    assert flat.points == [(1.0, 0.4)]


def test_pr_points_match_threshold_sweep_oracle():
    scores, truth = np.array([0.9, 0.8, 0.7, 0.1]), np.array([1, 0, 1, 0])
    expected = []
    for thr in sorted(set(scores), reverse=True):
        c = confusion(scores >= thr, truth)
        expected.append((c.tp / (c.tp + c.fn), c.tp / (c.tp + c.fp)))
    c = pr_curve(scores, truth)
    assert c.points == pytest.approx(expected)
    # trapezoid over recall including the flat segment from recall 0
    assert c.auc == pytest.approx(0.5 * 1.0 + 0.5 * (0.5 + 2 / 3) / 2)


def test_pr_requires_positive():
    with pytest.raises(ContractError):
        pr_curve([0.2, 0.4], [0, 0])


def test_curve_csv(tmp_path):
    c = roc_curve([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
    c.to_csv(tmp_path / "roc.csv")
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "fpr,tpr" and len(lines) == len(c.points) + 1
    assert math.isinf(c.thresholds[0])
