"""Binary segmentation metrics, ROC/PR curves and their areas."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from caunet.errors import ContractError, DimensionError

METRIC_NAMES = ("accuracy", "jaccard", "precision", "recall", "dice", "specificity", "mcc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass
class MetricsReport:
    accuracy: float
    jaccard: float
    precision: float
    recall: float
    dice: float
    specificity: float
    mcc: float
    threshold: float = 0.5
    # metrics whose denominator was zero and were therefore reported as 0
    undefined: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def csv_row(self) -> list:
        return [getattr(self, k) for k in METRIC_NAMES] + [self.threshold]


@dataclass
class CurveData:
    kind: str  # "roc" or "pr"
    points: list[tuple[float, float]]
    thresholds: list[float]
    auc: float

    def to_csv(self, path: str | Path) -> None:
        header = ("fpr", "tpr") if self.kind == "roc" else ("recall", "precision")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(self.points)


def binarize(prob, threshold: float = 0.5) -> np.ndarray:
    """1 where probability >= threshold, else 0 (uint8)."""
    arr = prob.data if hasattr(prob, "data") and not isinstance(prob, np.ndarray) else np.asarray(prob)
    return (arr >= threshold).astype(np.uint8)


def _as_binary(a, name: str) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype != np.bool_:
        if not np.isin(arr, (0, 1)).all():
            raise ContractError(f"{name} mask must be binary (0/1)")
        arr = arr.astype(bool)
    return arr


def confusion(pred, truth) -> ConfusionCounts:
    p, t = _as_binary(pred, "pred"), _as_binary(truth, "truth")
    if p.shape != t.shape:
        raise DimensionError(f"confusion: pred shape {p.shape} != truth shape {t.shape}")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def metrics_from_counts(c: ConfusionCounts, threshold: float = 0.5) -> MetricsReport:
    if c.total <= 0:
        raise ContractError("metrics need at least one evaluated pixel")
    undefined: list[str] = []

    def ratio(name, num, den):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    accuracy = (c.tp + c.tn) / c.total
    jaccard = ratio("jaccard", c.tp, c.tp + c.fp + c.fn)
    precision = ratio("precision", c.tp, c.tp + c.fp)
    recall = ratio("recall", c.tp, c.tp + c.fn)
    if c.tp == 0:
        undefined.append("dice")
        dice = 0.0
    else:
        # 2PR/(P+R) reduces to 2tp/(2tp+fp+fn); the int/int division rounds the
        # exact rational once, so dice and f1 agree bit for bit
        dice = (2 * c.tp) / (2 * c.tp + c.fp + c.fn)
    specificity = ratio("specificity", c.tn, c.tn + c.fp)
    den = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if den == 0:
        undefined.append("mcc")
        mcc = 0.0
    else:
        # exact integer numerator; sqrt of the integer product avoids overflow-prone float products
        mcc = (c.tp * c.tn - c.fp * c.fn) / math.sqrt(den)
        mcc = min(1.0, max(-1.0, mcc))
    return MetricsReport(accuracy, jaccard, precision, recall, dice, specificity, mcc, threshold, undefined)


def evaluate(prob, truth, threshold: float = 0.5) -> MetricsReport:
    return metrics_from_counts(confusion(binarize(prob, threshold), truth), threshold)


def _sweep(scores, truth):
    """Cumulative TP/FP counts at every distinct score, highest threshold first."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = _as_binary(truth, "truth").reshape(-1)
    if s.shape != t.shape:
        raise DimensionError(f"scores ({s.size}) and truth ({t.size}) differ in length")
    order = np.argsort(-s, kind="mergesort")
    s, t = s[order], t[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tps = np.cumsum(t)[last_of_group]
    fps = np.cumsum(~t)[last_of_group]
    return s[last_of_group], tps, fps, int(t.sum()), int((~t).sum())


def roc_curve(scores, truth) -> CurveData:
    thr, tps, fps, pos, neg = _sweep(scores, truth)
    if pos == 0:
        raise ContractError("roc_curve: truth has no positive labels")
    if neg == 0:
        raise ContractError("roc_curve: truth has no negative labels")
    fpr = np.r_[0.0, fps / neg]
    tpr = np.r_[0.0, tps / pos]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return CurveData("roc", list(zip(fpr.tolist(), tpr.tolist())), [math.inf] + thr.tolist(), auc)


def pr_curve(scores, truth) -> CurveData:
    """(recall, precision) at each distinct threshold.

    The area integrates over recall from 0, holding the first point's
    precision constant between recall 0 and its recall.
    """
    thr, tps, fps, pos, _ = _sweep(scores, truth)
    if pos == 0:
        raise ContractError("pr_curve: truth has no positive labels")
    recall = tps / pos
    precision = tps / (tps + fps)
    r = np.r_[0.0, recall]
    p = np.r_[precision[0], precision]
    auc = float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2))
    return CurveData("pr", list(zip(recall.tolist(), precision.tolist())), thr.tolist(), auc)


def subsample_pixels(scores: np.ndarray, truth: np.ndarray, limit: int, rng: np.random.Generator):
    """Uniform pixel subsample for curve construction on large evaluations."""
    s, t = np.asarray(scores).reshape(-1), np.asarray(truth).reshape(-1)
    if s.size <= limit:
        return s, t
    idx = rng.choice(s.size, size=limit, replace=False)
    return s[idx], t[idx]
