"""Dataset statistics: drivable-pixel fractions, pooled t-test, Bartlett's test, Jaccard aggregation."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from caunet.errors import ContractError, DimensionError

ALPHA = 0.05
_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


# -- special functions -------------------------------------------------------------
def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"betainc: x={x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_continued_fraction(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_continued_fraction(b, a, 1.0 - x) / b


def _gamma_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"gamma series did not converge (a={a}, x={x})")


def _gamma_continued_fraction(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = b + an / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise ArithmeticError(f"gamma continued fraction did not converge (a={a}, x={x})")


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("gammainc needs a > 0")
    if x < 0:
        raise ValueError("gammainc needs x >= 0")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_continued_fraction(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), without cancellation for large x."""
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_continued_fraction(a, x)


def student_t_cdf(t: float, df: float) -> float:
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def student_t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


def chi2_cdf(x: float, k: float) -> float:
    return gammainc_lower(k / 2.0, x / 2.0) if x > 0 else 0.0


def chi2_sf(x: float, k: float) -> float:
    return gammainc_upper(k / 2.0, x / 2.0) if x > 0 else 1.0


# -- tests --------------------------------------------------------------------------
@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: float
    alpha: float = ALPHA

    __test__ = False  # keep pytest from collecting this class

    @property
    def reject_null(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reject_null"] = self.reject_null
        return d


def _sample(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size < 2:
        raise ContractError(f"{name} needs at least 2 observations, got {arr.size}")
    return arr


def t_test(x: Sequence[float], y: Sequence[float], alpha: float = ALPHA) -> TestResult:
    """Two-sample Student t-test with pooled variance; two-sided p."""
    xs, ys = _sample(x, "x"), _sample(y, "y")
    nx, ny = xs.size, ys.size
    df = nx + ny - 2
    diff = xs.mean() - ys.mean()
    pooled = ((nx - 1) * xs.var(ddof=1) + (ny - 1) * ys.var(ddof=1)) / df
    se = math.sqrt(pooled * (1.0 / nx + 1.0 / ny))
    if diff == 0.0:
        return TestResult(0.0, 1.0, df, alpha)
    if se == 0.0:
        return TestResult(math.copysign(math.inf, diff), 0.0, df, alpha)
    t = float(diff / se)
    return TestResult(t, student_t_two_sided_p(t, df), df, alpha)


def bartlett(x: Sequence[float], y: Sequence[float], alpha: float = ALPHA) -> TestResult:
    """Bartlett's equal-variance test for two samples; upper-tail chi-square p with 1 df."""
    xs, ys = _sample(x, "x"), _sample(y, "y")
    nx, ny = xs.size, ys.size
    vx, vy = xs.var(ddof=1), ys.var(ddof=1)
    if vx <= 0 or vy <= 0:
        raise ContractError("bartlett: both samples need positive variance")
    if vx == vy:
        return TestResult(0.0, 1.0, 1, alpha)
    n = nx + ny - 2
    pooled = ((nx - 1) * vx + (ny - 1) * vy) / n
    num = n * math.log(pooled) - ((nx - 1) * math.log(vx) + (ny - 1) * math.log(vy))
    den = 1.0 + (1.0 / 3.0) * (1.0 / (nx - 1) + 1.0 / (ny - 1) - 1.0 / n)
    stat = max(num, 0.0) / den
    return TestResult(stat, chi2_sf(stat, 1), 1, alpha)


# -- masks ----------------------------------------------------------------------------
@dataclass(frozen=True)
class PixelFractionSample:
    drivable_fraction: float
    nondrivable_fraction: float


def drivable_fraction(mask: np.ndarray) -> PixelFractionSample:
    m = np.asarray(mask)
    if m.size == 0:
        raise ContractError("drivable_fraction: empty mask")
    if not np.isin(m, (0, 1)).all():
        raise ContractError("drivable_fraction: mask must be binary")
    ones = int(np.count_nonzero(m))
    return PixelFractionSample(ones / m.size, (m.size - ones) / m.size)


def jaccard_pair(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionError(f"jaccard_pair: shapes {a.shape} and {b.shape} differ")
    inter = int(np.count_nonzero(a & b))
    denom = int(np.count_nonzero(a)) + int(np.count_nonzero(b)) - inter
    return 1.0 if denom == 0 else inter / denom


def jaccard_aggregate(pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean pairwise Jaccard index."""
    values = [jaccard_pair(a, b) for a, b in pairs]
    if not values:
        raise ContractError("jaccard_aggregate needs at least one pair")
    return float(np.mean(values))


def sample_pairs(xs: Sequence, ys: Sequence, n: int, rng: np.random.Generator) -> list[tuple]:
    """Draw ``n`` (x, y) pairs uniformly with replacement."""
    if not xs or not ys:
        raise ContractError("sample_pairs needs non-empty collections")
    ix = rng.integers(0, len(xs), size=n)
    iy = rng.integers(0, len(ys), size=n)
    return [(xs[i], ys[j]) for i, j in zip(ix, iy)]


# -- dataset-level reporting ----------------------------------------------------------
def city_distribution(index) -> dict[tuple[str, str], int]:
    """Frame counts grouped by (split, city), in sorted order."""
    counts = Counter((e.split, e.city) for e in index.entries)
    return dict(sorted(counts.items()))


def write_city_distribution(counts: dict[tuple[str, str], int], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "city", "count"])
        for (split, city), n in counts.items():
            w.writerow([split, city, n])


def compare_splits(masks_a: Sequence[np.ndarray], masks_b: Sequence[np.ndarray], n_pairs: int = 500,
                   seed: int = 0, alpha: float = ALPHA) -> dict:
    """All split-comparison statistics for two collections of equally-sized binary masks."""
    fa = [drivable_fraction(m) for m in masks_a]
    fb = [drivable_fraction(m) for m in masks_b]
    da, db = [f.drivable_fraction for f in fa], [f.drivable_fraction for f in fb]
    na, nb = [f.nondrivable_fraction for f in fa], [f.nondrivable_fraction for f in fb]
    report: dict = {"n_a": len(fa), "n_b": len(fb), "alpha": alpha}
    report["t_test"] = {"drivable": t_test(da, db, alpha).to_dict(), "nondrivable": t_test(na, nb, alpha).to_dict()}
    try:
        report["bartlett"] = {"drivable": bartlett(da, db, alpha).to_dict(),
                              "nondrivable": bartlett(na, nb, alpha).to_dict()}
    except ContractError as exc:
        report["bartlett"] = {"error": str(exc)}
    pairs = sample_pairs(list(masks_a), list(masks_b), n_pairs, np.random.default_rng(seed))
    report["jaccard"] = {"n_pairs": n_pairs, "seed": seed, "mean": jaccard_aggregate(pairs)}
    report["scatter"] = ([("a", f.drivable_fraction, f.nondrivable_fraction) for f in fa]
                         + [("b", f.drivable_fraction, f.nondrivable_fraction) for f in fb])
    return report
