import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.special as sc
from hypothesis import given, settings
from hypothesis import strategies as st

from caunet.errors import ContractError, DimensionError
from caunet.stats import (
    bartlett,
    betainc,
    chi2_cdf,
    chi2_sf,
    city_distribution,
    compare_splits,
    drivable_fraction,
    gammainc_lower,
    jaccard_aggregate,
    jaccard_pair,
    student_t_cdf,
    student_t_two_sided_p,
    t_test,
    write_city_distribution,
)

# Textbook two-sample datasets with reference values from a 50-digit mpmath
# evaluation: (t, two-sided p, Bartlett K^2, upper-tail p).
CANONICAL = {
    "sleep": (
        [0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0],
        [1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4],
        (-1.8608134674868531, 0.079186714215938111, 0.10789210747557962, 0.74255682240590383),
    ),
    "plant_growth_ctrl_trt1": (
        [4.17, 5.58, 5.18, 6.11, 4.50, 4.61, 5.17, 4.53, 5.33, 5.14],
        [4.81, 4.17, 4.41, 3.59, 5.87, 3.83, 6.03, 4.89, 4.32, 4.69],
        (1.1912603818487024, 0.24902316597300601, 0.79805306676491895, 0.37167610875498465),
    ),
    "mtcars_mpg_by_am": (
        [21.4, 18.7, 18.1, 14.3, 24.4, 22.8, 19.2, 17.8, 16.4, 17.3, 15.2, 10.4, 10.4, 14.7, 21.5, 15.5,
         15.2, 13.3, 19.2],
        [21.0, 21.0, 22.8, 32.4, 30.4, 33.9, 27.3, 26.0, 30.4, 15.8, 19.7, 15.0, 21.4],
        (-4.1061269831006907, 0.00028502074393506671, 3.2258823148923597, 0.072482726653259682),
    ),
}


def bartlett_by_substitution(x, y):
    """Direct substitution into the two-sample Bartlett formula."""
    nx, ny = len(x), len(y)
    vx, vy = np.var(x, ddof=1), np.var(y, ddof=1)
    n = nx + ny
    sp = ((nx - 1) * vx + (ny - 1) * vy) / (n - 2)
    num = (n - 2) * math.log(sp) - (nx - 1) * math.log(vx) - (ny - 1) * math.log(vy)
    den = 1 + (1 / (3 * (2 - 1))) * ((1 / (nx - 1) + 1 / (ny - 1)) - 1 / (n - 2))
    return num / den


# -- special functions -------------------------------------------------------


@pytest.mark.parametrize("df", range(1, 101))
def test_student_t_cdf_against_scipy(df):
    for t in (-40.0, -3.3, -1.0, -0.05, 0.0, 0.4, 2.0, 7.5):
        assert abs(student_t_cdf(t, df) - sc.stdtr(df, t)) < 1e-10
        assert abs(student_t_two_sided_p(t, df) - sc.betainc(df / 2, 0.5, df / (df + t * t))) < 1e-10


@pytest.mark.parametrize("k", range(1, 101))
def test_chi2_against_scipy(k):
    for x in (1e-3, 0.5, 1.0, k / 2, float(k), 2.0 * k + 5, 4.0 * k + 30):
        assert abs(chi2_cdf(x, k) - sc.gammainc(k / 2, x / 2)) < 1e-10
        assert abs(chi2_sf(x, k) - sc.gammaincc(k / 2, x / 2)) < 1e-10


def test_incomplete_function_edges():
    assert betainc(2.0, 3.0, 0.0) == 0.0 and betainc(2.0, 3.0, 1.0) == 1.0
    assert betainc(1.0, 1.0, 0.3) == pytest.approx(0.3, abs=1e-15)
    assert gammainc_lower(1.0, 2.0) == pytest.approx(1 - math.exp(-2.0), abs=1e-15)
    assert student_t_cdf(0.0, 5) == 0.5
    with pytest.raises(ValueError):
        betainc(1.0, 1.0, 1.5)


# -- t-test ------------------------------------------------------------------


def test_t_test_hand_example():
    r = t_test([1, 2, 3, 4, 5], [2, 4, 6])
    assert abs(r.statistic - (-1 / math.sqrt(1.6))) < 1e-10
    assert r.df == 6
    assert r.alpha == 0.05


def test_t_test_identical_samples_exact():
    r = t_test([0.3, 1.7, 2.2], [0.3, 1.7, 2.2])
    assert (r.statistic, r.p_value) == (0.0, 1.0)
    assert not r.reject_null


@pytest.mark.parametrize("name", list(CANONICAL))
def test_canonical_datasets(name):
    x, y, (t_ref, p_ref, k_ref, pk_ref) = CANONICAL[name]
    t = t_test(x, y)
    assert abs(t.statistic - t_ref) < 1e-6 and abs(t.p_value - p_ref) < 1e-4
    b = bartlett(x, y)
    assert abs(b.statistic - k_ref) < 1e-6 and abs(b.p_value - pk_ref) < 1e-4


def test_t_test_scale_invariance():
    x, y = [1.0, 2.5, 3.1, 4.0], [2.2, 0.4, 1.9]
    assert t_test(np.multiply(x, 7.5), np.multiply(y, 7.5)).statistic == pytest.approx(t_test(x, y).statistic,
                                                                                       rel=1e-12)


def test_t_test_needs_two_observations():
    with pytest.raises(ContractError):
        t_test([1.0], [1.0, 2.0])


def test_t_test_zero_spread_with_distinct_means():
    r = t_test([1.0, 1.0], [2.0, 2.0])
    assert r.statistic == -math.inf and r.p_value == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=12), st.floats(0.01, 3.0), st.floats(3.0, 8.0))
def test_t_p_monotone_in_abs_statistic(base, small, large):
    df = len(base)
    assert student_t_two_sided_p(large, df) <= student_t_two_sided_p(small, df)
    assert 0.0 <= student_t_two_sided_p(small, df) <= 1.0


# -- Bartlett ----------------------------------------------------------------


def test_bartlett_hand_example():
    x, y = [1, 2, 3, 4], [2, 4, 6, 8]
    # variances 5/3 and 20/3, pooled 25/6
    num = 6 * math.log(25 / 6) - 3 * math.log(5 / 3) - 3 * math.log(20 / 3)
    expected = num / (7 / 6)
    r = bartlett(x, y)
    assert abs(r.statistic - expected) < 1e-10
    assert abs(r.statistic - bartlett_by_substitution(x, y)) < 1e-10
    assert r.df == 1


def test_bartlett_equal_variance_exact():
    r = bartlett([1.0, 2.0, 3.0], [10.0, 11.0, 12.0])
    assert (r.statistic, r.p_value) == (0.0, 1.0)


def test_bartlett_symmetry_and_zero_variance():
    x, y = [1.0, 4.0, 2.0, 8.0], [3.0, 3.5, 2.0]
    assert bartlett(x, y).statistic == pytest.approx(bartlett(y, x).statistic, rel=1e-14)
    with pytest.raises(ContractError):
        bartlett([2.0, 2.0, 2.0], [1.0, 2.0])


# -- masks and Jaccard -------------------------------------------------------


def test_drivable_fraction_examples():
    assert drivable_fraction(np.ones((3, 4))) == drivable_fraction(np.ones(5))
    assert (drivable_fraction(np.ones((2, 2))).drivable_fraction, drivable_fraction(np.zeros((2, 2))).drivable_fraction) == (1.0, 0.0)
    m = np.zeros(8, dtype=np.uint8)
    m[[1, 4, 6]] = 1
    f = drivable_fraction(m)
    assert (f.drivable_fraction, f.nondrivable_fraction) == (0.375, 0.625)
    with pytest.raises(ContractError):
        drivable_fraction(np.array([0, 3]))


def test_jaccard_pair_examples():
    a = np.zeros((4, 4), bool)
    a[0, :] = True
    assert jaccard_pair(a, a) == 1.0
    assert jaccard_pair(a, np.roll(a, 2, axis=0)) == 0.0
    b = np.zeros((4, 4), bool)
    b[0, 2:] = True
    b[1, :2] = True
    assert jaccard_pair(a, b) == pytest.approx(1 / 3)
    assert jaccard_pair(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0
    with pytest.raises(DimensionError):
        jaccard_pair(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**16 - 1), st.integers(0, 2**16 - 1))
def test_jaccard_symmetric_bounded(ia, ib):
    a = np.array([(ia >> k) & 1 for k in range(16)], bool).reshape(4, 4)
    b = np.array([(ib >> k) & 1 for k in range(16)], bool).reshape(4, 4)
    j = jaccard_pair(a, b)
    assert j == jaccard_pair(b, a) and 0.0 <= j <= 1.0
    if a.any() or b.any():
        assert (j == 1.0) == (ia == ib)


def test_jaccard_aggregate_examples():
    a, z = np.ones((2, 2)), np.zeros((2, 2))
    assert jaccard_aggregate([(a, a)]) == 1.0
    assert jaccard_aggregate([(a, a), (a, z)]) == 0.5
    with pytest.raises(ContractError):
        jaccard_aggregate([])


def test_jaccard_aggregate_500_seeded_pairs_matches_loop():
    rng = np.random.default_rng(11)
    pairs = [(rng.random((12, 10)) < 0.5, rng.random((12, 10)) < 0.4) for _ in range(500)]
    total = 0.0
    for a, b in pairs:
        inter = sum(1 for u, v in zip(a.ravel(), b.ravel()) if u and v)
        union = sum(1 for u, v in zip(a.ravel(), b.ravel()) if u or v)
        total += inter / union if union else 1.0
    assert jaccard_aggregate(pairs) == pytest.approx(total / 500, abs=1e-12)


def test_city_distribution(tmp_path):
    entries = [SimpleNamespace(split="train", city=c) for c in ["b", "a", "a", "b", "a", "b"]]
    counts = city_distribution(SimpleNamespace(entries=entries))
    assert counts == {("train", "a"): 3, ("train", "b"): 3}
    assert city_distribution(SimpleNamespace(entries=[])) == {}
    write_city_distribution(counts, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines() == ["split,city,count", "train,a,3", "train,b,3"]


def test_compare_splits_report():
    rng = np.random.default_rng(0)
    a = [rng.random((8, 8)) < rng.uniform(0.2, 0.6) for _ in range(10)]
    b = [rng.random((8, 8)) < rng.uniform(0.2, 0.6) for _ in range(7)]
    rep = compare_splits(a, b, n_pairs=50, seed=3)
    assert rep["n_a"] == 10 and rep["n_b"] == 7 and len(rep["scatter"]) == 17
    # drivable and non-drivable fractions are complements, so the t statistics mirror
    assert rep["t_test"]["drivable"]["statistic"] == pytest.approx(-rep["t_test"]["nondrivable"]["statistic"])
    assert rep == compare_splits(a, b, n_pairs=50, seed=3)
