import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fimcheck import stats_core as sc
from fimcheck.stats_core import Undefined, UndefinedReason


# ---------------------------------------------------------------------------
# mean

@pytest.mark.parametrize("a, expected", [([1, 2, 3], 2.0), ([5], 5.0)])
def test_mean_examples(a, expected):
    assert sc.mean(a) == expected


def test_mean_matches_exact_rational(rng):
    a = rng.uniform(-1e3, 1e3, size=50)
    exact = float(sum(Fraction(float(x)) for x in a) / len(a))
    assert sc.mean(a) == pytest.approx(exact, rel=1e-12)


# ---------------------------------------------------------------------------
# sort / count / index_set / rank

def naive_sort(values):
    out = list(values)
    for i in range(len(out)):
        for j in range(len(out) - 1 - i):
            if out[j] > out[j + 1]:
                out[j], out[j + 1] = out[j + 1], out[j]
    return out


def test_sort_examples():
    assert sc.sort([3, 1, 2]).tolist() == [1, 2, 3]
    assert sc.sort([2, 1, 2]).tolist() == [1, 2, 2]


def test_sort_against_quadratic_oracle(rng):
    a = rng.integers(0, 50, size=1000).astype(float)  # plenty of duplicates
    a[::7] = a[0]
    out = sc.sort(a)
    assert np.all(np.diff(out) >= 0)
    assert out.tolist() == naive_sort(a.tolist())
    for v in np.unique(a):
        assert sc.count(v, out) == sc.count(v, a)


def test_count_examples():
    assert sc.count(2, [1, 2, 2, 3]) == 2
    assert sc.count(9, [1, 2, 2, 3]) == 0


def test_count_against_scan(rng):
    for _ in range(100):
        a = rng.integers(0, 5, size=rng.integers(1, 30)).astype(float)
        probe = float(rng.integers(0, 6))
        assert sc.count(probe, a) == sum(1 for x in a if x == probe)


def test_count_is_exact_equality():
    assert sc.count(0.1 + 0.2, [0.3, 0.30000000000000004]) == 1


def test_index_set_examples():
    assert sc.index_set(2, [1, 2, 2, 3]) == {2, 3}
    assert sc.index_set(1, [1, 2, 2, 3]) == {1}
    assert sc.index_set(7, [1, 2, 2, 3]) == set()


@pytest.mark.parametrize("a, s, expected", [(2, [1, 2, 2, 3], 2.5), (1, [1, 1, 1], 2.0), (3, [3, 1, 2], 3.0)])
def test_rank_examples(a, s, expected):
    assert sc.rank(a, s) == expected


def test_rank_absent():
    with pytest.raises(sc.ElementAbsent):
        sc.rank(4, [1, 2, 3])


def test_ranks_examples():
    assert sc.ranks([10, 20, 30]).tolist() == [1, 2, 3]
    assert sc.ranks([1, 2, 2, 3]).tolist() == [1, 2.5, 2.5, 4]
    assert sc.ranks([4, 4, 4, 4]).tolist() == [2.5] * 4


def test_ranks_equal_elementwise_rank(rng):
    for _ in range(50):
        a = rng.integers(0, 8, size=rng.integers(1, 25)).astype(float)
        assert sc.ranks(a).tolist() == [sc.rank(x, a) for x in a]


def test_ranks_against_counting_identity(rng):
    a = rng.integers(0, 40, size=200).astype(float)
    expected = [sum(1 for y in a if y < x) + (sum(1 for y in a if y == x) + 1) / 2 for x in a]
    assert sc.ranks(a).tolist() == expected


def test_rank_rows_matches_per_row(rng):
    x = rng.integers(0, 6, size=(40, 17)).astype(float)
    rows = sc.rank_rows(x)
    for i in range(x.shape[0]):
        assert np.array_equal(rows[i], sc.ranks(x[i]))


# ---------------------------------------------------------------------------
# pearson / spearman / quadrant examples

def test_pearson_examples():
    assert sc.pearson([1, 2, 3], [2, 4, 6]) == 1.0
    assert sc.pearson([1, 2, 3], [6, 4, 2]) == -1.0
    assert sc.pearson([1, 2, 3], [7, 7, 7]) == Undefined(UndefinedReason.ZERO_VARIANCE_RIGHT)
    assert sc.pearson([7, 7, 7], [1, 2, 3]) == Undefined(UndefinedReason.ZERO_VARIANCE_LEFT)


# frozen from exact rational sums and a 40-digit square root
@pytest.mark.parametrize(
    "a, b, expected",
    [
        ([1, 2, 3, 4, 5], [2, 1, 4, 3, 5], 0.8),
        ([0.5, -1.25, 3.0, 2.0, 7.5, -4.0], [1.0, 0.0, 2.5, 2.5, -3.0, 6.0], -0.7663351837201522),
        ([1000.1, 1000.3, 999.8, 1000.0, 1000.6, 999.9, 1000.2], [0, 0, 1, 1, 0, 1, 1], -0.7119361419224303),
    ],
)
def test_pearson_frozen_values(a, b, expected):
    assert sc.pearson(a, b) == pytest.approx(expected, rel=1e-13, abs=1e-15)


def test_constant_with_inexact_mean_is_undefined():
    # the computed mean of [0.1]*3 is not exactly 0.1
    assert isinstance(sc.pearson([0.1] * 3, [1, 2, 3]), Undefined)


@pytest.mark.parametrize("a, b", [([1, 2], [1, 2, 3]), ([1], [1])])
def test_pearson_errors(a, b):
    with pytest.raises((sc.LengthMismatch, sc.TooShort)):
        sc.pearson(a, b)


def test_non_finite_input():
    with pytest.raises(sc.NonFiniteInput):
        sc.pearson([1, np.nan, 3], [1, 2, 3])


def test_spearman_examples():
    assert sc.spearman([1, 2, 3], [1, 8, 27]) == 1.0
    assert sc.spearman([1, 2, 3], [9, 4, 1]) == -1.0
    assert sc.spearman([1, 2, 2, 3], [1, 3, 2, 4]) == pytest.approx(0.9486832980505138, rel=1e-13)
    assert sc.spearman([3, 1, 4, 1, 5, 9, 2, 6], [2, 7, 1, 8, 2, 8, 1, 8]) == pytest.approx(
        0.19885368120992464, rel=1e-13)
    assert isinstance(sc.spearman([4, 4, 4], [1, 2, 3]), Undefined)


def test_quadrant_examples():
    assert sc.quadrant([1, 2, 3, 4], [2, 3, 5, 9]) == 1.0
    assert sc.quadrant([1, 2, 3, 4], [9, 5, 3, 2]) == -1.0
    assert sc.quadrant([1, 2, 2], [5, 1, 3]) == pytest.approx(-2 / 3, abs=0)
    assert sc.quadrant([3, 1, 4, 1, 5, 9, 2, 6], [2, 7, 1, 8, 2, 8, 1, 9]) == 0.0
    assert sc.quadrant([1, 2, 2, 3], [2, 3, 1, 2]) == Undefined(UndefinedReason.NO_SIGN_PRODUCTS)
    assert sc.quadrant([5, 5, 5, 5], [1, 2, 3, 4]) == Undefined(UndefinedReason.ZERO_VARIANCE_LEFT)


def brute_quadrant(a, b):
    n = len(a)
    mid = Fraction(n + 1, 2)

    def r(x, s):
        return sum(1 for y in s if y < x) + Fraction(sum(1 for y in s if y == x) + 1, 2)

    def sgn(v):
        return (v > 0) - (v < 0)

    prods = [sgn(r(x, a) - mid) * sgn(r(y, b) - mid) for x, y in zip(a, b)]
    return None if not any(prods) else sum(prods) / n


def test_quadrant_against_sign_enumeration(rng):
    for _ in range(300):
        n = int(rng.integers(2, 15))
        a = rng.integers(0, 4, size=n).astype(float)
        b = rng.integers(0, 4, size=n).astype(float)
        got = sc.quadrant(a, b)
        want = brute_quadrant(a.tolist(), b.tolist())
        if want is None:
            assert isinstance(got, Undefined)
        else:
            assert got == want


# ---------------------------------------------------------------------------
# properties

series = st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False), min_size=2, max_size=40)


def pair(min_size=2, max_size=40):
    return st.integers(min_size, max_size).flatmap(
        lambda n: st.tuples(
            st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=n, max_size=n),
            st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=n, max_size=n),
        )
    )


def tied(n_max=40):
    """Small-integer series: ties are the norm."""
    return st.lists(st.integers(-3, 3).map(float), min_size=2, max_size=n_max)


def tied_pair():
    return st.integers(2, 30).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(-3, 3).map(float), min_size=n, max_size=n),
            st.lists(st.integers(-3, 3).map(float), min_size=n, max_size=n),
        )
    )


def nonconstant(a):
    return len(set(a)) > 1


@given(pair())
def test_range_and_symmetry(ab):
    a, b = ab
    for f in (sc.pearson, sc.spearman, sc.quadrant):
        r1, r2 = f(a, b), f(b, a)
        if isinstance(r1, Undefined):
            assert isinstance(r2, Undefined)
            continue
        assert -1.0 <= r1 <= 1.0
        assert r1 == r2


@given(series)
def test_self_correlation(a):
    assume(nonconstant(a))
    r = sc.pearson(a, a)
    assert r == 1.0


@given(pair(3), st.floats(-100, 100).filter(lambda x: abs(x) > 1e-3), st.floats(-1e3, 1e3))
def test_affine_equivariance(ab, alpha, beta):
    a, b = (np.array(v) for v in ab)
    assume(np.ptp(a) > 1e-3 and np.ptp(b) > 1e-3)
    r = sc.pearson(a, b)
    r2 = sc.pearson(alpha * a + beta, b)
    assert not isinstance(r, Undefined)
    assert r2 == pytest.approx(math.copysign(1.0, alpha) * r, abs=1e-9)


@given(tied())
def test_rank_sum(a):
    n = len(a)
    assert abs(sc.ranks(a).sum() - n * (n + 1) / 2) <= 1e-9
    r = sc.ranks(a)
    assert r.min() >= 1 and r.max() <= n


@given(tied())
def test_equal_values_equal_ranks(a):
    r = sc.ranks(a)
    for i, j in itertools.combinations(range(len(a)), 2):
        if a[i] == a[j]:
            assert r[i] == r[j]
        elif a[i] < a[j]:
            assert r[i] < r[j]


MONOTONE = [np.exp, np.cbrt, lambda x: 3.0 * x - 2.0, lambda x: x ** 3 + x]


@given(tied_pair(), st.sampled_from(range(len(MONOTONE))), st.sampled_from(range(len(MONOTONE))))
def test_monotone_invariance(ab, fi, gi):
    a, b = (np.array(v) for v in ab)
    f, g = MONOTONE[fi], MONOTONE[gi]
    assert np.array_equal(sc.ranks(f(a)), sc.ranks(a))
    assert sc.spearman(f(a), g(b)) == sc.spearman(a, b)


@given(tied_pair())
def test_spearman_is_pearson_of_ranks(ab):
    a, b = ab
    assert sc.spearman(a, b) == sc.pearson(sc.ranks(a), sc.ranks(b))


@settings(max_examples=200)
@given(st.integers(1, 200).flatmap(lambda m: st.tuples(st.just(m), st.integers(0, m - 1))), st.integers(0, 2**32 - 1))
def test_row_kernel_matches_scalar(mi, seed):
    m, i = mi
    rng = np.random.default_rng(seed)
    x = 1000 + rng.standard_normal((m, 37))
    y = rng.standard_normal(37)
    for stat, scalar in (("pearson", sc.pearson), ("spearman", sc.spearman), ("quadrant", sc.quadrant)):
        values, codes = sc.STATISTICS[stat](x, y)
        assert codes[i] == 0
        assert values[i] == scalar(x[i], y)


def test_clamp_tolerance():
    assert sc._clamp(np.array([1.0 + 2 * sc.EPS]))[0] == 1.0
    with pytest.raises(sc.ConsistencyError):
        sc._clamp(np.array([1.0 + 16 * sc.EPS]))


def test_tiny_and_huge_scales_stay_defined():
    a = np.array([1.0, 2.0, 4.0, 3.0])
    b = np.array([2.0, 1.0, 5.0, 3.0])
    ref = sc.pearson(a, b)
    assert sc.pearson(a * 1e-160, b * 1e-160) == pytest.approx(ref, rel=1e-12)
    assert sc.pearson(a * 1e150, b * 1e150) == pytest.approx(ref, rel=1e-12)
