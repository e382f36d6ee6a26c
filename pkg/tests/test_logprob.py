import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from launchline.logprob import (
    NEG_INF,
    AllZeroWeights,
    from_log,
    lw_add,
    lw_mul,
    lw_prod,
    lw_sum,
    normalize_weights,
    to_log,
)

finite = st.floats(min_value=-1e6, max_value=1e3, allow_nan=False)


def test_mul_of_halves():
    assert lw_mul(math.log(0.5), math.log(0.5)) == pytest.approx(math.log(0.25), rel=1e-15)


def test_mul_zero_absorbs():
    assert lw_mul(NEG_INF, 3.0) == NEG_INF
    assert lw_mul(-2.0, NEG_INF) == NEG_INF


def test_long_product_stays_finite():
    n = 68_430
    v = lw_prod([math.log(1 / 343)] * n)
    assert math.isfinite(v)
    assert v == pytest.approx(-n * math.log(343), rel=1e-12)
    # the same product in linear arithmetic underflows to exactly zero
    assert (1 / 343) ** n == 0.0


def test_sum_of_equal_terms():
    assert lw_sum([-3.0, -3.0]) == pytest.approx(-3.0 + math.log(2), rel=1e-15)


def test_sum_with_zero_term():
    assert lw_sum([0.0, NEG_INF]) == 0.0


def test_sum_of_many_tiny_terms():
    v = lw_sum(np.full(1000, -1e6))
    assert v == pytest.approx(-1e6 + math.log(1000), rel=1e-15)


def test_sum_edge_cases():
    assert lw_sum([]) == NEG_INF
    assert lw_sum([NEG_INF, NEG_INF]) == NEG_INF
    assert lw_add(NEG_INF, -4.0) == -4.0
    assert lw_add(-4.0, NEG_INF) == -4.0


def test_normalize_simple():
    np.testing.assert_allclose(normalize_weights([0.0, math.log(3)]), [0.25, 0.75], rtol=1e-14)


def test_normalize_shifted_equal():
    np.testing.assert_allclose(normalize_weights([-1e6, -1e6]), [0.5, 0.5], rtol=1e-15)


def test_normalize_boltzmann_weights_against_exact_rationals():
    k = 150
    costs = [800_000, 800_001, 800_003]
    logw = [-k * c for c in costs]
    # linear-domain evaluation collapses to zeros
    assert all(math.exp(v) == 0.0 for v in logw)
    w = normalize_weights(logw)
    # exp(-k c) / sum; shift by the minimum so the rationals stay manageable
    mpmath.mp.dps = 60
    base = [mpmath.e ** (-k * (c - costs[0])) for c in costs]
    exact = [b / sum(base) for b in base]
    np.testing.assert_allclose(w, [float(e) for e in exact], rtol=1e-12)
    assert abs(w.sum() - 1.0) < 1e-12


def test_normalize_matches_fraction_oracle_for_rational_weights():
    ws = [Fraction(1, 7), Fraction(2, 9), Fraction(5, 11), Fraction(0)]
    total = sum(ws)
    expected = [float(w / total) for w in ws]
    got = normalize_weights([to_log(float(w)) for w in ws])
    np.testing.assert_allclose(got, expected, rtol=1e-14)
    assert got[-1] == 0.0


def test_normalize_all_zero_raises():
    with pytest.raises(AllZeroWeights):
        normalize_weights([NEG_INF, NEG_INF])


def test_normalize_nan_rejected():
    with pytest.raises(ValueError):
        normalize_weights([0.0, float("nan")])


@given(st.lists(finite, min_size=1, max_size=40), st.floats(-1e5, 1e5))
def test_normalize_shift_invariant(v, c):
    a = normalize_weights(v)
    b = normalize_weights(np.asarray(v) + c)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-300)
    assert abs(a.sum() - 1.0) < 1e-12


@given(st.lists(finite, min_size=1, max_size=40))
def test_sum_bounds(v):
    s = lw_sum(v)
    assert s >= max(v)
    assert s <= max(v) + math.log(len(v)) + 1e-9


@given(finite)
def test_sum_singleton_identity(a):
    assert lw_sum([a]) == a


@given(st.floats(min_value=1e-300, max_value=1.0))
def test_round_trip(p):
    assert from_log(to_log(p)) == pytest.approx(p, rel=1e-12)


@given(finite, finite)
def test_add_matches_sum(a, b):
    assert lw_add(a, b) == pytest.approx(lw_sum([a, b]), rel=1e-12, abs=1e-12)
