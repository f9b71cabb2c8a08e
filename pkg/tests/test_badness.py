import math
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import ddist, dsqrt, weighted_min
from twistlab.badness import (
    check_weights,
    inhomogeneous_min,
    liminf_estimate,
    one_dim_profile,
    profile,
    weighted_value,
)
from twistlab.errors import InvalidParameter
from twistlab.realnum import GOLDEN, SQRT2, SQRT3, Quadratic, Rational

X = (SQRT2, SQRT3)
# exhaustive 80-digit scan over q <= 1000, frozen
GOLDEN_C_1000 = 0.012191495957863866
GOLDEN_ARGMIN_1000 = 41


def test_weights_must_sum_to_one():
    with pytest.raises(InvalidParameter, match="i \\+ j = 1"):
        check_weights(0.5, 0.6)
    with pytest.raises(InvalidParameter):
        check_weights(0.0, 1.0)


def test_rational_pair_is_flagged_degenerate():
    prof = profile((Rational(1, 3), Rational(1, 3)), 0.5, 0.5, 10)
    assert prof.rational_degeneracy
    assert prof.c_estimate == 0 and prof.argmin == 3


def test_quadratic_pair_against_decimal_oracle():
    v, q = weighted_min(dsqrt(2), dsqrt(3), 0.5, 0.5, 1000)
    assert q == GOLDEN_ARGMIN_1000
    assert float(v) == pytest.approx(GOLDEN_C_1000, rel=1e-14)
    prof = profile(X, 0.5, 0.5, 1000)
    assert prof.argmin == GOLDEN_ARGMIN_1000
    assert prof.c_estimate == pytest.approx(GOLDEN_C_1000, rel=1e-12)


def test_asymmetric_weights_against_decimal_oracle():
    v, q = weighted_min(dsqrt(2), dsqrt(3), 0.25, 0.75, 300)
    prof = profile(X, 0.25, 0.75, 300)
    assert prof.argmin == q
    assert prof.c_estimate == pytest.approx(float(v), rel=1e-9)


def test_profile_is_monotone_in_scan_limit():
    assert profile(X, 0.5, 0.5, 100).c_estimate >= profile(X, 0.5, 0.5, 1000).c_estimate


def test_records_strictly_decrease():
    prof = profile(X, 0.3, 0.7, 20_000)
    qs = [q for q, _ in prof.records]
    vs = [v for _, v in prof.records]
    assert qs == sorted(qs) and all(a > b for a, b in zip(vs, vs[1:]))
    assert prof.records_csv().startswith("q,v_q\n")


@settings(max_examples=25, deadline=None)
@given(q=st.integers(1, 10**9))
def test_weighted_value_encloses_oracle(q):
    iv = weighted_value(X, q, 0.5, 0.5)
    oracle = q * max(ddist(q * dsqrt(2)), ddist(q * dsqrt(3))) ** 2
    lo = Decimal(iv.lo.numerator) / Decimal(iv.lo.denominator)
    hi = Decimal(iv.hi.numerator) / Decimal(iv.hi.denominator)
    assert lo <= oracle <= hi


def test_golden_ratio_small_scan():
    recs = one_dim_profile(GOLDEN, 10)
    # q = 1 gives 0.382; the quoted minimum is over the records after the first
    oracle = min((q * ddist(q * (1 + dsqrt(5)) / 2), q) for q in range(2, 11))
    q, v = liminf_estimate(recs)
    assert q == oracle[1] == 3
    assert v == pytest.approx(float(oracle[0]), abs=1e-12)
    assert v == pytest.approx(0.4376941, abs=1e-7)


def test_golden_ratio_records_approach_hurwitz_constant():
    recs = one_dim_profile(GOLDEN, 6765)  # F_20
    fib = {1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233, 377, 610, 987, 1597, 2584, 4181, 6765}
    assert {q for q, _ in recs} <= fib
    _, v = liminf_estimate(recs)
    assert 0 < 1 / math.sqrt(5) - v < 1e-5
    below = [v for _, v in recs[2:] if v < 1 / math.sqrt(5)]
    assert below == sorted(below) and 0 < 1 / math.sqrt(5) - below[-1] < 1e-8


def test_sqrt2_liminf():
    _, v = liminf_estimate(one_dim_profile(SQRT2, 10**6))
    assert v == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-5)


def test_inhomogeneous_reduces_to_homogeneous_at_zero():
    recs = one_dim_profile(GOLDEN, 1000)
    v, q = inhomogeneous_min(GOLDEN, 0, 1000)
    assert (q, v) == pytest.approx(min(recs, key=lambda r: r[1]), rel=1e-12)


def test_inhomogeneous_golden_half():
    v, q = inhomogeneous_min(GOLDEN, Fraction(1, 2), 10**4)
    oracle = min(r * ddist(r * (1 + dsqrt(5)) / 2 - Decimal("0.5")) for r in range(1, 10**4 + 1))
    assert v <= 0.45
    assert v == pytest.approx(float(oracle), rel=1e-12)


def test_inhomogeneous_rational_hits_zero():
    x = Rational(3, 7)
    assert inhomogeneous_min(x, Fraction(3, 7), 50) == (0.0, 1)


def test_profile_rejects_bad_scan_limit():
    with pytest.raises(InvalidParameter):
        profile(X, 0.5, 0.5, 0)
    with pytest.raises(InvalidParameter):
        one_dim_profile(Quadratic(0, 1, 7), 0)
