import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from _oracles import harmonic
from twistlab.errors import InvalidParameter, OutOfDomain
from twistlab.metric import (
    RegionFamily,
    _int_threshold,
    convergence_check,
    expected_hits,
    gallagher_sum,
    gallagher_tag,
    multiplicative_area,
    region_measure,
    run_mc,
)
from twistlab.psi import CONVERGES, DIVERGES, Constant, LogHarmonic, PowerLaw, parse_psi


def dblquad_area(t):
    """Area of ``|u v| <= t`` on the centred unit square, by quadrature."""
    val, _ = integrate.dblquad(lambda v, u: 1.0, 0, 0.5, 0, lambda u: min(0.5, t / u),
                               epsabs=1e-13, epsrel=1e-12)
    return 4 * val


@pytest.mark.parametrize("t", [1e-4, 1e-3, 1e-2, 0.1, 0.25])
def test_multiplicative_area_against_quadrature(t):
    assert multiplicative_area(t) == pytest.approx(dblquad_area(t), abs=1e-6)


def test_multiplicative_area_domain():
    assert multiplicative_area(0.25) == 1.0
    for t in (0.0, 0.3):
        with pytest.raises(OutOfDomain):
            multiplicative_area(t)


def test_expected_hits_is_half_harmonic():
    f = RegionFamily("interval", PowerLaw(Fraction(1, 4), 1))
    assert expected_hits(f, 1000) == pytest.approx(float(harmonic(1000)) / 2, rel=1e-14)
    assert region_measure(RegionFamily("interval", Constant(1)), 3) == 1.0
    sup = RegionFamily("sup_norm", Constant(Fraction(1, 16)), 0.25, 0.75)
    assert region_measure(sup, 5) == pytest.approx(4 * (1 / 16) ** 0.25 * (1 / 16) ** 0.75)


def test_family_validation():
    with pytest.raises(InvalidParameter):
        RegionFamily("ball", Constant(1))
    with pytest.raises(InvalidParameter):
        RegionFamily("sup_norm", Constant(1), 0.5, 0.6)
    with pytest.raises(InvalidParameter):
        run_mc(RegionFamily("interval", Constant(1)), 999, 10, 0)


@given(st.fractions(0, Fraction(1, 2), max_denominator=10**6))
def test_integer_threshold_is_exact_floor(t):
    n = int(_int_threshold(float(t)))
    exact = Fraction(float(t)) * 2**64
    assert n <= exact < n + 1 or n == 2**63


def test_tiny_psi_gives_no_hits():
    run = run_mc(RegionFamily("interval", Constant(Fraction(1, 10**30))), 2000, 50, 3)
    assert run.mean == 0 and run.counts_max == 0 and all(run.verdicts().values())


def test_interval_run_is_deterministic_and_unbiased():
    f = RegionFamily("interval", PowerLaw(Fraction(1, 4), 1))
    a, b = run_mc(f, 20_000, 200, 7), run_mc(f, 20_000, 200, 7)
    assert a.to_dict() == b.to_dict()
    assert run_mc(f, 20_000, 200, 8).mean != a.mean
    assert all(a.verdicts().values())


@pytest.mark.parametrize("shape,i,j", [("sup_norm", 0.5, 0.5), ("sup_norm", 0.3, 0.7),
                                       ("multiplicative", 0.5, 0.5)])
def test_two_dim_runs_match_expectation(shape, i, j):
    run = run_mc(RegionFamily(shape, PowerLaw(Fraction(1, 8), 1), i, j), 20_000, 100, 1)
    assert abs(run.z) < 4
    assert all(run.verdicts().values())


def test_convergence_check_on_summable_psi():
    out = convergence_check(RegionFamily("interval", PowerLaw(Fraction(1, 4), 2)), 20_000, 10, 400, 2)
    assert out["holds"] and out["fraction_hit"] <= 0.1


def test_gallagher_tags():
    assert gallagher_tag(PowerLaw(1, 2)) == CONVERGES
    assert gallagher_tag(PowerLaw(Fraction(1, 4), 1)) == DIVERGES
    assert gallagher_tag(Constant(Fraction(1, 10))) == DIVERGES
    assert gallagher_tag(LogHarmonic(1)) == DIVERGES


def test_gallagher_sums():
    total, err = gallagher_sum(PowerLaw(1, 2), 10**4)
    oracle = math.fsum(2 * math.log(r) / r**2 for r in range(1, 10**4 + 1))
    assert abs(total - oracle) <= err + 1e-12
    # psi = 1/e makes every term psi log(1/psi) equal to 1/e
    total, _ = gallagher_sum(parse_psi(f"const:C={math.exp(-1)!r}"), 1000)
    assert total == pytest.approx(1000 / math.e, rel=1e-12)
    with pytest.raises(OutOfDomain):
        gallagher_sum(Constant(2), 10)
