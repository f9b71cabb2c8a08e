import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import dfrac, dsqrt, pixel_area
from twistlab.psi import Constant
from twistlab.realnum import SQRT2, SQRT3, Rational, Surd
from twistlab.torusgeo import (
    RectCollection,
    TorusRect,
    concat,
    cover_partner,
    doubled,
    doubling_map,
    measure_error,
    orbit_collection,
    overlapping_pairs,
    pairwise_disjoint,
    point_hits,
    psi_collection,
    rect_for,
    torus_dist,
    union_measure,
)

F = Fraction


def exact(rects):
    return RectCollection.from_rects([TorusRect((F(a), F(b)), (F(c), F(d))) for a, b, c, d in rects])


def compressed_area(rects) -> Fraction:
    """Oracle: split wrapped rects, compress coordinates, test every elementary cell."""
    boxes = []
    for cx, cy, hx, hy in rects:
        xs = [(F(0), F(1))] if 2 * hx >= 1 else _pieces(cx, hx)
        ys = [(F(0), F(1))] if 2 * hy >= 1 else _pieces(cy, hy)
        boxes += [(a, b, c, d) for a, b in xs for c, d in ys]
    ex = sorted({v for b in boxes for v in b[:2]} | {F(0), F(1)})
    ey = sorted({v for b in boxes for v in b[2:]} | {F(0), F(1)})
    area = F(0)
    for x0, x1 in zip(ex, ex[1:]):
        for y0, y1 in zip(ey, ey[1:]):
            mx, my = (x0 + x1) / 2, (y0 + y1) / 2
            if any(a <= mx <= b and c <= my <= d for a, b, c, d in boxes):
                area += (x1 - x0) * (y1 - y0)
    return area


def _pieces(c, h):
    lo, hi = (c - h) % 1, (c + h) % 1
    return [(lo, hi)] if lo < hi else [(lo, F(1)), (F(0), hi)]


def test_rect_for_examples():
    r = rect_for(5, (SQRT2, SQRT3), Constant(F(1, 100)), 0.5, 0.5)
    assert r.half == pytest.approx((0.1, 0.1), abs=1e-16)
    r = rect_for(3, (Rational(1, 3), Rational(1, 3)), Constant(F(1, 100)), 0.5, 0.5)
    assert r.center == (0, 0) and r.half == (F(1, 10), F(1, 10)) and r.label == 3


def test_wrapping_rect_measure():
    assert union_measure(exact([(F(99, 100), F(1, 2), F(1, 20), F(1, 10))])) == F(1, 50)


def test_idempotence():
    r = (F(1, 3), F(1, 7), F(1, 11), F(1, 13))
    assert union_measure(exact([r, r])) == union_measure(exact([r]))


def test_two_rect_example_against_pixel_oracle():
    rects = [(F(1, 10), F(1, 10), F(1, 10), F(1, 10)), (F(1, 4), F(1, 10), F(1, 10), F(1, 10))]
    got = union_measure(exact(rects))
    assert got == F(7, 100)
    assert pixel_area([tuple(map(float, r)) for r in rects], 2000) == pytest.approx(0.07, abs=1e-3)


rect_st = st.tuples(st.fractions(0, 1, max_denominator=40), st.fractions(0, 1, max_denominator=40),
                    st.fractions(F(1, 40), F(3, 5), max_denominator=40),
                    st.fractions(F(1, 40), F(3, 5), max_denominator=40))


@settings(max_examples=60, deadline=None)
@given(st.lists(rect_st, min_size=1, max_size=7))
def test_union_matches_compressed_oracle(rects):
    coll = exact(rects)
    got = union_measure(coll)
    assert got == compressed_area(rects)
    assert got <= coll.measure_sum()


@settings(max_examples=30, deadline=None)
@given(st.lists(rect_st, min_size=1, max_size=6), st.lists(rect_st, min_size=1, max_size=3))
def test_union_is_monotone(a, b):
    assert union_measure(exact(a)) <= union_measure(exact(a + b))


def test_float_union_within_error_of_exact():
    rng = np.random.default_rng(5)
    rects = [tuple(F(int(v), 997) for v in row) for row in rng.integers(1, 300, size=(40, 4))]
    ex = exact(rects)
    fl = ex.as_float()
    assert abs(union_measure(fl) - float(union_measure(ex))) <= measure_error(fl)


def test_large_float_collection_against_point_sampling():
    x = (SQRT2, SQRT3)
    coll = orbit_collection(x, np.arange(1, 20_001), 0.004, 0.006)
    mu = union_measure(coll)
    rng = np.random.default_rng(1)
    px, py = rng.random(200_000), rng.random(200_000)
    mc = point_hits(coll, px, py).mean()
    assert mu == pytest.approx(mc, abs=4 * math.sqrt(mc * (1 - mc) / px.size))


def test_doubling_single_rect_is_exact():
    c = exact([(F(9, 10), F(9, 10), F(1, 50), F(1, 30))])
    img = doubling_map(c, 0.5, 0.5)
    assert union_measure(img) == 2 * union_measure(c)
    assert isinstance(img.cx[0], Surd)
    oracle = dfrac(dsqrt(2) * 9 / 10)
    assert float(img.cx[0]) == pytest.approx(float(oracle), abs=1e-15)


def test_doubled_keeps_centres():
    c = exact([(F(1, 5), F(2, 5), F(1, 50), F(1, 30))])
    d = doubled(c, 0.5, 0.5)
    assert list(d.cx) == list(c.cx) and union_measure(d) == 2 * union_measure(c)


def test_doubling_lemma_holds_on_random_conforming_instances():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 8))
        rects = [(F(int(a), 101), F(int(b), 103), F(int(h), 1000), F(int(h), 1000))
                 for a, b, h in rng.integers(1, 100, size=(n, 3))]
        c = exact(rects)
        assert union_measure(doubling_map(c, 0.5, 0.5)) <= 2 * union_measure(c)


def test_point_hits_matches_brute_force():
    rng = np.random.default_rng(3)
    coll = RectCollection(rng.random(300), rng.random(300), rng.random(300) * 0.02,
                          rng.random(300) * 0.05)
    px, py = rng.random(5000), rng.random(5000)
    brute = np.array([np.any((torus_dist(coll.cx, u) <= coll.hx) & (torus_dist(coll.cy, v) <= coll.hy))
                      for u, v in zip(px, py)])
    assert np.array_equal(point_hits(coll, px, py), brute)


def test_overlapping_pairs_matches_brute_force():
    rng = np.random.default_rng(4)
    n = 400
    coll = RectCollection(rng.random(n), rng.random(n), rng.random(n) * 0.01, rng.random(n) * 0.01)
    got = {tuple(p) for p in overlapping_pairs(coll).tolist()}
    brute = {(a, b) for a in range(n) for b in range(a + 1, n)
             if torus_dist(coll.cx[a], coll.cx[b]) < coll.hx[a] + coll.hx[b]
             and torus_dist(coll.cy[a], coll.cy[b]) < coll.hy[a] + coll.hy[b]}
    assert got == brute
    assert pairwise_disjoint(coll) == (not brute)


@given(st.lists(st.integers(-10**6, 10**6).filter(bool), min_size=1, max_size=50),
       st.integers(1, 5000))
def test_cover_partner_properties(labels, qk):
    lab = np.array(labels, dtype=np.int64)
    p = cover_partner(lab, qk)
    assert np.all(np.abs(p) <= np.abs(lab))
    assert np.all(np.sign(p) == np.sign(lab))
    assert np.all((lab - p) % qk == 0)
    small = np.abs(lab) <= qk
    assert np.array_equal(p[small], lab[small])
    assert np.all((np.abs(p[~small]) > 0) & (np.abs(p[~small]) <= qk))


def test_psi_collection_has_both_signs_and_concat():
    c = psi_collection((SQRT2, SQRT3), Constant(F(1, 400)), 0.5, 0.5, 0, 10)
    assert sorted(c.labels.tolist()) == sorted(list(range(1, 11)) + list(range(-10, 0)))
    assert np.allclose(c.hx, 0.05)
    both = concat([c, c.select(c.labels > 0)])
    assert len(both) == 30


def test_rect_rejects_nonpositive_half():
    with pytest.raises(ValueError):
        TorusRect((0, 0), (0, 1))
