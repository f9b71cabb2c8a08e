"""Acceptance criteria 1-9, each timed and reported as one PASS/FAIL line."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from _cli_cases import CASES, run_dirs, same_artifacts
from _oracles import harmonic
from conftest import ACCEPTANCE_LINES
from twistlab.badness import liminf_estimate, one_dim_profile
from twistlab.cli import main
from twistlab.ktv import box_dimension, build_tree, extract_points, params_from_profile
from twistlab.kurzweil import adversary_bound, run_adversary, run_density
from twistlab.metric import RegionFamily, gallagher_tag, region_measure, run_mc
from twistlab.psi import (
    CONVERGES,
    DIVERGES,
    Constant,
    GeometricStep,
    Piecewise,
    PowerLaw,
    lacunary_witness,
    parse_psi,
    psi0_block_identity,
    weight_constants,
)
from twistlab.realnum import GOLDEN, SQRT2, SQRT3, Rational, lacunary_vector, liouville_vector
from twistlab.torusgeo import RectCollection, doubled, rect_for, union_measure

SEED = 20240611


def report(n: int, ok: bool, elapsed: float, limit: float | None, detail: str):
    within = limit is None or elapsed < limit
    verdict = "PASS" if ok and within else "FAIL"
    budget = f" (limit {limit:g}s)" if limit else ""
    line = f"criterion {n}: {verdict}  {elapsed:.2f}s{budget}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert within, line


def _icbrt(n: int) -> int:
    r = round(n ** (1 / 3))
    while r**3 > n:
        r -= 1
    while (r + 1) ** 3 <= n:
        r += 1
    return r


def _cube_root(c: Fraction) -> Fraction:
    """Exact cube root of a rational that is a perfect cube."""
    a, b = _icbrt(c.numerator), _icbrt(c.denominator)
    assert a**3 == c.numerator and b**3 == c.denominator
    return Fraction(a, b)


def test_criterion_1_psi0_block_identity():
    t = time.perf_counter()
    w = lacunary_witness(liouville_vector(3, 4), 0.5, 0.5, rounding="tight")
    pairs = psi0_block_identity(w)
    ok = len(pairs) == len(w) - 1
    for (s, _), a, b in zip(pairs, w.entries, w.entries[1:]):
        rhs = 1 - Fraction(abs(a.q), abs(b.q)) * _cube_root(b.c / a.c)
        ok &= s == rhs and s > Fraction(1, 2)
    report(1, ok, time.perf_counter() - t, 1.0,
           f"{len(pairs)} blocks, min sum {float(min(s for s, _ in pairs)):.6f}")


@pytest.mark.slow
def test_criterion_2_adversary_bound():
    t = time.perf_counter()
    ok, parts = True, []
    for exps, (i, j) in (([1, 4, 10, 21], (0.5, 0.5)), ([1, 4, 13, 32], (0.3, 0.7))):
        vec = lacunary_vector(exps)
        w = lacunary_witness(vec, i, j, rounding="minimal")
        run = run_adversary(vec.pair, i, j, w, 3)
        bound = 64 * float(w.entries[0].c) ** (2 * min(i, j) / 3)
        ok &= run.bound == pytest.approx(bound, rel=1e-12) == adversary_bound(w)
        ok &= len(run.blocks) == 3 and run.all_covered
        ok &= run.s_total + run.s_total_error <= bound and run.margin > 0
        parts.append(f"({i},{j}) margin {run.margin:.4f}")
    report(2, ok, time.perf_counter() - t, 30.0, "; ".join(parts))


def _doubling_instance(rng):
    p1, p2 = int(rng.integers(50, 400)), int(rng.integers(50, 400))
    x = (Rational(int(rng.integers(1, p1)), p1), Rational(int(rng.integers(1, p2)), p2))
    k, t0, s = 5, int(rng.integers(1, 3)), int(rng.integers(1, 40))
    # square values keep psi^(1/2) rational, so the halves stay exact
    roots = sorted((Fraction(int(v), 100) for v in rng.integers(1, 36, size=5)), reverse=True)
    psi2 = GeometricStep(Piecewise([k**e for e in range(1, 6)], [r * r for r in roots]), k)
    rects = [rect_for(sg * q, x, psi2, 0.5, 0.5)
             for q in range(k**t0 + 1, k**t0 + s + 1) for sg in (1, -1)]
    return psi2, RectCollection.from_rects(rects)


@pytest.mark.slow
def test_criterion_3_doubling_lemma():
    t = time.perf_counter()
    rng = np.random.default_rng(SEED)
    a_up = weight_constants(0.5, 0.5)[0]
    ok, worst = True, 0.0
    for _ in range(100):
        psi2, R = _doubling_instance(rng)
        ok &= psi2(1) <= a_up / 2
        mu, mu2 = union_measure(R), union_measure(doubled(R, 0.5, 0.5))
        ok &= mu2 <= 2 * mu
        worst = max(worst, float(mu2) / float(mu))
    single = RectCollection.from_rects([rect_for(3, (Rational(1, 7), Rational(2, 9)),
                                                 Constant(Fraction(1, 100)), 0.5, 0.5)])
    equal = union_measure(doubled(single, 0.5, 0.5)) == 2 * union_measure(single)
    report(3, ok and equal, time.perf_counter() - t, 10.0,
           f"100 instances, worst ratio {worst:.4f}, single-rect equality {equal}")


@pytest.mark.slow
def test_criterion_4_density_counting():
    t = time.perf_counter()
    k = 8
    run = run_density((SQRT2, SQRT3), 0.5, 0.5, parse_psi("pow:C=2e-5,s=1"), k, 1, 4)
    ok = run.terminated_by == "PreconditionLost" and len(run.levels) >= 1
    for lv in run.levels:
        ok &= lv.J_in_2R <= 2 * k**lv.t + k ** (lv.t + 1) / 2
        ok &= lv.L_size >= k ** (lv.t + 1) / 2
        ok &= lv.L_disjoint
    report(4, ok, time.perf_counter() - t, 60.0,
           f"levels {[lv.t for lv in run.levels]}, PreconditionLost at t={run.terminal_level}")


@pytest.mark.slow
def test_criterion_5_ktv_construction():
    t = time.perf_counter()
    X = (SQRT2, SQRT3)
    ok, slopes = True, []
    for k in (64, 256, 1024):
        p = params_from_profile(X, k, 0.5, 0.5, 3, Q=min(2 * k**3, 1 << 25))
        tree = build_tree(X, p, budget=1 << 31)
        ok &= tree.summary()["min_survivors_per_node"] >= k / 32
        dim = box_dimension(tree)
        ok &= dim.slope >= math.log(k / 32) / (0.5 * math.log(k)) - 1e-9
        slopes.append(dim.slope)
        if k == 256:
            pts = extract_points(tree, 3, X)
            ok &= len(pts) == 3 and all(pt.certificate > 0 and pt.scan_limit == k**3
                                        for pt in pts)
    ok &= slopes[0] < slopes[1] < slopes[2]
    report(5, ok, time.perf_counter() - t, 300.0,
           "slopes " + ", ".join(f"{s:.4f}" for s in slopes))


def test_criterion_6_hurwitz_constant():
    t = time.perf_counter()
    recs = one_dim_profile(GOLDEN, 832040)  # F_30
    target = 1 / math.sqrt(5)
    _, inf = liminf_estimate(recs)
    tail = [v for _, v in recs[len(recs) // 2:]]
    below = [v for v in tail if v < target]
    ok = 0 < target - inf < 1e-4
    ok &= len(below) >= 3 and below == sorted(below) and inf == below[0]
    report(6, ok, time.perf_counter() - t, 5.0,
           f"liminf {inf:.9f}, gap {target - inf:.2e}, {len(below)} records from below")


@pytest.mark.slow
def test_criterion_7_doubly_metric_expectation():
    t = time.perf_counter()
    run = run_mc(RegionFamily("interval", PowerLaw(Fraction(1, 4), 1)), 10**5, 1000, SEED)
    half_h = float(harmonic(1000)) / 2
    ok = run.E == pytest.approx(half_h, rel=1e-13)
    ok &= abs(run.mean - half_h) <= 4 * run.stderr
    for eps in (0.1, 0.25, 0.5):
        row = run.pz_table[eps]
        ok &= row["empirical"] >= row["floor"] - 3 * row["sigma"]
    report(7, ok, time.perf_counter() - t, 60.0,
           f"mean {run.mean:.4f} vs {half_h:.4f}, z {run.z:+.2f}")


def test_criterion_8_multiplicative_area_and_gallagher():
    t = time.perf_counter()
    worst = 0.0
    for v in (1e-4, 1e-3, 1e-2, 0.25):
        oracle, _ = integrate.dblquad(lambda y, x: 1.0, 0, 0.5, 0, lambda x: min(0.5, v / x),
                                      epsabs=1e-13, epsrel=1e-12)
        got = region_measure(RegionFamily("multiplicative", Constant(Fraction(v))), 1)
        worst = max(worst, abs(got - 4 * oracle))
    ok = worst <= 1e-6
    ok &= gallagher_tag(PowerLaw(1, 2)) == CONVERGES
    ok &= gallagher_tag(Constant(Fraction(1, 10))) == DIVERGES
    report(8, ok, time.perf_counter() - t, 10.0, f"max area gap {worst:.2e}")


@pytest.mark.slow
def test_criterion_9_cli_determinism(tmp_path, capsys):
    t = time.perf_counter()
    ok, done = True, []
    for name, args in CASES.items():
        codes = [main([name, *args, "--outdir", str(tmp_path / r)]) for r in ("a", "b")]
        dirs = [run_dirs(tmp_path / r)[-1] for r in ("a", "b")]
        same = codes == [0, 0] and same_artifacts(*dirs)
        ok &= same
        done.append(f"{name}={'same' if same else 'DIFF'}")
        for r in ("a", "b"):
            for p in run_dirs(tmp_path / r):
                for f in p.iterdir():
                    f.unlink()
                p.rmdir()
    capsys.readouterr()
    report(9, ok, time.perf_counter() - t, None, ", ".join(done))
