"""Axis-aligned rectangles on the torus [0,1)^2 and exact union measure.

Coordinates are either exact numbers (``Fraction`` or :class:`Surd`) or
floats carrying an absolute error bound ``error`` on every centre and
half-width.  Containment and covering checks report margins and only pass
when the margin beats that error.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidParameter
from .realnum import RealSource, Surd, frac_mult, orbit_error, orbit_fracs

# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class TorusRect:
    center: tuple
    half: tuple
    label: int | None = None

    def __post_init__(self):
        if not (self.half[0] > 0 and self.half[1] > 0):
            raise InvalidParameter("half-widths must be positive")

    @property
    def full_axes(self) -> tuple[bool, bool]:
        return (2 * self.half[0] >= 1, 2 * self.half[1] >= 1)

    @property
    def measure(self):
        return min(2 * self.half[0], 1) * min(2 * self.half[1], 1)


@dataclass
class RectCollection:
    """Parallel columns of centres and half-widths.

    Float collections hold numpy arrays; exact ones hold Python lists.
    """

    cx: Sequence
    cy: Sequence
    hx: Sequence
    hy: Sequence
    labels: np.ndarray | None = None
    tag: str = ""
    error: float = 0.0

    def __post_init__(self):
        n = len(self.cx)
        if not (len(self.cy) == len(self.hx) == len(self.hy) == n):
            raise InvalidParameter("column lengths differ")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=object if self.exact else np.int64)

    @property
    def exact(self) -> bool:
        return not isinstance(self.cx, np.ndarray) and self.error == 0

    def __len__(self):
        return len(self.cx)

    @classmethod
    def from_rects(cls, rects: Sequence[TorusRect], tag: str = "", error: float = 0.0):
        cols = [[r.center[0] for r in rects], [r.center[1] for r in rects],
                [r.half[0] for r in rects], [r.half[1] for r in rects]]
        labels = [r.label for r in rects] if rects and rects[0].label is not None else None
        if error or any(isinstance(v, float) for col in cols for v in col):
            cols = [np.asarray([float(v) for v in col], dtype=np.float64) for col in cols]
        return cls(*cols, labels=labels, tag=tag, error=error)

    def rects(self):
        for t in range(len(self)):
            lab = None if self.labels is None else int(self.labels[t])
            yield TorusRect((self.cx[t], self.cy[t]), (self.hx[t], self.hy[t]), lab)

    def as_float(self) -> "RectCollection":
        if isinstance(self.cx, np.ndarray):
            return self
        cols = [np.asarray([float(v) for v in c], dtype=np.float64)
                for c in (self.cx, self.cy, self.hx, self.hy)]
        labels = None if self.labels is None else np.asarray(self.labels, dtype=np.int64)
        # rounding an exact value to double loses at most half an ulp of 1
        return RectCollection(*cols, labels=labels, tag=self.tag,
                              error=max(self.error, 2.0**-53))

    def select(self, mask) -> "RectCollection":
        idx = np.nonzero(np.asarray(mask))[0]
        pick = (lambda c: c[idx]) if isinstance(self.cx, np.ndarray) else \
            (lambda c: [c[t] for t in idx])
        labels = None if self.labels is None else self.labels[idx]
        return RectCollection(pick(self.cx), pick(self.cy), pick(self.hx), pick(self.hy),
                              labels=labels, tag=self.tag, error=self.error)

    def measure_sum(self):
        """Sum of the individual measures (an upper bound on the union)."""
        if isinstance(self.cx, np.ndarray):
            return float(np.sum(np.minimum(2 * self.hx, 1) * np.minimum(2 * self.hy, 1)))
        return sum((min(2 * a, 1) * min(2 * b, 1) for a, b in zip(self.hx, self.hy)),
                   Fraction(0))

    def to_csv(self) -> str:
        lines = ["q,center1,center2,h1,h2"]
        for t in range(len(self)):
            lab = "" if self.labels is None else str(self.labels[t])
            vals = [self.cx[t], self.cy[t], self.hx[t], self.hy[t]]
            lines.append(",".join([lab] + [repr(float(v)) for v in vals]))
        return "\n".join(lines) + "\n"


def concat(colls: Sequence[RectCollection], tag: str = "") -> RectCollection:
    if any(isinstance(c.cx, np.ndarray) for c in colls):
        colls = [c.as_float() for c in colls]
        cols = [np.concatenate([getattr(c, a) for c in colls]) for a in ("cx", "cy", "hx", "hy")]
    else:
        cols = [[v for c in colls for v in getattr(c, a)] for a in ("cx", "cy", "hx", "hy")]
    labels = None
    if colls and all(c.labels is not None for c in colls):
        labels = np.concatenate([np.asarray(c.labels) for c in colls])
    return RectCollection(*cols, labels=labels, tag=tag,
                          error=max((c.error for c in colls), default=0.0))


# ---------------------------------------------------------------- construction


def _root_exact(v: Fraction, w: float):
    """``v ** w`` as a Fraction when ``1/w`` is an integer and the root is rational."""
    e = 1 / w
    if abs(e - round(e)) > 1e-12 or not isinstance(v, Fraction):
        return None
    n = round(e)
    rn, rd = round(v.numerator ** (1 / n)), round(v.denominator ** (1 / n))
    for a in (rn - 1, rn, rn + 1):
        for b in (rd - 1, rd, rd + 1):
            if a > 0 and b > 0 and a**n == v.numerator and b**n == v.denominator:
                return Fraction(a, b)
    return None


def rect_for(q: int, x, psi, i: float, j: float, bits: int = 80) -> TorusRect:
    """``R_psi(q)``: centre ``q x mod 1``, half-widths ``psi(|q|)^i, psi(|q|)^j``."""
    if q == 0:
        raise InvalidParameter("q must be nonzero")
    v = psi(abs(q))
    halves = []
    for w in (i, j):
        h = _root_exact(v, w)
        halves.append(h if h is not None else float(v) ** w)
    centre = [frac_mult(xt, q, bits) for xt in x]
    if all(c.error == 0 for c in centre) and all(isinstance(h, Fraction) for h in halves):
        return TorusRect((centre[0].value, centre[1].value), tuple(halves), q)
    return TorusRect(tuple(float(c.value) for c in centre),
                     tuple(float(h) for h in halves), q)


def orbit_collection(x: Sequence[RealSource], qs: np.ndarray, h1, h2,
                     tag: str = "") -> RectCollection:
    """Float collection centred at ``q x`` for the signed integers ``qs``."""
    qs = np.asarray(qs, dtype=np.int64)
    cx, cy = orbit_fracs(x[0], qs), orbit_fracs(x[1], qs)
    err = orbit_error(int(np.abs(qs).max()) if qs.size else 1) + 4 * 2.0**-53
    return RectCollection(cx, cy, np.broadcast_to(np.asarray(h1, float), qs.shape).copy(),
                          np.broadcast_to(np.asarray(h2, float), qs.shape).copy(),
                          labels=qs, tag=tag, error=err)


def psi_collection(x, psi, i: float, j: float, r_lo: int, r_hi: int, factor: float = 1.0,
                   tag: str = "") -> RectCollection:
    """``R_{factor*psi}(q)`` for ``r_lo < |q| <= r_hi``, both signs of ``q``."""
    r = np.arange(r_lo + 1, r_hi + 1, dtype=np.int64)
    vals = factor * psi.values(r)
    qs = np.concatenate([r, -r])
    h1 = np.concatenate([vals**i, vals**i])
    h2 = np.concatenate([vals**j, vals**j])
    coll = orbit_collection(x, qs, h1, h2, tag)
    coll.error += float(np.max(h1, initial=0) + np.max(h2, initial=0)) * 4 * 2.0**-52
    return coll


def doubling_map(c: RectCollection, i: float, j: float) -> RectCollection:
    """Image under ``T(g) = (2^i g1, 2^j g2)``: centres mapped, half-widths scaled."""
    s1, s2 = _scale_factor(i), _scale_factor(j)
    if isinstance(c.cx, np.ndarray) or s1 is None or s2 is None:
        f = c.as_float()
        a, b = 2.0**i, 2.0**j
        return RectCollection((a * f.cx) % 1.0, (b * f.cy) % 1.0, a * f.hx, b * f.hy,
                              labels=f.labels, tag=f"T({c.tag})", error=2 * f.error + 2.0**-52)
    return RectCollection([(s1 * v) % 1 for v in c.cx], [(s2 * v) % 1 for v in c.cy],
                          [s1 * v for v in c.hx], [s2 * v for v in c.hy],
                          labels=c.labels, tag=f"T({c.tag})")


def doubled(c: RectCollection, i: float, j: float) -> RectCollection:
    """``R_{2 psi}``: same centres, half-widths scaled by ``(2^i, 2^j)``."""
    s1, s2 = _scale_factor(i), _scale_factor(j)
    if isinstance(c.cx, np.ndarray) or s1 is None or s2 is None:
        f = c.as_float()
        a, b = 2.0**i, 2.0**j
        return RectCollection(f.cx, f.cy, a * f.hx, b * f.hy, labels=f.labels,
                              tag=f"2{c.tag}", error=2 * f.error + 2.0**-52)
    return RectCollection(list(c.cx), list(c.cy), [s1 * v for v in c.hx],
                          [s2 * v for v in c.hy], labels=c.labels, tag=f"2{c.tag}")


def _scale_factor(w: float):
    """Exact ``2^w`` for ``w`` in {1/2, 1}, else None."""
    if abs(w - 0.5) < 1e-15:
        return Surd(0, 1, 2)
    if abs(w - 1.0) < 1e-15:
        return Fraction(2)
    return None


# ---------------------------------------------------------------- union measure


def _split(c, h):
    """Pieces of ``[c-h, c+h] mod 1`` inside ``[0, 1]``."""
    if 2 * h >= 1:
        return [(0, 1)]
    c = c % 1
    lo, hi = c - h, c + h
    if lo < 0:
        return [(0, hi), (lo + 1, 1)]
    if hi > 1:
        return [(lo, 1), (0, hi - 1)]
    return [(lo, hi)]


def _boxes(c: RectCollection) -> list[tuple]:
    out = []
    for cx, cy, hx, hy in zip(c.cx, c.cy, c.hx, c.hy):
        if isinstance(cx, np.floating):
            cx, cy, hx, hy = float(cx), float(cy), float(hx), float(hy)
        for x0, x1 in _split(cx, hx):
            for y0, y1 in _split(cy, hy):
                out.append((x0, x1, y0, y1))
    return out


def _ceil(v) -> int:
    return -math.floor(-v)


def _small_sweep(boxes, zero):
    """Slab sweep along x; quadratic but cheap for a handful of boxes."""
    if len(boxes) == 1:
        x0, x1, y0, y1 = boxes[0]
        return (x1 - x0) * (y1 - y0)
    xs = sorted({b[0] for b in boxes} | {b[1] for b in boxes})
    total = zero
    for a, b in zip(xs, xs[1:]):
        ivs = sorted((y0, y1) for x0, x1, y0, y1 in boxes if x0 <= a and x1 >= b)
        if not ivs:
            continue
        covered, cur_lo, cur_hi = zero, ivs[0][0], ivs[0][1]
        for lo, hi in ivs[1:]:
            if lo > cur_hi:
                covered += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            elif hi > cur_hi:
                cur_hi = hi
        covered += cur_hi - cur_lo
        total += (b - a) * covered
    return total


def _sweep_area(boxes, zero):
    """Union area of boxes by coordinate compression.

    Coordinates are sorted exactly once; coverage is tracked on integer
    indices with a 2-D difference array, so exact arithmetic is only spent
    on the lengths of covered runs.
    """
    if len(boxes) <= 24:
        return _small_sweep(boxes, zero)
    xs = sorted({b[0] for b in boxes} | {b[1] for b in boxes})
    ys = sorted({b[2] for b in boxes} | {b[3] for b in boxes})
    xi = {v: n for n, v in enumerate(xs)}
    yi = {v: n for n, v in enumerate(ys)}
    idx = np.array([(xi[x0], xi[x1], yi[y0], yi[y1]) for x0, x1, y0, y1 in boxes],
                   dtype=np.int64)
    diff = np.zeros((len(xs) + 1, len(ys) + 1), dtype=np.int64)
    np.add.at(diff, (idx[:, 0], idx[:, 2]), 1)
    np.add.at(diff, (idx[:, 0], idx[:, 3]), -1)
    np.add.at(diff, (idx[:, 1], idx[:, 2]), -1)
    np.add.at(diff, (idx[:, 1], idx[:, 3]), 1)
    cover = diff.cumsum(axis=0).cumsum(axis=1)[: len(xs) - 1, : len(ys) - 1] > 0
    total = zero
    for row in range(len(xs) - 1):
        c = cover[row]
        if not c.any():
            continue
        edges = np.diff(np.concatenate(([0], c.astype(np.int8), [0])))
        starts, stops = np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]
        covered = zero
        for a, b in zip(starts, stops):
            covered += ys[b] - ys[a]
        total += (xs[row + 1] - xs[row]) * covered
    return total


def _grid_size(boxes) -> int:
    if not boxes:
        return 1
    w = sorted(max(float(b[1] - b[0]), float(b[3] - b[2])) for b in boxes)
    typical = w[int(0.9 * (len(w) - 1))]
    G = int(min(1024, max(1, 1 / max(typical, 1e-9))))
    while G > 1:
        cost = sum((float(b[1] - b[0]) * G + 2) * (float(b[3] - b[2]) * G + 2) for b in boxes)
        if cost <= 16 * len(boxes) + 10**5:
            break
        G //= 2
    return G


def union_area_boxes(boxes, zero=0):
    """Exact union area of boxes ``(x0, x1, y0, y1)`` inside the unit square.

    Boxes are clipped into a uniform grid of rational cells; a cell covered
    by one box counts in full, otherwise its pieces go through a slab sweep.
    """
    boxes = [b for b in boxes if b[1] > b[0] and b[3] > b[2]]
    if not boxes:
        return zero
    G = _grid_size(boxes)
    if G == 1:
        return _sweep_area(boxes, zero)
    step = Fraction(1, G) if not isinstance(zero, float) else 1.0 / G
    cells: dict = defaultdict(list)
    full = set()
    for x0, x1, y0, y1 in boxes:
        ax0, ax1 = math.floor(x0 * G), min(_ceil(x1 * G), G)
        ay0, ay1 = math.floor(y0 * G), min(_ceil(y1 * G), G)
        for a in range(ax0, ax1):
            lx, hx_ = a * step, (a + 1) * step
            px0, px1 = max(x0, lx), min(x1, hx_)
            fx = px0 == lx and px1 == hx_
            for b in range(ay0, ay1):
                if (a, b) in full:
                    continue
                ly, hy_ = b * step, (b + 1) * step
                py0, py1 = max(y0, ly), min(y1, hy_)
                if fx and py0 == ly and py1 == hy_:
                    full.add((a, b))
                    cells.pop((a, b), None)
                elif px1 > px0 and py1 > py0:
                    cells[(a, b)].append((px0, px1, py0, py1))
    total = zero + len(full) * step * step
    for key, pieces in cells.items():
        if key not in full:
            total += _sweep_area(pieces, zero)
    return total


def union_measure(c: RectCollection):
    """Lebesgue measure of the union of a collection on the torus.

    Exact (``Fraction`` or :class:`Surd`) for exact collections; a float
    otherwise, with :func:`measure_error` bounding the deviation.
    """
    if not len(c):
        return Fraction(0) if c.exact else 0.0
    zero = Fraction(0) if c.exact else 0.0
    return union_area_boxes(_boxes(c), zero)


def measure_error(c: RectCollection) -> float:
    """Bound on the error of a float union measure: coordinate error times perimeter."""
    if c.exact:
        return 0.0
    per = float(np.sum(np.minimum(2 * c.hx, 1) + np.minimum(2 * c.hy, 1))) * 2
    return 2 * c.error * per + 64 * len(c) * 2.0**-52


# ---------------------------------------------------------------- spatial hashing


def torus_dist(a, b):
    """Distance on the circle R/Z, elementwise."""
    return np.abs((a - b + 0.5) % 1.0 - 0.5)


def _pick_grid(hx: np.ndarray, hy: np.ndarray, cap: int = 2048) -> int:
    if not hx.size:
        return 1
    typical = float(np.percentile(np.maximum(hx, hy), 90)) * 2
    G = int(min(cap, max(1, 1 / max(typical, 1e-12))))
    while G > 1:
        spans = (np.minimum(2 * hx * G + 2, G)) * (np.minimum(2 * hy * G + 2, G))
        if spans.sum() <= 16 * hx.size + 10**6:
            break
        G //= 2
    return G


def _cell_index(c: RectCollection, G: int, pad: float = 0.0):
    """Pairs ``(rect index, cell id)`` for every grid cell a rect may touch."""
    f = c.as_float()
    rows, cols = [], []
    for centre, half in ((f.cx, f.hx), (f.cy, f.hy)):
        lo = np.floor((centre - half - pad) * G).astype(np.int64)
        hi = np.floor((centre + half + pad) * G).astype(np.int64)
        span = np.minimum(hi - lo + 1, G)
        rows.append(lo)
        cols.append(span)
    (lx, ly), (sx, sy) = rows, cols
    counts = sx * sy
    ridx = np.repeat(np.arange(len(f)), counts)
    off = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    ox, oy = off // np.repeat(sy, counts), off % np.repeat(sy, counts)
    cell = ((np.repeat(lx, counts) + ox) % G) * G + (np.repeat(ly, counts) + oy) % G
    order = np.argsort(cell, kind="stable")
    return ridx[order], cell[order]


def point_hits(c: RectCollection, px: np.ndarray, py: np.ndarray, slack: float = 0.0):
    """For each point, whether it lies in some rect (closed, enlarged by ``slack``)."""
    px, py = np.asarray(px, dtype=np.float64), np.asarray(py, dtype=np.float64)
    hit = np.zeros(px.shape, dtype=bool)
    if not len(c) or not px.size:
        return hit
    f = c.as_float()
    G = _pick_grid(f.hx, f.hy)
    ridx, cell = _cell_index(f, G, slack)
    pc = (np.floor((px % 1.0) * G).astype(np.int64) % G) * G + \
        np.floor((py % 1.0) * G).astype(np.int64) % G
    start = np.searchsorted(cell, pc, side="left")
    stop = np.searchsorted(cell, pc, side="right")
    n = stop - start
    pidx = np.repeat(np.arange(px.size), n)
    cand = ridx[np.repeat(start, n) + np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)]
    ok = (torus_dist(px[pidx], f.cx[cand]) <= f.hx[cand] + slack) & \
        (torus_dist(py[pidx], f.cy[cand]) <= f.hy[cand] + slack)
    hit[pidx[ok]] = True
    return hit


def overlapping_pairs(c: RectCollection, slack: float = 0.0) -> np.ndarray:
    """Index pairs ``(a, b)``, ``a < b``, whose rects share interior points.

    Rects count as overlapping when both torus gaps are below the summed
    half-widths plus ``slack``; use a positive slack for certified checks.
    """
    if len(c) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    f = c.as_float()
    G = _pick_grid(f.hx, f.hy)
    ridx, cell = _cell_index(f, G)
    bounds = np.flatnonzero(np.diff(cell)) + 1
    groups = np.split(ridx, bounds)
    pairs = []
    for g in groups:
        if g.size < 2:
            continue
        a, b = np.triu_indices(g.size, 1)
        pairs.append(np.stack([g[a], g[b]], axis=1))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    p = np.unique(np.sort(np.concatenate(pairs), axis=1), axis=0)
    a, b = p[:, 0], p[:, 1]
    ov = (torus_dist(f.cx[a], f.cx[b]) < f.hx[a] + f.hx[b] + slack) & \
        (torus_dist(f.cy[a], f.cy[b]) < f.hy[a] + f.hy[b] + slack)
    return p[ov]


def pairwise_disjoint(c: RectCollection) -> bool:
    """Certified interior-disjointness (margins must beat twice the error)."""
    return overlapping_pairs(c, slack=4 * c.error).shape[0] == 0


# ---------------------------------------------------------------- containment


def containment_margin(outer_c, outer_h, inner_c, inner_h):
    """Per-pair margin ``min_t H_t - (gap_t + h_t)``; full outer axes never bind."""
    outer_c, outer_h = np.asarray(outer_c, float), np.asarray(outer_h, float)
    inner_c, inner_h = np.asarray(inner_c, float), np.asarray(inner_h, float)
    m = outer_h - (torus_dist(outer_c, inner_c) + inner_h)
    return np.where(2 * outer_h >= 1, np.inf, m)


@dataclass
class CoverReport:
    covered: bool
    checked: int
    min_margin: float
    error: float
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "covered": self.covered,
            "checked": self.checked,
            "min_margin": self.min_margin,
            "error": self.error,
            "failures": self.failures[:50],
            "failure_count": len(self.failures),
        }


def cover_partner(labels: np.ndarray, qk: int) -> np.ndarray:
    """S-rect label for each R-rect label ``q'``.

    ``|q'| <= q_k`` maps to itself; otherwise ``m = ceil(|q'|/q_k) - 1`` and
    the partner is ``q' - sign(q') m q_k``, which lies in ``(0, q_k]`` in absolute
    value while ``m q_k < |q'|``.
    """
    a = np.abs(labels)
    m = np.where(a <= qk, 0, -(-a // qk) - 1)
    return np.sign(labels) * (a - m * qk)


def covering_check(R: RectCollection, S: RectCollection, w, k: int) -> CoverReport:
    """Is every rect of ``R`` (labels ``q'``) inside the S-rect of its partner?"""
    if R.labels is None or S.labels is None:
        raise InvalidParameter("covering needs labelled collections")
    qk = w.entries[k - 1].q
    Rf, Sf = R.as_float(), S.as_float()
    partner = cover_partner(Rf.labels, qk)
    order = np.argsort(Sf.labels)
    pos = np.searchsorted(Sf.labels[order], partner)
    pos = np.minimum(pos, len(order) - 1)
    found = Sf.labels[order][pos] == partner
    sidx = order[pos]
    mx = containment_margin(Sf.cx[sidx], Sf.hx[sidx], Rf.cx, Rf.hx)
    my = containment_margin(Sf.cy[sidx], Sf.hy[sidx], Rf.cy, Rf.hy)
    margin = np.where(found, np.minimum(mx, my), -np.inf)
    err = 2 * (Rf.error + Sf.error)
    bad = np.nonzero(margin <= err)[0]
    failures = [
        {"q": int(Rf.labels[t]), "partner": int(partner[t]), "margin": float(margin[t])}
        for t in bad[:1000]
    ]
    return CoverReport(
        covered=bad.size == 0,
        checked=len(Rf),
        min_margin=float(margin.min()) if len(Rf) else math.inf,
        error=err,
        failures=failures,
    )
