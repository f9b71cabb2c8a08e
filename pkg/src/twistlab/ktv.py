"""Nested-rectangle Cantor construction for twisted badly approximable targets.

A level-m node is a rectangle with half-widths ``theta k^(-m i)`` and
``theta k^(-m j)``.  Its children sit in doubled cells of side
``4 theta k^(-(m+1) i)`` (and the j analogue) tiled from the node's lower-left
corner; partial cells are dropped.  A child is removed when some orbit point
``q x`` with ``k^m <= |q| < k^(m+1)`` lands in its doubled cell.

Node ids encode the path: ``id_{m+1} = id_m * (nx * ny) + ax * ny + ay``,
with the root having id 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .badness import check_weights, profile
from .errors import BadnessViolation, InvalidParameter
from .realnum import RealSource, dist_nearest_int, orbit_error, orbit_fracs
from .torusgeo import torus_dist

KAPPA1 = 1 / 16
KAPPA2 = 1 / 32
DEFAULT_BUDGET = 1 << 25
CHUNK = 1 << 21


@dataclass(frozen=True)
class KtvParams:
    k: int
    i: float
    j: float
    c: float
    depth: int
    c_provenance: str = "supplied"

    def __post_init__(self):
        check_weights(self.i, self.j)
        if int(self.k) != self.k or self.k < 2:
            raise InvalidParameter("k must be an integer >= 2")
        if not self.c > 0:
            raise InvalidParameter("badness constant must be positive")
        if self.depth < 1:
            raise InvalidParameter("depth must be >= 1")
        if self.children_per_node < KAPPA1 * self.k:
            raise InvalidParameter(
                f"k={self.k} gives {self.children_per_node} children per node, "
                f"fewer than k/16; choose a larger k"
            )

    @property
    def theta(self) -> float:
        b = self.c / (2 * self.k)
        return 0.5 * min(b**self.i, b**self.j)

    @property
    def grid(self) -> tuple[int, int]:
        return int(self.k**self.i // 2 + 1e-9), int(self.k**self.j // 2 + 1e-9)

    @property
    def children_per_node(self) -> int:
        nx, ny = self.grid
        return nx * ny

    def half(self, m: int) -> tuple[float, float]:
        return self.theta * self.k ** (-m * self.i), self.theta * self.k ** (-m * self.j)

    def stride(self, m: int) -> tuple[float, float]:
        hx, hy = self.half(m)
        return 4 * hx, 4 * hy

    @property
    def survivor_floor(self) -> float:
        return (KAPPA1 - KAPPA2) * self.k

    @property
    def hit_limit(self) -> float:
        return KAPPA2 * self.k


@dataclass
class Level:
    m: int
    ids: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    pruned: dict = field(default_factory=dict)


@dataclass
class CantorTree:
    params: KtvParams
    root_center: tuple[float, float]
    levels: list[Level]
    error: float
    x_text: tuple[str, str] | None = None

    @property
    def depth(self) -> int:
        return len(self.levels)

    def survivors_per_node(self, m: int) -> np.ndarray:
        """Surviving child count of every level-(m-1) survivor (for ``m >= 2``)."""
        n = self.params.children_per_node
        parents = self.levels[m - 2].ids
        counts = np.bincount(np.searchsorted(parents, self.levels[m - 1].ids // n),
                             minlength=parents.size)
        return counts

    def to_jsonl(self) -> str:
        n = self.params.children_per_node
        lines = []
        for lv in self.levels:
            hx, hy = self.params.half(lv.m)
            for t, nid in enumerate(lv.ids):
                lines.append(json.dumps({
                    "level": lv.m, "id": int(nid),
                    "parent": int(nid // n) if lv.m > 1 else None,
                    "center": [float(lv.cx[t]), float(lv.cy[t])],
                    "half": [hx, hy], "pruned_by": None}, sort_keys=True))
            for nid, q in sorted(lv.pruned.items()):
                lines.append(json.dumps({
                    "level": lv.m, "id": int(nid), "parent": int(nid // n),
                    "center": None, "half": [hx, hy], "pruned_by": int(q)}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        p = self.params
        out = {
            "k": p.k, "i": p.i, "j": p.j, "c": p.c, "c_provenance": p.c_provenance,
            "theta": p.theta, "depth": self.depth, "children_per_node": p.children_per_node,
            "survivor_floor": p.survivor_floor, "root_center": list(self.root_center),
            "nodes_per_level": [int(lv.ids.size) for lv in self.levels],
            "pruned_per_level": [len(lv.pruned) for lv in self.levels],
        }
        if self.depth >= 2:
            out["min_survivors_per_node"] = int(min(
                self.survivors_per_node(m).min() for m in range(2, self.depth + 1)))
        return out


# ---------------------------------------------------------------- construction


def params_from_profile(x: Sequence[RealSource], k: int, i: float, j: float, depth: int,
                        Q: int | None = None) -> KtvParams:
    """Parameters with ``c`` the record minimum of a profile (default ``Q = 2 k^depth``)."""
    Q = Q or min(2 * k**depth, DEFAULT_BUDGET)
    prof = profile(x, i, j, Q)
    if not prof.c_estimate > 0:
        raise InvalidParameter("profile found an exact rational hit")
    return KtvParams(k, i, j, prof.c_estimate, depth, f"profile record minimum over q <= {Q}")


def _choose_root(x, p: KtvParams) -> tuple[float, float]:
    """Candidate centre on a 64x64 grid farthest (weighted) from ``q x``, ``|q| < k``."""
    g = (np.arange(64) + 0.5) / 64
    gx, gy = np.meshgrid(g, g, indexing="ij")
    gx, gy = gx.ravel(), gy.ravel()
    r = np.arange(1, p.k, dtype=np.int64)
    qs = np.concatenate([r, -r])
    px, py = orbit_fracs(x[0], qs), orbit_fracs(x[1], qs)
    hx, hy = p.half(1)
    score = np.full(gx.shape, np.inf)
    for a in range(0, qs.size, 256):
        dx = torus_dist(gx[:, None], px[None, a:a + 256]) / hx
        dy = torus_dist(gy[:, None], py[None, a:a + 256]) / hy
        score = np.minimum(score, np.maximum(dx, dy).min(axis=1))
    best = int(np.argmax(score))
    if not score[best] > 2:
        raise InvalidParameter("no root position avoids the first orbit points")
    return float(gx[best]), float(gy[best])


def _descend(px, py, p: KtvParams, root_lo, alive: list, level: int, eps: float):
    """Child ids at ``level`` whose doubled cells contain the points.

    Returns ``(point index, child id, near)`` where ``near`` lists the point
    indices within ``eps`` of some cell or node boundary on the way down.
    """
    nx, ny = p.grid
    hx1, hy1 = p.half(1)
    ox = (px - root_lo[0]) % 1.0
    oy = (py - root_lo[1]) % 1.0
    sel = np.nonzero(((ox <= 2 * hx1 + eps) | (ox > 1 - eps)) &
                     ((oy <= 2 * hy1 + eps) | (oy > 1 - eps)))[0]
    ox, oy = ox[sel], oy[sel]
    near = (np.abs(ox - 2 * hx1) < eps) | (np.abs(oy - 2 * hy1) < eps) | \
        (ox > 1 - eps) | (oy > 1 - eps)
    keep = (ox <= 2 * hx1) & (oy <= 2 * hy1)
    ids = np.zeros(sel.size, dtype=np.int64)
    for m in range(2, level + 1):
        sx, sy = p.stride(m)
        ax, ay = np.floor(ox / sx), np.floor(oy / sy)
        rx, ry = ox - ax * sx, oy - ay * sy
        near |= (rx < eps) | (rx > sx - eps) | (ry < eps) | (ry > sy - eps)
        keep &= (ax < nx) & (ay < ny)
        ids = ids * (nx * ny) + (ax.astype(np.int64) * ny + ay.astype(np.int64))
        if m < level:
            hx, hy = p.half(m)
            ox, oy = rx - sx / 4, ry - sy / 4
            near |= (np.abs(ox) < eps) | (np.abs(oy) < eps) | \
                (np.abs(ox - 2 * hx) < eps) | (np.abs(oy - 2 * hy) < eps)
            keep &= (ox >= 0) & (oy >= 0) & (ox <= 2 * hx) & (oy <= 2 * hy)
    keep &= np.isin(ids // (nx * ny), alive[level - 2])
    for m in range(2, level):
        keep &= np.isin(ids // (nx * ny) ** (level - m), alive[m - 1])
    return sel[keep], ids[keep], sel[near]


def _level_hits(x, p: KtvParams, root_lo, alive, level: int, budget: int):
    """Map child id -> smallest |q| hitting it, for ``k^(level-1) <= |q| < k^level``."""
    lo, hi = p.k ** (level - 1), p.k**level
    if hi - 1 > budget:
        raise InvalidParameter(
            f"level {level} needs |q| up to {hi - 1}, beyond the scan budget {budget}")
    eps = orbit_error(hi) + 8 * 2.0**-53
    hits: dict = {}
    for start in range(lo, hi, CHUNK):
        r = np.arange(start, min(start + CHUNK, hi), dtype=np.int64)
        fx, fy = orbit_fracs(x[0], r), orbit_fracs(x[1], r)
        for sgn in (1, -1):
            qs = sgn * r
            px, py = (fx, fy) if sgn > 0 else ((-fx) % 1.0, (-fy) % 1.0)
            pi, cid, flagged = _descend(px, py, p, root_lo, alive, level, eps)
            pairs = [(pi, cid)]
            if flagged.size:
                for dx in (-eps, eps):
                    for dy in (-eps, eps):
                        fi, fc, _ = _descend(px[flagged] + dx, py[flagged] + dy, p,
                                             root_lo, alive, level, 0.0)
                        pairs.append((flagged[fi], fc))
            pi = np.concatenate([a for a, _ in pairs])
            cid = np.concatenate([b for _, b in pairs])
            if not cid.size:
                continue
            order = np.lexsort((np.abs(qs[pi]), cid))
            cid, qv = cid[order], qs[pi][order]
            first = np.concatenate(([True], cid[1:] != cid[:-1]))
            for c_, q_ in zip(cid[first].tolist(), qv[first].tolist()):
                if c_ not in hits or abs(q_) < abs(hits[c_]):
                    hits[c_] = q_
    return hits


def _centres(p: KtvParams, root_lo, ids: np.ndarray, m: int):
    """Centres of level-m nodes from their ids."""
    nx, ny = p.grid
    n = nx * ny
    digits = []
    rest = ids.copy()
    for _ in range(m - 1):
        digits.append(rest % n)
        rest //= n
    digits.reverse()
    ox = np.zeros(ids.size)
    oy = np.zeros(ids.size)
    for lvl, d in zip(range(2, m + 1), digits):
        sx, sy = p.stride(lvl)
        ox = ox + (d // ny) * sx + sx / 4
        oy = oy + (d % ny) * sy + sy / 4
    hx, hy = p.half(m)
    return (root_lo[0] + ox + hx) % 1.0, (root_lo[1] + oy + hy) % 1.0


def build_tree(x: Sequence[RealSource], params: KtvParams, budget: int = DEFAULT_BUDGET,
               check_violation: bool = True) -> CantorTree:
    p = params
    root = _choose_root(x, p)
    hx1, hy1 = p.half(1)
    root_lo = (root[0] - hx1, root[1] - hy1)
    n = p.children_per_node
    levels = [Level(1, np.array([0], dtype=np.int64), np.array([root[0]]), np.array([root[1]]))]
    alive = [levels[0].ids]
    for m in range(2, p.depth + 1):
        hits = _level_hits(x, p, root_lo, alive, m, budget)
        parents = alive[-1]
        allc = (parents[:, None] * n + np.arange(n)[None, :]).ravel()
        dead = np.array(sorted(hits), dtype=np.int64)
        if check_violation and dead.size:
            par, cnt = np.unique(dead // n, return_counts=True)
            worst = int(np.argmax(cnt))
            if cnt[worst] > p.hit_limit:
                raise BadnessViolation(m, int(par[worst]), int(cnt[worst]), p.hit_limit)
        ids = np.setdiff1d(allc, dead, assume_unique=True)
        cx, cy = _centres(p, root_lo, ids, m)
        levels.append(Level(m, ids, cx, cy, hits))
        alive.append(ids)
    texts = None
    try:
        texts = (x[0].to_text(), x[1].to_text())
    except Exception:
        pass
    return CantorTree(p, root, levels, orbit_error(p.k**p.depth), texts)


# ---------------------------------------------------------------- extraction


@dataclass
class DeepPoint:
    gamma: tuple[float, float]
    node: int
    certificate: float
    argmin: int
    scan_limit: int

    def to_dict(self) -> dict:
        return {"gamma": list(self.gamma), "node": self.node, "certificate": self.certificate,
                "argmin": self.argmin, "scan_limit": self.scan_limit}


def twisted_certificate(x, gamma, i: float, j: float, Q: int):
    """``min_{1<=|q|<=Q} |q| max(||q x1 - g1||^(1/i), ||q x2 - g2||^(1/j))`` and argmin.

    Floats; the returned value is lowered by the propagated orbit error.
    """
    err = orbit_error(Q) + 4 * 2.0**-53
    best, arg = math.inf, 0
    for start in range(1, Q + 1, CHUNK):
        r = np.arange(start, min(start + CHUNK, Q + 1), dtype=np.int64)
        fx, fy = orbit_fracs(x[0], r), orbit_fracs(x[1], r)
        for sgn in (1, -1):
            px, py = (fx, fy) if sgn > 0 else (-fx, -fy)
            d1 = np.maximum(dist_nearest_int(px - gamma[0]) - err, 0.0)
            d2 = np.maximum(dist_nearest_int(py - gamma[1]) - err, 0.0)
            v = r * np.maximum(d1 ** (1 / i), d2 ** (1 / j))
            t = int(np.argmin(v))
            if v[t] < best:
                best, arg = float(v[t]), int(sgn * r[t])
    return best, arg


def extract_points(tree: CantorTree, count: int, x: Sequence[RealSource]) -> list[DeepPoint]:
    """Up to ``count`` deepest-node centres with their twisted badness certificates."""
    if tree.depth < 2:
        raise InvalidParameter("extraction needs depth >= 2")
    if count <= 0:
        return []
    p = tree.params
    deep = tree.levels[-1]
    pick = np.linspace(0, deep.ids.size - 1, min(count, deep.ids.size)).round().astype(int)
    Q = p.k**p.depth
    out = []
    for t in np.unique(pick):
        g = (float(deep.cx[t]), float(deep.cy[t]))
        cert, arg = twisted_certificate(x, g, p.i, p.j, Q)
        out.append(DeepPoint(g, int(deep.ids[t]), cert, arg, Q))
    return out


def replay_distance(tree: CantorTree, x: Sequence[RealSource], m: int | None = None) -> float:
    """Smallest axis-1 gap (in units of ``theta k^(-m i)``) between level-m centres
    and orbit points ``1 <= |q| < k^m``; at least 1 by construction."""
    p = tree.params
    m = m or tree.depth
    lv = tree.levels[m - 1]
    hx, hy = p.half(m)
    worst = math.inf
    Q = p.k**m - 1
    for start in range(1, Q + 1, CHUNK):
        r = np.arange(start, min(start + CHUNK, Q + 1), dtype=np.int64)
        fx, fy = orbit_fracs(x[0], r), orbit_fracs(x[1], r)
        for px, py in ((fx, fy), (-fx % 1.0, -fy % 1.0)):
            for c in range(lv.ids.size):
                gap = np.maximum(torus_dist(px, lv.cx[c]) / hx, torus_dist(py, lv.cy[c]) / hy)
                worst = min(worst, float(gap.min()))
    return worst


def check_structure(tree: CantorTree) -> dict:
    """Nesting of every survivor in its parent and disjointness of each level."""
    from .torusgeo import RectCollection, containment_margin, overlapping_pairs

    p = tree.params
    n = p.children_per_node
    nested, disjoint = True, True
    for m in range(2, tree.depth + 1):
        lv, up = tree.levels[m - 1], tree.levels[m - 2]
        hx, hy = p.half(m)
        Hx, Hy = p.half(m - 1)
        pidx = np.searchsorted(up.ids, lv.ids // n)
        # the doubled child cell, not just the node, must sit inside the parent
        mx = containment_margin(up.cx[pidx], Hx, lv.cx, 2 * hx)
        my = containment_margin(up.cy[pidx], Hy, lv.cy, 2 * hy)
        nested &= bool(np.all(np.minimum(mx, my) > -1e-12))
        coll = RectCollection(lv.cx, lv.cy, np.full(lv.ids.size, 2 * hx),
                              np.full(lv.ids.size, 2 * hy), error=1e-15)
        # siblings share cell edges; only a genuine overlap beyond rounding counts
        disjoint &= overlapping_pairs(coll, slack=-1e-13).shape[0] == 0
    return {"nested": nested, "disjoint": disjoint}


# ---------------------------------------------------------------- dimension


@dataclass
class DimensionReport:
    scales: list
    counts: list
    slope: float
    intercept: float
    residuals: list
    floor: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "scales": self.scales, "counts": self.counts, "slope": self.slope,
            "intercept": self.intercept, "residuals": self.residuals,
            "analytic_floor": self.floor, "two_point_fit": self.degenerate,
        }


def box_dimension(tree: CantorTree) -> DimensionReport:
    """Box-counting slope of the deepest centres at scales ``4 theta k^(-m max(i,j))``.

    Boxes are anchored at the root's lower-left corner.  With only two levels
    the fit degenerates to a two-point slope.
    """
    if tree.depth < 2:
        raise InvalidParameter("box counting needs at least two levels")
    p = tree.params
    w = max(p.i, p.j)
    hx1, hy1 = p.half(1)
    lo = (tree.root_center[0] - hx1, tree.root_center[1] - hy1)
    deep = tree.levels[-1]
    ox = (deep.cx - lo[0]) % 1.0
    oy = (deep.cy - lo[1]) % 1.0
    scales, counts = [], []
    for m in range(1, tree.depth + 1):
        d = 4 * p.theta * p.k ** (-m * w)
        cells = np.unique(np.stack([np.floor(ox / d), np.floor(oy / d)], axis=1), axis=0)
        scales.append(d)
        counts.append(int(cells.shape[0]))
    X = np.log(1 / np.array(scales))
    Y = np.log(np.array(counts, dtype=float))
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    floor = math.log(p.k * (KAPPA1 - KAPPA2)) / (w * math.log(p.k))
    return DimensionReport(scales, counts, float(slope), float(intercept),
                           [float(r) for r in resid], floor, tree.depth == 2)
