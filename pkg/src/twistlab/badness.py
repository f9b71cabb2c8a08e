"""Finite-scan profiles of (i,j)-badness and one-dimensional sanity checks.

A profile is evidence about ``q * max(||q x1||^(1/i), ||q x2||^(1/j))`` for
``q <= Q`` only; it never claims membership in Bad(i,j).

Scans run in two passes.  A vectorised 64-bit fixed-point pass bounds every
value inside an interval; only indices whose lower bound could beat the
running minimum are re-evaluated with exact big-integer arithmetic at
``64 + ceil(log2 Q)`` bits (doubled for near ties).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidParameter
from .realnum import (
    Rational,
    RealSource,
    dist_nearest_int,
    frac_mult,
    orbit_error,
    orbit_fracs,
)

CHUNK = 1 << 20
_REL = 1e-12


def check_weights(i, j) -> tuple[float, float]:
    i, j = float(i), float(j)
    if not (i > 0 and j > 0):
        raise InvalidParameter("weights must satisfy i, j > 0")
    if abs(i + j - 1.0) > 1e-12:
        raise InvalidParameter(f"weights must satisfy i + j = 1 (got {i} + {j})")
    return i, j


def _int_exponent(w: float) -> int | None:
    e = 1.0 / w
    r = round(e)
    return r if abs(e - r) < 1e-12 else None


def _pow_bounds(lo, hi, w: float):
    """Outward bounds on ``lo**(1/w)`` and ``hi**(1/w)``."""
    e = _int_exponent(w)
    if e is not None:
        return lo**e, hi**e
    p = 1.0 / w
    return float(lo) ** p * (1 - _REL), float(hi) ** p * (1 + _REL)


@dataclass(frozen=True)
class Interval:
    lo: float | Fraction
    hi: float | Fraction

    @property
    def mid(self):
        return (self.lo + self.hi) / 2

    def overlaps(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi


def weighted_value(x: Sequence[RealSource], q: int, i: float, j: float,
                   bits: int = 96) -> Interval:
    """Certified enclosure of ``|q| * max(||q x1||^(1/i), ||q x2||^(1/j))``."""
    parts_lo, parts_hi = [], []
    for xt, w in zip(x, (i, j)):
        d = dist_nearest_int(frac_mult(xt, q, bits))
        lo = max(d.value - d.error, Fraction(0))
        hi = min(d.value + d.error, Fraction(1, 2))
        plo, phi = _pow_bounds(lo, hi, w)
        parts_lo.append(plo)
        parts_hi.append(phi)
    return Interval(abs(q) * max(parts_lo), abs(q) * max(parts_hi))


def _weighted_chunk(x, qs: np.ndarray, i: float, j: float, err: float):
    lo = np.zeros(qs.shape, dtype=np.float64)
    hi = np.zeros(qs.shape, dtype=np.float64)
    for xt, w in zip(x, (i, j)):
        d = dist_nearest_int(orbit_fracs(xt, qs))
        p = 1.0 / w
        lo = np.maximum(lo, np.maximum(d - err, 0.0) ** p * (1 - 1e-9))
        hi = np.maximum(hi, np.minimum(d + err, 0.5) ** p * (1 + 1e-9))
    qf = np.abs(qs).astype(np.float64)
    return qf * lo, qf * hi


def _record_candidates(lo: np.ndarray, hi: np.ndarray, best_hi: float) -> np.ndarray:
    prefix = np.minimum.accumulate(hi)
    before = np.concatenate(([best_hi], np.minimum(prefix[:-1], best_hi)))
    return np.nonzero(lo < before)[0]


def _scan_records(evaluate_chunk, evaluate_exact, Q: int, bits: int):
    """Generic certified record scan over ``q = 1..Q``.

    ``evaluate_chunk(qs)`` returns float (lo, hi) arrays; ``evaluate_exact(q,
    bits)`` returns an :class:`Interval`.  Returns the list of (q, Interval)
    at which the exact value strictly drops below all earlier values.
    """
    records: list[tuple[int, Interval]] = []
    best_hi = math.inf
    for start in range(1, Q + 1, CHUNK):
        qs = np.arange(start, min(start + CHUNK, Q + 1), dtype=np.int64)
        lo, hi = evaluate_chunk(qs)
        for idx in _record_candidates(lo, hi, best_hi):
            q = int(qs[idx])
            val = evaluate_exact(q, bits)
            if records:
                cur_q, cur = records[-1]
                if val.overlaps(cur):
                    val = evaluate_exact(q, 2 * bits)
                    cur = evaluate_exact(cur_q, 2 * bits)
                    records[-1] = (cur_q, cur)
                if not val.mid < cur.mid:
                    continue
            records.append((q, val))
            best_hi = min(best_hi, float(val.hi))
        best_hi = min(best_hi, float(hi.min()))
    return records


# ----------------------------------------------------------------------------


@dataclass
class BadnessProfile:
    weights: tuple[float, float]
    Q: int
    records: list[tuple[int, float]]
    intervals: list[Interval] = field(repr=False, default_factory=list)
    rational_degeneracy: bool = False
    note: str = "finite-scan evidence only; no membership claim"
    x_text: tuple[str, str] | None = None

    @property
    def c_estimate(self) -> float:
        return self.records[-1][1] if self.records else math.inf

    @property
    def argmin(self) -> int:
        return self.records[-1][0]

    def summary(self) -> dict:
        i, j = self.weights
        return {
            "i": i,
            "j": j,
            "Q": self.Q,
            "c_estimate": self.c_estimate,
            "argmin": self.argmin,
            "rational_degeneracy": self.rational_degeneracy,
            "x": list(self.x_text) if self.x_text else None,
            "note": self.note,
        }

    def records_csv(self) -> str:
        lines = ["q,v_q"]
        lines += [f"{q},{v!r}" for q, v in self.records]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _precision_bits(Q: int) -> int:
    return 64 + max(1, math.ceil(math.log2(max(Q, 2))))


def profile(x: Sequence[RealSource], i: float, j: float, Q: int) -> BadnessProfile:
    """Exhaustive scan of ``q = 1..Q`` keeping running minima of ``v_q``."""
    i, j = check_weights(i, j)
    if Q < 1:
        raise InvalidParameter("scan limit Q must be >= 1")
    err = orbit_error(Q)

    recs = _scan_records(
        lambda qs: _weighted_chunk(x, qs, i, j, err),
        lambda q, b: weighted_value(x, q, i, j, b),
        Q,
        _precision_bits(Q),
    )
    degenerate = any(iv.hi == 0 for _, iv in recs)
    texts = None
    try:
        texts = (x[0].to_text(), x[1].to_text())
    except Exception:
        pass
    return BadnessProfile(
        weights=(i, j),
        Q=Q,
        records=[(q, float(iv.mid)) for q, iv in recs],
        intervals=[iv for _, iv in recs],
        rational_degeneracy=degenerate,
        x_text=texts,
    )


def one_dim_profile(x: RealSource, Q: int) -> list[tuple[int, float]]:
    """Best approximations ``q`` (new minima of ``||q x||``) with ``q*||q x||``."""
    if Q < 1:
        raise InvalidParameter("scan limit Q must be >= 1")
    err = orbit_error(Q)

    def chunk(qs):
        d = dist_nearest_int(orbit_fracs(x, qs))
        return np.maximum(d - err, 0.0), d + err

    def exact(q, bits):
        d = dist_nearest_int(frac_mult(x, q, bits))
        return Interval(max(d.value - d.error, Fraction(0)), d.value + d.error)

    recs = _scan_records(chunk, exact, Q, _precision_bits(Q))
    return [(q, float(q * iv.mid)) for q, iv in recs]


def liminf_estimate(records: Sequence[tuple[int, float]]) -> tuple[int, float]:
    """Smallest record value over the later half of a record list."""
    if not records:
        raise InvalidParameter("no records")
    tail = records[len(records) // 2:]
    return min(tail, key=lambda r: r[1])


def inhomogeneous_min(x: RealSource, gamma, Q: int) -> tuple[float, int]:
    """``min_{1<=q<=Q} q * ||q x - gamma||`` and its argmin."""
    if Q < 1:
        raise InvalidParameter("scan limit Q must be >= 1")
    g = Fraction(gamma) if not isinstance(gamma, RealSource) else None
    if isinstance(gamma, RealSource):
        g = Fraction(gamma.scaled(96), 1 << 96)
    err = orbit_error(Q) + 2.0**-52
    best, best_q, best_hi = math.inf, 0, math.inf
    gf = float(g)
    for start in range(1, Q + 1, CHUNK):
        qs = np.arange(start, min(start + CHUNK, Q + 1), dtype=np.int64)
        d = dist_nearest_int(orbit_fracs(x, qs) - gf)
        lo = qs * np.maximum(d - err, 0.0)
        hi = qs * (d + err)
        best_hi = min(best_hi, float(hi.min()))
        for idx in np.nonzero(lo <= best_hi)[0]:
            q = int(qs[idx])
            f = frac_mult(x, q, _precision_bits(Q))
            val = float(q * dist_nearest_int(f.value - g))
            if val < best:
                best, best_q = val, q
    if isinstance(x, Rational) and best < 1e-300:
        best = 0.0
    return best, best_q
