"""Approximating functions: closed forms, step functions and the refinement chain.

Every function here is strictly positive and non-increasing on its domain
``1..limit`` (``limit=None`` means all of N).  Values are exact
``Fraction`` objects when the inputs allow it and floats otherwise; the
``exact`` attribute says which.  ``values`` is the vectorised float view
used by the geometry code.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import BudgetExhausted, InvalidParameter, NoWitness, OutOfDomain

DIVERGES, CONVERGES, UNKNOWN = "diverges", "converges", "unknown"
EXACT_SUM_LIMIT = 100_000
_CHUNK = 1 << 18


def _num(v):
    """Keep rationals exact, everything else becomes float."""
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    return float(v)


def _is_exact(*vals) -> bool:
    return all(isinstance(v, Fraction) for v in vals)


def _text(v) -> str:
    return str(v) if isinstance(v, Fraction) else repr(float(v))


class ApproxFunction:
    """Base class; subclasses implement ``_value`` and ``values``."""

    kind = "abstract"
    exact = False
    limit: int | None = None
    divergence = UNKNOWN
    note = ""

    def __call__(self, r: int):
        r = int(r)
        if r < 1 or (self.limit is not None and r > self.limit):
            raise OutOfDomain(f"{self.kind} is defined on 1..{self.limit}, got r={r}")
        return self._value(r)

    def _value(self, r: int):
        raise NotImplementedError

    def values(self, rs) -> np.ndarray:
        rs = np.asarray(rs, dtype=np.int64)
        return np.array([float(self(int(r))) for r in rs.ravel()]).reshape(rs.shape)

    def _check_array(self, rs: np.ndarray) -> np.ndarray:
        rs = np.asarray(rs, dtype=np.int64)
        if rs.size and (rs.min() < 1 or (self.limit is not None and rs.max() > self.limit)):
            raise OutOfDomain(f"{self.kind} is defined on 1..{self.limit}")
        return rs

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "exact": self.exact,
            "limit": self.limit,
            "divergence": self.divergence,
            "note": self.note,
            "params": self.params(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def extend(self, budget: int) -> "ApproxFunction":
        """Total closed forms need no extension; lazy tables override this."""
        return self


# ---------------------------------------------------------------- closed forms


class PowerLaw(ApproxFunction):
    """``C * r^(-s)``."""

    kind = "power"

    def __init__(self, C=1, s=1):
        self.C, self.s = _num(C), _num(s)
        if not self.C > 0 or self.s < 0:
            raise InvalidParameter("power law needs C > 0 and s >= 0")
        self.exact = isinstance(self.C, Fraction) and isinstance(self.s, Fraction) \
            and self.s.denominator == 1
        self.divergence = DIVERGES if self.s <= 1 else CONVERGES
        self.note = f"p-series with exponent {self.s}"

    def _value(self, r):
        if self.exact:
            return self.C / Fraction(r) ** int(self.s)
        return float(self.C) * float(r) ** -float(self.s)

    def values(self, rs):
        rs = self._check_array(rs)
        return float(self.C) * rs.astype(np.float64) ** -float(self.s)

    def params(self):
        return {"C": _text(self.C), "s": _text(self.s)}


class LogHarmonic(ApproxFunction):
    """``C / (r log(r+1))``; divergent by the integral test."""

    kind = "logharmonic"
    divergence = DIVERGES
    note = "integral of 1/(r log r) diverges"

    def __init__(self, C=1):
        self.C = float(C)
        if not self.C > 0:
            raise InvalidParameter("C must be positive")

    def _value(self, r):
        return self.C / (r * math.log(r + 1))

    def values(self, rs):
        rs = self._check_array(rs).astype(np.float64)
        return self.C / (rs * np.log1p(rs))

    def params(self):
        return {"C": repr(self.C)}


class Constant(ApproxFunction):
    kind = "constant"
    divergence = DIVERGES
    note = "constant terms"

    def __init__(self, C):
        self.C = _num(C)
        if not self.C > 0:
            raise InvalidParameter("constant must be positive")
        self.exact = isinstance(self.C, Fraction)

    def _value(self, r):
        return self.C

    def values(self, rs):
        rs = self._check_array(rs)
        return np.full(rs.shape, float(self.C))

    def params(self):
        return {"C": _text(self.C)}


# ---------------------------------------------------------------- step functions


class Piecewise(ApproxFunction):
    """Value ``values[b]`` on ``(breaks[b-1], breaks[b]]`` with ``breaks[-1] = 0``.

    Defined on ``1..breaks[-1]``.
    """

    kind = "piecewise"

    def __init__(self, breaks: Sequence[int], values: Sequence, divergence=UNKNOWN,
                 note=""):
        self.breaks = [int(b) for b in breaks]
        self.vals = [_num(v) for v in values]
        if len(self.breaks) != len(self.vals) or not self.breaks:
            raise InvalidParameter("need one value per breakpoint")
        if self.breaks[0] < 1 or any(b <= a for a, b in zip(self.breaks, self.breaks[1:])):
            raise InvalidParameter("breakpoints must be strictly increasing positive integers")
        if any(not v > 0 for v in self.vals):
            raise InvalidParameter("values must be strictly positive")
        if any(b > a for a, b in zip(self.vals, self.vals[1:])):
            raise InvalidParameter("values must be non-increasing")
        self.limit = self.breaks[-1]
        self.exact = _is_exact(*self.vals)
        self.divergence = divergence
        self.note = note

    def _value(self, r):
        return self.vals[bisect.bisect_left(self.breaks, r)]

    def values(self, rs):
        rs = self._check_array(rs)
        idx = np.searchsorted(np.array(self.breaks, dtype=np.int64), rs, side="left")
        return np.array([float(v) for v in self.vals])[idx]

    def blocks(self):
        """Yield ``(lo, hi, value)`` with the block being ``lo < r <= hi``."""
        prev = 0
        for b, v in zip(self.breaks, self.vals):
            yield prev, b, v
            prev = b

    def params(self):
        return {
            "breaks": [str(b) for b in self.breaks],
            "values": [_text(v) for v in self.vals],
        }


class Envelope(ApproxFunction):
    """``min{psi(r), cap, coeff / r}``."""

    kind = "envelope"

    def __init__(self, base: ApproxFunction, cap, coeff, note=""):
        self.base, self.cap, self.coeff = base, _num(cap), _num(coeff)
        self.limit = base.limit
        self.exact = base.exact and _is_exact(self.cap, self.coeff)
        self.divergence = base.divergence
        self.note = note

    def _value(self, r):
        v = min(self.base(r), self.cap, self.coeff / r)
        return v if self.exact else float(v)

    def values(self, rs):
        rs = self._check_array(rs)
        env = np.minimum(float(self.cap), float(self.coeff) / rs.astype(np.float64))
        return np.minimum(self.base.values(rs), env)

    def params(self):
        return {"base": self.base.to_dict(), "cap": _text(self.cap),
                "coeff": _text(self.coeff)}


def _block_exponent(r: int, k: int) -> int:
    """Smallest ``e >= 1`` with ``k^e >= r``."""
    e, p = 1, k
    while p < r:
        e, p = e + 1, p * k
    return e


class GeometricStep(ApproxFunction):
    """``psi(k^e)`` on ``k^(e-1) < r <= k^e`` (and ``psi(k)`` for ``r <= k``)."""

    kind = "geometric_step"

    def __init__(self, base: ApproxFunction, k: int, note=""):
        if int(k) != k or k <= 4:
            raise InvalidParameter(f"block base must be an integer > 4, got {k}")
        self.base, self.k = base, int(k)
        self.exact = base.exact
        self.divergence = base.divergence
        self.note = note
        if base.limit is not None:
            self.limit = self.k ** (_block_exponent(base.limit + 1, self.k) - 1)
            if self.limit < self.k:
                raise InvalidParameter("base function domain shorter than one block")

    def _value(self, r):
        return self.base(self.k ** _block_exponent(r, self.k))

    def values(self, rs):
        rs = self._check_array(rs)
        out = np.empty(rs.shape, dtype=np.float64)
        if not rs.size:
            return out
        e_max = _block_exponent(int(rs.max()), self.k)
        lo = 0
        for e in range(1, e_max + 1):
            hi = self.k**e
            mask = (rs > lo) & (rs <= hi)
            if mask.any():
                out[mask] = float(self.base(hi))
            lo = hi
        return out

    def blocks(self, N: int):
        lo, e = 0, 1
        while lo < N:
            hi = self.k**e
            yield lo, min(hi, N), self.base(hi)
            lo, e = hi, e + 1

    def params(self):
        return {"base": self.base.to_dict(), "k": self.k}


class ScaledBlocks(ApproxFunction):
    """``psi(r) / sqrt(b)`` on the b-th block ``(ends[b-2], ends[b-1]]``."""

    kind = "scaled_blocks"

    def __init__(self, base: ApproxFunction, ends: Sequence[int], note=""):
        self.base, self.ends = base, [int(e) for e in ends]
        if not self.ends:
            raise InvalidParameter("need at least one block")
        self.limit = self.ends[-1]
        self.divergence = base.divergence
        self.note = note

    def block_of(self, r: int) -> int:
        return bisect.bisect_left(self.ends, r) + 1

    def _value(self, r):
        return float(self.base(r)) / math.sqrt(self.block_of(r))

    def values(self, rs):
        rs = self._check_array(rs)
        b = np.searchsorted(np.array(self.ends, dtype=np.int64), rs, side="left") + 1
        return self.base.values(rs) / np.sqrt(b)

    def extend(self, budget: int) -> "ScaledBlocks":
        return build_psi3(self.base, budget=budget)

    def params(self):
        return {"base": self.base.to_dict(), "ends": [str(e) for e in self.ends]}


class Dilated(ApproxFunction):
    """``psi(s_r * r)`` with ``s_r = m`` on ``(ends[m-2], ends[m-1]]``."""

    kind = "dilated"

    def __init__(self, base: ApproxFunction, ends: Sequence[int], note=""):
        self.base, self.ends = base, [int(e) for e in ends]
        if not self.ends:
            raise InvalidParameter("need at least one block")
        self.limit = self.ends[-1]
        self.exact = base.exact
        self.divergence = DIVERGES
        self.note = note

    def dilation(self, r: int) -> int:
        return bisect.bisect_left(self.ends, r) + 1

    def dilations(self, rs) -> np.ndarray:
        rs = self._check_array(rs)
        return np.searchsorted(np.array(self.ends, dtype=np.int64), rs, side="left") + 1

    def _value(self, r):
        return self.base(self.dilation(r) * r)

    def values(self, rs):
        rs = self._check_array(rs)
        return self.base.values(self.dilations(rs) * rs)

    def extend(self, budget: int) -> "Dilated":
        return build_psi4(self.base, budget=budget)

    def params(self):
        return {"base": self.base.to_dict(), "ends": [str(e) for e in self.ends]}


# ---------------------------------------------------------------- partial sums


def _float_sum(psi: ApproxFunction, lo: int, hi: int) -> float:
    """``sum_{lo < r <= hi} psi(r)`` in float, chunked."""
    parts = []
    for a in range(lo + 1, hi + 1, _CHUNK):
        rs = np.arange(a, min(a + _CHUNK, hi + 1), dtype=np.int64)
        parts.append(math.fsum(psi.values(rs)))
    return math.fsum(parts)


def partial_sum(psi: ApproxFunction, N: int):
    """``sum_{r=1}^{N} psi(r)``.

    Exact (a ``Fraction``) for exact step functions and for exact closed
    forms up to ``EXACT_SUM_LIMIT`` terms; a float otherwise.
    """
    N = int(N)
    if N < 1:
        raise InvalidParameter("N must be >= 1")
    if psi.limit is not None and N > psi.limit:
        raise OutOfDomain(f"N={N} beyond the domain 1..{psi.limit}")
    if isinstance(psi, Piecewise):
        total = sum((min(hi, N) - lo) * v for lo, hi, v in psi.blocks() if lo < N)
        return total if psi.exact else float(total)
    if isinstance(psi, GeometricStep):
        total = sum((hi - lo) * v for lo, hi, v in psi.blocks(N))
        return total if psi.exact else float(total)
    if isinstance(psi, Constant):
        return N * psi.C
    if psi.exact and N <= EXACT_SUM_LIMIT:
        return sum((psi(r) for r in range(1, N + 1)), Fraction(0))
    return _float_sum(psi, 0, N)


def block_sums(psi: Piecewise) -> list:
    """Exact sum of ``psi`` over each of its blocks."""
    return [(hi - lo) * v for lo, hi, v in psi.blocks()]


# ---------------------------------------------------------------- refinement chain


def weight_constants(i, j) -> tuple:
    """``(a^*, a_*) = (2^(-1/max), 2^(-1/min))``, exact when the exponents are integers."""
    out = []
    for w in (max(i, j), min(i, j)):
        e = 1 / float(w)
        if abs(e - round(e)) < 1e-12:
            out.append(Fraction(1, 2 ** round(e)))
        else:
            out.append(2.0**-e)
    return tuple(out)


def refine_psi1(psi: ApproxFunction, c, i, j) -> Envelope:
    """``min{psi, a^*/2, a_* c / (2r)}``."""
    i, j = float(i), float(j)
    if not (i > 0 and j > 0 and abs(i + j - 1) <= 1e-12):
        raise InvalidParameter("weights must satisfy i, j > 0 and i + j = 1")
    c = _num(c)
    if not 0 < c < 1:
        raise InvalidParameter("badness constant must lie in (0, 1)")
    a_up, a_lo = weight_constants(i, j)
    return Envelope(psi, a_up / 2, a_lo * c / 2,
                    note=f"refinement with c={_text(c)} and weights ({i}, {j})")


def build_psi2(psi1: ApproxFunction, k: int) -> GeometricStep:
    return GeometricStep(psi1, k, note=f"value at the right end of each k-adic block, k={k}")


def _scan_until(psi: ApproxFunction, start: int, target: float, budget: int,
                scale: int = 1):
    """Smallest ``r >= start`` with ``sum_{start <= u <= r} psi(scale*u) >= target``.

    Returns ``(r, block_sum)`` or ``None`` when ``scale * r`` would pass the
    budget.  Near-ties are settled exactly when ``psi`` is exact.
    """
    acc, a = 0.0, start
    while a * scale <= budget:
        b = min(a + _CHUNK, budget // scale + 1)
        rs = np.arange(a, b, dtype=np.int64)
        cs = acc + np.cumsum(psi.values(rs * scale))
        hit = np.nonzero(cs >= target * (1 - 1e-12))[0]
        if hit.size:
            r = int(rs[hit[0]])
            if psi.exact and abs(cs[hit[0]] - target) <= 1e-9 * target:
                exact = sum((psi(u * scale) for u in range(start, r + 1)), Fraction(0))
                while exact < target:
                    r += 1
                    if r * scale > budget:
                        return None
                    exact += psi(r * scale)
                return r, exact
            return r, float(cs[hit[0]])
        acc = float(cs[-1])
        a = b
    return None


def build_psi3(psi: ApproxFunction, budget: int = 10**6, blocks: int | None = None):
    """Blocks ``(r_{b-1}, r_b]`` with ``sum psi >= b``, scaled by ``1/sqrt(b)``.

    With ``blocks=None`` as many blocks as fit below ``budget`` are built.
    """
    if psi.divergence == CONVERGES:
        raise InvalidParameter("the block construction needs a divergent function")
    cap = budget if psi.limit is None else min(budget, psi.limit)
    ends, start = [], 1
    while blocks is None or len(ends) < blocks:
        found = _scan_until(psi, start, len(ends) + 1, cap)
        if found is None:
            break
        ends.append(found[0])
        start = found[0] + 1
    if not ends or (blocks is not None and len(ends) < blocks):
        raise BudgetExhausted(f"only {len(ends)} blocks fit below r={cap}")
    return ScaledBlocks(psi, ends, note=f"{len(ends)} blocks, each of psi-mass >= its index")


def build_psi4(psi3: ApproxFunction, budget: int | None = None, blocks: int | None = None):
    """Blockwise dilation: ``s_r = m`` until ``sum psi3(m r)`` over the block reaches 1."""
    cap = psi3.limit if budget is None else budget
    if psi3.limit is not None:
        cap = min(cap, psi3.limit)
    if cap is None:
        raise InvalidParameter("a budget is required for a function defined on all of N")
    ends, start = [], 1
    while blocks is None or len(ends) < blocks:
        m = len(ends) + 1
        found = _scan_until(psi3, start, 1, cap, scale=m)
        if found is None:
            break
        ends.append(found[0])
        start = found[0] + 1
    if not ends or (blocks is not None and len(ends) < blocks):
        raise BudgetExhausted(f"only {len(ends)} dilation blocks fit below {cap}")
    return Dilated(psi3, ends, note=f"{len(ends)} dilation blocks, each of mass >= 1")


# ---------------------------------------------------------------- witnesses


def _icbrt(n: int) -> int:
    """``floor(n^(1/3))`` for ``n >= 0``."""
    if n < 2:
        return n
    x = 1 << ((n.bit_length() + 2) // 3)
    while True:
        y = (2 * x + n // (x * x)) // 3
        if y >= x:
            break
        x = y
    while x**3 > n:
        x -= 1
    while (x + 1) ** 3 <= n:
        x += 1
    return x


@dataclass(frozen=True)
class WitnessEntry:
    q: int
    m: int

    @property
    def c(self) -> Fraction:
        return Fraction(1, self.m**3)

    @property
    def n(self) -> int:
        return self.q * self.m


def separated(m_prev: int, m_next: int, i, j) -> bool:
    """``c_prev > 2^(3/(2 min)) c_next`` for ``c = 1/m^3``."""
    e = 1 / (2 * min(float(i), float(j)))
    if abs(e - round(e)) < 1e-12:
        return m_next > m_prev * 2 ** round(e)
    return math.log2(m_next / m_prev) > e * (1 + 1e-12)


def _next_m(m_prev: int | None, i, j) -> int:
    if m_prev is None:
        return 2
    m = max(m_prev + 1, math.floor(m_prev * 2 ** (1 / (2 * min(float(i), float(j))))) - 2)
    while not separated(m_prev, m, i, j):
        m += 1
    return m


@dataclass
class WitnessSequence:
    entries: list[WitnessEntry]
    weights: tuple[float, float]
    values: list = field(default_factory=list, repr=False)
    rounding: str = "tight"

    def __len__(self):
        return len(self.entries)

    def validate(self, x=None, bits: int = 160) -> None:
        """Check the structural conditions and, given ``x``, the certificates."""
        i, j = self.weights
        prev = None
        for e in self.entries:
            if e.m < 2:
                raise InvalidParameter(f"m={e.m} < 2 at q={e.q}")
            if prev is not None:
                if not (abs(e.q) > abs(prev.q) and e.n > prev.n):
                    raise InvalidParameter(f"q or n not increasing at q={e.q}")
                if not separated(prev.m, e.m, i, j):
                    raise InvalidParameter(f"separation fails between q={prev.q} and q={e.q}")
            prev = e
        if x is not None:
            from .badness import weighted_value

            for e in self.entries:
                v = weighted_value(x, e.q, i, j, bits)
                if not v.hi < e.c:
                    raise InvalidParameter(f"certificate fails at q={e.q}: {float(v.hi)} >= c")

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "rounding": self.rounding,
            "entries": [{"q": str(e.q), "c": str(e.c), "n": str(e.n)} for e in self.entries],
        }


def select_witness(candidates, i, j, rounding: str = "tight", max_c=None,
                   min_entries: int = 2) -> WitnessSequence:
    """Greedy thinning of ``(q, v_hi)`` pairs into a witness sequence.

    ``rounding="tight"`` uses ``m = floor(v^(-1/3))`` (largest admissible c);
    ``"minimal"`` uses the smallest m the separation condition allows, which
    keeps ``n_k = q_k m_k`` small.  ``v_hi = 0`` always takes the minimal m.
    """
    if rounding not in ("tight", "minimal"):
        raise InvalidParameter(f"unknown rounding {rounding!r}")
    entries, vals = [], []
    for q, v in candidates:
        v = Fraction(v)
        if entries and abs(q) <= abs(entries[-1].q):
            continue
        m_prev = entries[-1].m if entries else None
        floor_m = _next_m(m_prev, i, j)
        if v == 0 or rounding == "minimal":
            m = floor_m
        else:
            m = _icbrt(math.floor(1 / v))
            while m > 0 and m**3 * v >= 1:
                m -= 1
            if m < floor_m:
                continue
        if m**3 * v >= 1:
            continue
        if max_c is not None and not Fraction(1, m**3) < Fraction(max_c):
            continue
        entries.append(WitnessEntry(int(q), m))
        vals.append(v)
    if len(entries) < min_entries:
        raise NoWitness(f"only {len(entries)} witness entries found")
    return WitnessSequence(entries, (float(i), float(j)), vals, rounding)


def extract_witness(x, i, j, Q: int, rounding: str = "tight", max_c=None):
    """Witness sequence from the record minima of a finite scan ``q <= Q``."""
    from .badness import profile

    prof = profile(x, i, j, Q)
    cands = [(q, iv.hi) for (q, _), iv in zip(prof.records, prof.intervals)]
    return select_witness(cands, prof.weights[0], prof.weights[1], rounding, max_c)


def lacunary_witness(vec, i, j, rounding: str = "tight", bits: int = 160):
    """Witness sequence read directly off a lacunary vector's denominators."""
    from .badness import check_weights, weighted_value

    i, j = check_weights(i, j)
    cands = [(q, weighted_value(vec.pair, q, i, j, bits).hi) for q in vec.denominators]
    return select_witness(cands, i, j, rounding)


def build_psi0(w: WitnessSequence) -> Piecewise:
    """1 up to ``n_1``, then ``c_{k+1}^(1/3)/q_{k+1} = 1/n_{k+1}`` on ``(n_k, n_{k+1}]``."""
    es = w.entries
    breaks = [e.n for e in es]
    vals = [Fraction(1)] + [Fraction(1, e.n) for e in es[1:]]
    return Piecewise(breaks, vals, divergence=DIVERGES,
                     note="each complete block sums to 1 - n_k/n_{k+1} > 1/2")


def psi0_block_identity(w: WitnessSequence) -> list[tuple[Fraction, Fraction]]:
    """Pairs (block sum, ``1 - (q_k/q_{k+1}) (c_{k+1}/c_k)^(1/3)``) per complete block."""
    psi0 = build_psi0(w)
    sums = block_sums(psi0)[1:]
    out = []
    for s, a, b in zip(sums, w.entries, w.entries[1:]):
        ratio = Fraction(a.q, b.q) * Fraction(a.m, b.m)
        out.append((s, 1 - ratio))
    return out


# ---------------------------------------------------------------- text form

_PSI_KINDS = {"pow": PowerLaw, "const": Constant, "logharmonic": LogHarmonic}


def _spec_number(text: str):
    try:
        return Fraction(text.strip())
    except ValueError:
        return float(text)


def parse_psi(text: str) -> ApproxFunction:
    """``pow:C=0.01,s=1``, ``const:C=1/4`` or ``logharmonic:C=1``."""
    kind, _, body = text.strip().partition(":")
    cls = _PSI_KINDS.get(kind)
    if cls is None:
        raise InvalidParameter(f"unknown psi kind {kind!r}; expected one of {sorted(_PSI_KINDS)}")
    kwargs = {}
    for item in filter(None, (p.strip() for p in body.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise InvalidParameter(f"psi parameter {item!r} is not key=value")
        try:
            kwargs[key.strip()] = _spec_number(val)
        except ValueError:
            raise InvalidParameter(f"psi parameter {item!r} is not a number") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidParameter(f"bad parameters for {kind}: {exc}") from None
