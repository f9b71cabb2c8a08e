"""Exactly evaluable reals and certified fractional parts of ``q*x``.

Every source implements ``scaled(P)`` returning an integer ``n`` with
``|x - n / 2**P| <= 2**-P``.  Everything else (fractional parts, orbit
scans, continued fractions of non-rational kinds) is built on that.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InsufficientPrecision, InvalidParameter

GUARD_BITS = 8


class Certified(NamedTuple):
    """A value with an absolute error bound (both exact rationals)."""

    value: Fraction
    error: Fraction

    def __float__(self) -> float:
        return float(self.value)

    @property
    def lo(self) -> Fraction:
        return self.value - self.error

    @property
    def hi(self) -> Fraction:
        return self.value + self.error


class RealSource:
    kind = "abstract"

    def scaled(self, bits: int) -> int:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    @property
    def is_rational(self) -> bool:
        return False

    def __float__(self) -> float:
        return self.scaled(60) / 2.0**60

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class Rational(RealSource):
    p: int
    q: int = 1
    kind = "rational"

    def __post_init__(self):
        if self.q == 0:
            raise InvalidParameter("rational source needs a nonzero denominator")
        f = Fraction(self.p, self.q)
        object.__setattr__(self, "p", f.numerator)
        object.__setattr__(self, "q", f.denominator)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.p, self.q)

    @property
    def is_rational(self) -> bool:
        return True

    def scaled(self, bits: int) -> int:
        return round(Fraction(self.p << bits, self.q))

    def to_text(self) -> str:
        return f"rational:{self.p}/{self.q}"


@dataclass(frozen=True)
class Quadratic(RealSource):
    """The number ``(a + b*sqrt(d)) / c``."""

    a: int
    b: int
    d: int
    c: int = 1
    kind = "quadratic"

    def __post_init__(self):
        if self.c == 0:
            raise InvalidParameter("quadratic source needs c != 0")
        if self.d <= 0 or math.isqrt(self.d) ** 2 == self.d:
            raise InvalidParameter("quadratic source needs a positive non-square d")

    def scaled(self, bits: int) -> int:
        # three extra bits so the final rounding lands within one unit
        w = bits + 3
        root = math.isqrt(self.b * self.b * self.d << (2 * w))
        if self.b < 0:
            root = -root - 1
        num = (self.a << w) + root
        n = num // self.c if self.c > 0 else (-num) // (-self.c)
        return (n + 4) >> 3

    def to_text(self) -> str:
        return f"quad:({self.a}+{self.b}*sqrt({self.d}))/{self.c}"

    def cf_terms(self) -> Iterator[int]:
        """Partial quotients by the exact ``(P + sqrt(D)) / Q`` recurrence."""
        D = self.b * self.b * self.d
        P, Q = (self.a, self.c) if self.b > 0 else (-self.a, -self.c)
        if (D - P * P) % Q:
            P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
        r = math.isqrt(D)
        while True:
            a_n = (P + r) // Q if Q > 0 else -((P + r) // -Q) - 1
            yield a_n
            P = a_n * Q - P
            Q = (D - P * P) // Q


class _TermTable:
    """Append-only memo of partial quotients drawn from a generator."""

    def __init__(self, gen: Iterator[int]):
        self._gen = gen
        self._terms: list[int] = []
        self._done = False
        self._lock = threading.Lock()

    def get(self, n: int) -> list[int]:
        if len(self._terms) < n and not self._done:
            with self._lock:
                while len(self._terms) < n and not self._done:
                    try:
                        self._terms.append(int(next(self._gen)))
                    except StopIteration:
                        self._done = True
        return self._terms[:n]


@dataclass(frozen=True, eq=False)
class ContinuedFraction(RealSource):
    """``[a0; a1, a2, ...]`` from a finite prefix, optional period, or generator."""

    prefix: tuple[int, ...]
    period: tuple[int, ...] = ()
    generator: Callable[[], Iterator[int]] | None = None
    _table: _TermTable = field(init=False, repr=False, compare=False)
    kind = "cf"

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(int(t) for t in self.prefix))
        object.__setattr__(self, "period", tuple(int(t) for t in self.period))
        if self.generator is not None and (self.prefix or self.period):
            raise InvalidParameter("give either a generator or prefix/period")
        for t in self.prefix[1:] + self.period:
            if t < 1:
                raise InvalidParameter("partial quotients after a0 must be >= 1")
        object.__setattr__(self, "_table", _TermTable(self._iter_terms()))

    def _iter_terms(self) -> Iterator[int]:
        if self.generator is not None:
            first = True
            for t in self.generator():
                if not first and t < 1:
                    raise InvalidParameter("partial quotients after a0 must be >= 1")
                first = False
                yield t
            return
        yield from self.prefix
        while self.period:
            yield from self.period

    def terms(self, n: int) -> list[int]:
        return self._table.get(n)

    @property
    def is_rational(self) -> bool:
        return self.generator is None and not self.period

    def scaled(self, bits: int) -> int:
        # |x - h/k| <= 1 / (k * (k + k_prev)) for any non-final convergent
        target = 1 << (bits + 1)
        h, h_prev, k, k_prev = 1, 0, 0, 1
        n = 0
        while True:
            t = self.terms(n + 1)
            if len(t) <= n:
                return round(Fraction(h << bits, k))
            a = t[n]
            h, h_prev = a * h + h_prev, h
            k, k_prev = a * k + k_prev, k
            n += 1
            if k * (k + k_prev) >= target:
                return round(Fraction(h << bits, k))

    def to_text(self) -> str:
        if self.generator is not None:
            raise InvalidParameter("generator-backed continued fractions have no text form")
        head = str(self.prefix[0]) if self.prefix else "0"
        body = [str(t) for t in self.prefix[1:]]
        if self.period:
            body.append("(" + ",".join(str(t) for t in self.period) + ")")
        return f"cf:[{head};{','.join(body)}]"


@dataclass(frozen=True)
class DecimalLiteral(RealSource):
    """A decimal string claimed accurate to ``2**-bits``."""

    digits: str
    bits: int
    kind = "decimal"

    def __post_init__(self):
        if not re.fullmatch(r"-?\d+(\.\d*)?", self.digits):
            raise InvalidParameter(f"bad decimal literal {self.digits!r}")
        if self.bits < 1:
            raise InvalidParameter("decimal precision must be positive")

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.digits)

    def scaled(self, bits: int) -> int:
        if bits > self.bits - 1:
            raise InsufficientPrecision(
                f"decimal literal certifies {self.bits} bits, {bits + 1} requested"
            )
        return round(self.fraction * (1 << bits))

    def to_text(self) -> str:
        return f"dec:{self.digits}@{self.bits}"


# ----------------------------------------------------------------------------
# text round trip

_QUAD = re.compile(r"\(\s*([-+]?\d+)\s*([-+])\s*([-+]?\d+)\s*\*\s*sqrt\((\d+)\)\s*\)\s*/\s*([-+]?\d+)")


def parse_real(text: str) -> RealSource:
    text = text.strip()
    kind, _, body = text.partition(":")
    if kind == "rational":
        p, _, q = body.partition("/")
        return Rational(int(p), int(q or 1))
    if kind == "quad":
        m = _QUAD.fullmatch(body.strip())
        if not m:
            raise InvalidParameter(f"cannot parse quadratic source {text!r}")
        a, sign, b, d, c = m.groups()
        b = int(b) if sign == "+" else -int(b)
        return Quadratic(int(a), b, int(d), int(c))
    if kind == "cf":
        m = re.fullmatch(r"\[\s*(-?\d+)\s*(?:;(.*))?\]", body.strip())
        if not m:
            raise InvalidParameter(f"cannot parse continued fraction {text!r}")
        head, rest = m.group(1), (m.group(2) or "").strip()
        period: tuple[int, ...] = ()
        pm = re.search(r"\(([^)]*)\)\s*$", rest)
        if pm:
            period = tuple(int(t) for t in pm.group(1).split(",") if t.strip())
            rest = rest[: pm.start()].rstrip(", ")
        prefix = (int(head),) + tuple(int(t) for t in rest.split(",") if t.strip())
        return ContinuedFraction(prefix, period)
    if kind == "dec":
        digits, _, bits = body.rpartition("@")
        if not digits:
            raise InvalidParameter(f"decimal source needs '@bits': {text!r}")
        return DecimalLiteral(digits, int(bits))
    raise InvalidParameter(f"unknown real source kind {kind!r}")


def parse_pair(text: str) -> tuple[RealSource, RealSource]:
    parts = _split_top_level(text)
    if len(parts) != 2:
        raise InvalidParameter(f"expected two comma-separated sources, got {text!r}")
    return parse_real(parts[0]), parse_real(parts[1])


def _split_top_level(text: str) -> list[str]:
    out, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [p.strip() for p in out]


SQRT2 = Quadratic(0, 1, 2, 1)
SQRT3 = Quadratic(0, 1, 3, 1)
GOLDEN = Quadratic(1, 1, 5, 2)


# ----------------------------------------------------------------------------
# operations


def frac_mult(x: RealSource, q: int, precision_bits: int) -> Certified:
    """Fractional part of ``q*x`` with error at most ``2**-precision_bits``.

    The value is a point of the circle; near an integer the returned
    representative may sit on either side of 0.
    """
    if precision_bits < 1:
        raise InvalidParameter("precision_bits must be positive")
    q = int(q)
    if isinstance(x, Rational):
        return Certified(Fraction(q * x.p % x.q, x.q), Fraction(0))
    if q == 0:
        return Certified(Fraction(0), Fraction(0))
    work = precision_bits + max(abs(q).bit_length(), 1) + GUARD_BITS
    n = x.scaled(work)
    modulus = 1 << work
    return Certified(Fraction(q * n % modulus, modulus), Fraction(abs(q), modulus))


def dist_nearest_int(y):
    """Distance from ``y`` (taken mod 1) to the nearest integer."""
    if isinstance(y, Certified):
        return Certified(dist_nearest_int(y.value), y.error)
    if isinstance(y, np.ndarray):
        r = np.mod(y, 1.0)
        return np.minimum(r, 1.0 - r)
    r = y - math.floor(y)
    return min(r, 1 - r)


def continued_fraction(x: RealSource, n: int) -> list[int]:
    """First ``n`` partial quotients (fewer if ``x`` is rational)."""
    if n <= 0:
        return []
    if isinstance(x, Rational):
        return _euclid(x.p, x.q)[:n]
    if isinstance(x, ContinuedFraction):
        terms = x.terms(n)
        if x.is_rational:
            return _canonical(terms)[:n]
        return terms
    if isinstance(x, Quadratic):
        out = []
        for t in x.cf_terms():
            out.append(t)
            if len(out) == n:
                return out
    if isinstance(x, DecimalLiteral):
        err = Fraction(1, 1 << x.bits)
        lo, hi = x.fraction - err, x.fraction + err
        out = []
        while len(out) < n:
            a_lo, a_hi = math.floor(lo), math.floor(hi)
            if a_lo != a_hi:
                raise InsufficientPrecision(
                    f"decimal literal only determines {len(out)} partial quotients"
                )
            out.append(a_lo)
            lo, hi = lo - a_lo, hi - a_lo
            if lo == 0 or hi == 0:
                raise InsufficientPrecision("decimal interval reaches a rational endpoint")
            lo, hi = 1 / hi, 1 / lo
        return out
    raise InvalidParameter(f"unsupported source {x!r}")


def _euclid(p: int, q: int) -> list[int]:
    out = []
    while q:
        a = p // q
        out.append(a)
        p, q = q, p - a * q
    return out


def _canonical(terms: Sequence[int]) -> list[int]:
    terms = list(terms)
    if len(terms) > 1 and terms[-1] == 1:
        terms = terms[:-2] + [terms[-2] + 1]
    return terms


def convergents(terms: Sequence[int]) -> list[Fraction]:
    h0, h1, k0, k1 = 1, 0, 0, 1
    out = []
    for a in terms:
        h0, h1 = a * h0 + h1, h0
        k0, k1 = a * k0 + k1, k0
        out.append(Fraction(h0, k0))
    return out


# ----------------------------------------------------------------------------
# lacunary (Liouville-type) vectors


@dataclass(frozen=True)
class LacunaryVector:
    """``xi_1 = sum_m (-1)^(m-1) 2^-e_m`` and ``xi_2 = xi_1 + 2^-e_1``.

    With alternating signs the tail after index ``k`` is strictly smaller
    than its leading term, so ``||2^e_k xi_t|| < 2^-(e_{k+1} - e_k)``.
    The truncated series is rational, so the last denominator is exact.
    """

    exponents: tuple[int, ...]
    x1: Rational
    x2: Rational

    @property
    def denominators(self) -> list[int]:
        return [1 << e for e in self.exponents]

    def bound(self, k: int) -> Fraction:
        """Closed-form bound on ``||q_k xi_t||`` (1-based ``k``)."""
        e = self.exponents
        if k >= len(e):
            return Fraction(0)
        return Fraction(1, 1 << (e[k] - e[k - 1]))

    @property
    def pair(self) -> tuple[Rational, Rational]:
        return self.x1, self.x2


def lacunary_vector(exponents: Sequence[int]) -> LacunaryVector:
    e = tuple(int(v) for v in exponents)
    if len(e) < 2 or any(b <= a for a, b in zip(e, e[1:])) or e[0] < 1:
        raise InvalidParameter("exponents must be positive and strictly increasing")
    xi = sum(Fraction((-1) ** m, 1 << em) for m, em in enumerate(e))
    x1 = Rational(xi.numerator, xi.denominator)
    y = (xi + Fraction(1, 1 << e[0])) % 1
    x2 = Rational(y.numerator, y.denominator)
    return LacunaryVector(e, x1, x2)


def liouville_vector(growth: int, terms: int) -> LacunaryVector:
    """Lacunary pair with ones at binary positions ``g, g^2, ..., g^terms``."""
    if growth < 2:
        raise InvalidParameter("growth must be >= 2")
    if terms < 3:
        raise InvalidParameter("terms must be >= 3")
    return lacunary_vector([growth**m for m in range(1, terms + 1)])


# ----------------------------------------------------------------------------
# vectorised orbit scans (64-bit fixed point)

_TWO64 = 1 << 64
_SCALE53 = 2.0**-53


def fixed64(x: RealSource) -> np.uint64:
    """``frac(x)`` as a 64-bit fixed-point word, error at most one unit."""
    return np.uint64(x.scaled(64) % _TWO64)


def orbit_fracs(x: RealSource, qs: np.ndarray) -> np.ndarray:
    """``frac(q*x)`` for an integer array ``qs`` (negative entries allowed).

    Absolute error per entry is at most ``|q| * 2**-64 + 2**-53``; use
    :func:`orbit_error` for the bound.
    """
    word = fixed64(x)
    qs = np.asarray(qs)
    with np.errstate(over="ignore"):
        v = qs.astype(np.int64).view(np.uint64) * word
    return (v >> np.uint64(11)).astype(np.float64) * _SCALE53


def orbit_error(q_max: int) -> float:
    return abs(q_max) * 2.0**-64 + 2.0**-53


class Surd:
    """Exact element ``a + b*sqrt(d)`` of a real quadratic field, ``a, b`` rational.

    Supports the ring operations, division by rationals, exact comparison
    and ``floor``; enough to run exact geometry with ``sqrt(2)`` scalings.
    """

    __slots__ = ("a", "b", "d", "_approx")

    def __init__(self, a=0, b=0, d=2):
        self.a, self.b, self.d = Fraction(a), Fraction(b), int(d)
        self._approx = None

    def _float_and_scale(self):
        """Float value and a magnitude bounding its rounding error (x 1e-15)."""
        if self._approx is None:
            fa, fb = float(self.a), float(self.b) * math.sqrt(self.d)
            self._approx = (fa + fb, abs(fa) + abs(fb))
        return self._approx

    @classmethod
    def _lift(cls, other, d):
        if isinstance(other, Surd):
            if other.d != d and other.b != 0:
                raise InvalidParameter("mixed quadratic fields")
            return other
        if isinstance(other, (int, Fraction)):
            return cls(other, 0, d)
        return NotImplemented

    def __add__(self, other):
        o = self._lift(other, self.d)
        if o is NotImplemented:
            return o
        return Surd(self.a + o.a, self.b + o.b, self.d)

    __radd__ = __add__

    def __neg__(self):
        return Surd(-self.a, -self.b, self.d)

    def __sub__(self, other):
        o = self._lift(other, self.d)
        if o is NotImplemented:
            return o
        return Surd(self.a - o.a, self.b - o.b, self.d)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._lift(other, self.d)
        if o is NotImplemented:
            return o
        return Surd(self.a * o.a + self.b * o.b * self.d, self.a * o.b + self.b * o.a, self.d)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return Surd(self.a / other, self.b / other, self.d)
        o = self._lift(other, self.d)
        if o is NotImplemented:
            return o
        den = o.a * o.a - o.b * o.b * self.d
        return self * Surd(o.a / den, -o.b / den, self.d)

    def sign(self) -> int:
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sa == sb or sb == 0:
            return sa
        if sa == 0:
            return sb
        # opposite signs: compare a^2 with b^2 d
        big = self.a * self.a - self.b * self.b * self.d
        return sa if big > 0 else (sb if big < 0 else 0)

    def _cmp(self, other):
        o = self._lift(other, self.d)
        if o is NotImplemented:
            return NotImplemented
        # floats decide unless the gap is within their rounding error
        fa, ma = self._float_and_scale()
        fb, mb = o._float_and_scale()
        gap = fa - fb
        if abs(gap) > 1e-13 * (ma + mb) + 1e-300:
            return 1 if gap > 0 else -1
        return (self - o).sign()

    def __lt__(self, other):
        c = self._cmp(other)
        return c if c is NotImplemented else c < 0

    def __le__(self, other):
        c = self._cmp(other)
        return c if c is NotImplemented else c <= 0

    def __gt__(self, other):
        c = self._cmp(other)
        return c if c is NotImplemented else c > 0

    def __ge__(self, other):
        c = self._cmp(other)
        return c if c is NotImplemented else c >= 0

    def __eq__(self, other):
        c = self._cmp(other)
        return False if c is NotImplemented else c == 0

    def __hash__(self):
        return hash(self.a) if self.b == 0 else hash((self.a, self.b, self.d))

    def __float__(self):
        return self._float_and_scale()[0]

    def __floor__(self):
        n = math.floor(float(self))
        while self < n:
            n -= 1
        while self >= n + 1:
            n += 1
        return n

    def __mod__(self, m):
        return self - m * math.floor(self / m)

    def __repr__(self):
        return f"Surd({self.a}, {self.b}, {self.d})"
