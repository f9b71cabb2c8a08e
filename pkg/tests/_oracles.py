"""Independent reference computations shared by the tests.

Everything here uses ``decimal`` at 60+ digits or plain Fraction
arithmetic and never calls into the package.
"""

import math
from decimal import Decimal, getcontext
from fractions import Fraction

getcontext().prec = 80


def dsqrt(n) -> Decimal:
    return Decimal(n).sqrt()


def dfrac(x: Decimal) -> Decimal:
    return x - int(x) if x >= 0 else x - int(x) + 1


def ddist(x: Decimal) -> Decimal:
    f = dfrac(x)
    return min(f, 1 - f)


def cf_terms(x: Decimal, n: int) -> list[int]:
    out = []
    for _ in range(n):
        a = math.floor(x)
        out.append(a)
        x = 1 / (x - a)
    return out


def weighted_min(x1: Decimal, x2: Decimal, i: float, j: float, Q: int):
    """Exhaustive ``min_{q<=Q} q max(||q x1||^(1/i), ||q x2||^(1/j))``."""
    best, arg = None, None
    for q in range(1, Q + 1):
        a, b = ddist(q * x1), ddist(q * x2)
        v = q * max(a ** Decimal(1 / i), b ** Decimal(1 / j)) if (i, j) != (0.5, 0.5) \
            else q * max(a, b) ** 2
        if best is None or v < best:
            best, arg = v, q
    return best, arg


def harmonic(n: int) -> Fraction:
    return sum(Fraction(1, r) for r in range(1, n + 1))


def pixel_area(rects, res: int) -> float:
    """Union area of torus rectangles ``(cx, cy, hx, hy)`` on a ``res x res`` pixel grid."""
    import numpy as np

    g = (np.arange(res) + 0.5) / res
    X, Y = np.meshgrid(g, g, indexing="ij")
    hit = np.zeros_like(X, dtype=bool)
    for cx, cy, hx, hy in rects:
        dx = np.abs((X - cx + 0.5) % 1.0 - 0.5)
        dy = np.abs((Y - cy + 0.5) % 1.0 - 0.5)
        hit |= (dx <= hx) & (dy <= hy)
    return float(hit.mean())
