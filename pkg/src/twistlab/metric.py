"""Monte-Carlo checks of the doubly metric zero-one law and Gallagher's sum.

Samples ``(x, gamma)`` are 64-bit dyadics, so ``q x - gamma mod 1`` is computed
exactly with wrapping unsigned arithmetic.  Hit tests never use the area
formulas; those only supply the expectation ``E = sum_q mu(A_q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidParameter, OutOfDomain
from .psi import (
    CONVERGES,
    DIVERGES,
    UNKNOWN,
    ApproxFunction,
    Constant,
    LogHarmonic,
    PowerLaw,
)

SHAPES = ("interval", "sup_norm", "multiplicative")
RNG_TAG = "numpy.PCG64/SeedSequence.spawn"
EPS_GRID = (0.1, 0.25, 0.5)
SAMPLE_CHUNK = 1 << 16
_TWO64 = 2.0**64


@dataclass(frozen=True)
class RegionFamily:
    shape: str
    psi: ApproxFunction
    i: float = 0.5
    j: float = 0.5

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidParameter(f"shape must be one of {SHAPES}")
        if self.shape == "sup_norm" and not (self.i > 0 and self.j > 0
                                             and abs(self.i + self.j - 1) < 1e-12):
            raise InvalidParameter("weights must satisfy i, j > 0 and i + j = 1")

    @property
    def d(self) -> int:
        return 1 if self.shape == "interval" else 2

    def describe(self) -> dict:
        return {"shape": self.shape, "d": self.d, "i": self.i, "j": self.j,
                "psi": self.psi.to_dict()}


def multiplicative_area(t: float) -> float:
    """Area of ``{u in [-1/2,1/2]^2 : |u1| |u2| <= t}`` for ``0 < t <= 1/4``."""
    if not 0 < t <= 0.25:
        raise OutOfDomain(f"multiplicative closed form needs 0 < t <= 1/4, got {t}")
    return 4 * t * (1 + math.log(1 / (4 * t)))


def region_measure(f: RegionFamily, q: int) -> float:
    if q < 1:
        raise InvalidParameter("q must be >= 1")
    t = float(f.psi(q))
    if f.shape == "interval":
        return min(2 * t, 1.0)
    if f.shape == "sup_norm":
        return min(2 * t**f.i, 1.0) * min(2 * t**f.j, 1.0)
    return multiplicative_area(t)


def expected_hits(f: RegionFamily, Q: int, Q0: int = 1) -> float:
    return math.fsum(region_measure(f, q) for q in range(Q0, Q + 1))


# ---------------------------------------------------------------- sampling


def _uniform64(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2**64, size=shape, dtype=np.uint64, endpoint=False)


def _dist64(u: np.ndarray) -> np.ndarray:
    """Distance to the nearest integer of ``u / 2^64`` as an unsigned integer."""
    return np.minimum(u, np.uint64(0) - u)


def _int_threshold(t: float) -> np.uint64:
    """Largest integer ``n`` with ``n / 2^64 <= t`` (capped at 2^63)."""
    n = math.floor(Fraction(t) * 2**64)
    return np.uint64(min(max(n, 0), 2**63))


def _hit_counts(f: RegionFamily, X: np.ndarray, G: np.ndarray, qs: Sequence[int]):
    """Per-sample hit counts over ``qs``; ``X, G`` have shape (d, n)."""
    counts = np.zeros(X.shape[1], dtype=np.int64)
    for q in qs:
        t = float(f.psi(q))
        u = [_dist64(np.uint64(q) * X[a] - G[a]) for a in range(f.d)]
        if f.shape == "interval":
            hit = u[0] <= _int_threshold(t)
        elif f.shape == "sup_norm":
            hit = (u[0] <= _int_threshold(t**f.i)) & (u[1] <= _int_threshold(t**f.j))
        else:
            if t > 0.25:
                raise OutOfDomain("multiplicative family needs psi <= 1/4")
            hit = (u[0].astype(np.float64) / _TWO64) * (u[1].astype(np.float64) / _TWO64) <= t
        counts += hit
    return counts


def _sample_chunks(seed: int, N: int, d: int):
    n_chunks = max(1, -(-N // SAMPLE_CHUNK))
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    for c, ss in enumerate(children):
        n = min(SAMPLE_CHUNK, N - c * SAMPLE_CHUNK)
        rng = np.random.Generator(np.random.PCG64(ss))
        yield _uniform64(rng, (d, n)), _uniform64(rng, (d, n))


@dataclass
class McRun:
    family: dict
    seed: int
    N: int
    Q: int
    E: float
    mean: float
    std: float
    second_moment: float
    pz_table: dict = field(default_factory=dict)
    counts_max: int = 0

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.N)

    @property
    def z(self) -> float:
        return (self.mean - self.E) / self.stderr if self.stderr > 0 else 0.0

    def verdicts(self, k_sigma: float = 4.0) -> dict:
        # a sample with no spread still carries Poisson uncertainty of order sqrt(E/N)
        sigma = self.stderr if self.std > 0 else math.sqrt(self.E / self.N)
        out = {"expectation": abs(self.mean - self.E) <= k_sigma * sigma}
        for eps, row in self.pz_table.items():
            out[f"paley_zygmund@{eps}"] = row["empirical"] >= row["floor"] - 3 * row["sigma"]
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family, "seed": self.seed, "N": self.N, "Q": self.Q,
            "rng": RNG_TAG, "E_analytic": self.E, "mean": self.mean, "std": self.std,
            "stderr": self.stderr, "z": self.z, "second_moment": self.second_moment,
            "counts_max": self.counts_max,
            "pz_table": {str(k): v for k, v in self.pz_table.items()},
            "verdicts": self.verdicts(),
        }


def run_mc(f: RegionFamily, N: int, Q: int, seed: int, eps_grid=EPS_GRID) -> McRun:
    """Sample ``A_Q(x, gamma) = #{q <= Q : q x - gamma in A_q mod 1}``."""
    if N < 1000:
        raise InvalidParameter("N must be >= 1000")
    if Q < 1:
        raise InvalidParameter("Q must be >= 1")
    qs = range(1, Q + 1)
    counts = np.concatenate([_hit_counts(f, X, G, qs) for X, G in _sample_chunks(seed, N, f.d)])
    E = expected_hits(f, Q)
    A = counts.astype(np.float64)
    m2 = float(np.mean(A * A))
    table = {}
    for eps in eps_grid:
        frac = float(np.mean(A >= eps * E)) if E > 0 else 1.0
        floor = (1 - eps) ** 2 * E * E / m2 if m2 > 0 else 0.0
        table[eps] = {"floor": floor, "empirical": frac,
                      "sigma": math.sqrt(max(frac * (1 - frac), 0.0) / N)}
    return McRun(f.describe(), seed, N, Q, E, float(A.mean()), float(A.std(ddof=1)), m2,
                 table, int(counts.max(initial=0)))


def convergence_check(f: RegionFamily, N: int, Q0: int, Q1: int, seed: int) -> dict:
    """Fraction of samples with a hit for some ``Q0 <= q <= Q1`` against the tail sum."""
    if not 1 <= Q0 <= Q1:
        raise InvalidParameter("need 1 <= Q0 <= Q1")
    qs = range(Q0, Q1 + 1)
    any_hit = np.concatenate([_hit_counts(f, X, G, qs) > 0
                              for X, G in _sample_chunks(seed, N, f.d)])
    frac = float(any_hit.mean())
    sigma = math.sqrt(max(frac * (1 - frac), 1.0 / N) / N)
    tail = expected_hits(f, Q1, Q0)
    return {"Q0": Q0, "Q1": Q1, "N": N, "seed": seed, "fraction_hit": frac,
            "tail_sum": tail, "sigma": sigma, "holds": frac <= tail + 3 * sigma}


# ---------------------------------------------------------------- Gallagher


def gallagher_sum(psi: ApproxFunction, N: int) -> tuple[float, float]:
    """``sum_{r<=N} psi(r) log(1/psi(r))`` with a floating-point error bound."""
    if float(psi(1)) > 1:
        raise OutOfDomain("Gallagher's sum needs psi <= 1")
    parts = []
    for a in range(1, N + 1, 1 << 18):
        v = psi.values(np.arange(a, min(a + (1 << 18), N + 1), dtype=np.int64))
        parts.append(math.fsum(v * np.log(1 / v)))
    total = math.fsum(parts)
    return total, 8 * N * 2.0**-52 * max(total, 1.0)


def gallagher_tag(psi: ApproxFunction) -> str:
    """Analytic convergence tag of ``sum psi log(1/psi)`` for the closed families."""
    if isinstance(psi, PowerLaw):
        return CONVERGES if psi.s > 1 else DIVERGES
    if isinstance(psi, (Constant, LogHarmonic)):
        return DIVERGES
    return UNKNOWN
