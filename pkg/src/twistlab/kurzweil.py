"""Finite runs of the two twisted Kurzweil mechanisms.

``run_adversary`` builds the step function psi_0 from a witness sequence and
checks that the enlarged rectangles S*(k) cover R*(k) and that their measures
stay under the closed-form ceiling ``64 c_1^(2 min(i,j)/3)``.

``run_density`` follows the counting argument for a badly approximable x:
new orbit points landing in the doubled collection 2R_t are counted, the
remaining rectangles L_{t+1} are checked to be disjoint, and the measure
gained per level is compared with the blockwise psi_2 mass.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .badness import check_weights, profile
from .errors import InvalidParameter, PreconditionLost
from .psi import (
    ApproxFunction,
    WitnessSequence,
    build_psi0,
    build_psi2,
    refine_psi1,
    weight_constants,
)
from .realnum import RealSource, orbit_error, orbit_fracs
from .torusgeo import (
    RectCollection,
    containment_margin,
    covering_check,
    measure_error,
    orbit_collection,
    pairwise_disjoint,
    point_hits,
    psi_collection,
    union_measure,
)

MEASURE_BUDGET = 100_000

# ---------------------------------------------------------------- adversary


def adversary_bound(w: WitnessSequence) -> float:
    i, j = w.weights
    return 64 * float(w.entries[0].c) ** (2 * min(i, j) / 3)


def s_star(x, w: WitnessSequence, psi0, k: int, sabotage: float = 1.0) -> RectCollection:
    """``S*(k)``: rects at ``q x`` for ``1 <= |q| <= q_k`` with enlarged half-widths.

    ``sabotage`` multiplies ``c_k`` (only here) to build deliberately broken
    instances for testing the checker.
    """
    i, j = w.weights
    e = w.entries[k - 1]
    ck = float(e.c) * sabotage
    halves = [e.n / e.q * (ck / e.q) ** t + float(psi0(e.n)) ** t for t in (i, j)]
    r = np.arange(1, e.q + 1, dtype=np.int64)
    qs = np.concatenate([r, -r])
    coll = orbit_collection(x, qs, halves[0], halves[1], tag=f"S*({k})")
    coll.error += 4 * 2.0**-52
    return coll


def r_star(x, w: WitnessSequence, psi0, k: int) -> RectCollection:
    """``R*(k)``: the psi_0 rects for ``n_{k-1} < |q| <= n_k``."""
    i, j = w.weights
    lo = w.entries[k - 2].n if k > 1 else 0
    return psi_collection(x, psi0, i, j, lo, w.entries[k - 1].n, tag=f"R*({k})")


@dataclass
class AdversaryRun:
    weights: tuple[float, float]
    K: int
    witness: dict
    bound: float
    blocks: list = field(default_factory=list)

    @property
    def s_total(self) -> float:
        return sum(b["mu_S"] for b in self.blocks)

    @property
    def s_total_error(self) -> float:
        return sum(b["mu_S_error"] for b in self.blocks)

    @property
    def margin(self) -> float:
        return self.bound - self.s_total - self.s_total_error

    @property
    def all_covered(self) -> bool:
        return all(b["covered"] for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "K": self.K,
            "witness": self.witness,
            "bound": self.bound,
            "sum_mu_S": self.s_total,
            "sum_mu_S_error": self.s_total_error,
            "margin": self.margin,
            "bound_holds": self.margin > 0,
            "all_covered": self.all_covered,
            "blocks": self.blocks,
        }

    def blocks_csv(self) -> str:
        keys = ["k", "q_k", "c_k", "n_k", "rects_R", "rects_S", "mu_R", "mu_S", "covered"]
        lines = [",".join(keys)]
        for b in self.blocks:
            lines.append(",".join("" if b[k] is None else str(b[k]) for k in keys))
        return "\n".join(lines) + "\n"


def run_adversary(x: Sequence[RealSource], i, j, w: WitnessSequence, K: int,
                  measure_budget: int = MEASURE_BUDGET, sabotage: float = 1.0) -> AdversaryRun:
    i, j = check_weights(i, j)
    if K < 0 or K > len(w):
        raise InvalidParameter(f"K must lie in 0..{len(w)}")
    w.validate()
    run = AdversaryRun((i, j), K, w.to_dict(), adversary_bound(w) if len(w) else math.inf)
    if K == 0:
        return run
    psi0 = build_psi0(w)
    for k in range(1, K + 1):
        e = w.entries[k - 1]
        S = s_star(x, w, psi0, k, sabotage)
        R = r_star(x, w, psi0, k)
        report = covering_check(R, S, w, k)
        mu_s = union_measure(S)
        block = {
            "k": k,
            "q_k": e.q,
            "c_k": str(e.c),
            "n_k": e.n,
            "rects_R": len(R),
            "rects_S": len(S),
            "mu_S": float(mu_s),
            "mu_S_error": measure_error(S),
            "mu_R": None,
            "mu_R_error": None,
            "mu_R_note": None,
            "covered": report.covered,
            "cover": report.to_dict(),
        }
        if len(R) <= measure_budget:
            block["mu_R"] = float(union_measure(R))
            block["mu_R_error"] = measure_error(R)
        else:
            block["mu_R_note"] = f"skipped: {len(R)} rects exceed the budget {measure_budget}"
        run.blocks.append(block)
    return run


# ---------------------------------------------------------------- density


@dataclass
class DensityLevel:
    t: int
    mu_R: float
    mu_R_error: float
    precondition: float
    J_size: int = 0
    J_in_2R1: int = 0
    J_in_2R2: int = 0
    J_in_2R: int = 0
    count_bound: float = 0.0
    rects_2R1: int = 0
    rects_2R2: int = 0
    L_size: int = 0
    L_floor: float = 0.0
    L_disjoint: bool = False
    gain: float = 0.0
    gain_error: float = 0.0
    L_mass: float = 0.0
    block_mass: float = 0.0

    @property
    def checks(self) -> dict:
        return {
            "count_bound": self.J_in_2R <= self.count_bound,
            "L_floor": self.L_size >= self.L_floor,
            "L_count_identity": self.L_size >= self.J_size - self.J_in_2R,
            "L_disjoint": self.L_disjoint,
            "gain_vs_L_mass": self.gain + self.gain_error >= self.L_mass * (1 - 1e-9),
            "gain_vs_block_mass": self.gain + self.gain_error >= self.block_mass * (1 - 1e-9),
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = self.checks
        return d


@dataclass
class DensityRun:
    weights: tuple[float, float]
    k: int
    t0: int
    T: int
    c: float
    c_provenance: str
    levels: list = field(default_factory=list)
    terminated_by: str | None = None
    terminal_level: int | None = None
    terminal_measure: float | None = None

    @property
    def ok(self) -> bool:
        return all(all(lv.checks.values()) for lv in self.levels)

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "k": self.k,
            "t0": self.t0,
            "T": self.T,
            "c": self.c,
            "c_provenance": self.c_provenance,
            "terminated_by": self.terminated_by,
            "terminal_level": self.terminal_level,
            "terminal_measure": self.terminal_measure,
            "all_checks_pass": self.ok,
            "levels": [lv.to_dict() for lv in self.levels],
        }

    def levels_csv(self) -> str:
        keys = ["t", "mu_R", "J_size", "J_in_2R1", "J_in_2R2", "J_in_2R", "count_bound",
                "L_size", "L_floor", "L_disjoint", "gain", "block_mass"]
        lines = [",".join(keys)]
        for lv in self.levels:
            d = asdict(lv)
            lines.append(",".join(str(d[k]) for k in keys))
        return "\n".join(lines) + "\n"


def _badness_constant(x, i, j, Q: int) -> float:
    prof = profile(x, i, j, Q)
    if prof.rational_degeneracy or not prof.c_estimate > 0:
        raise InvalidParameter("x hits a rational point below the scan limit")
    return prof.c_estimate


def run_density(x: Sequence[RealSource], i, j, psi: ApproxFunction, k: int, t0: int, T: int,
                c: float | None = None, raise_on_lost: bool = False) -> DensityRun:
    """Levels ``t = t0+1 .. T`` of the counting argument.

    ``c`` defaults to the record minimum of a profile with ``Q = 2 k^(T+1)``,
    which is exactly the separation the counting uses.  The run stops at the
    first level whose measure reaches ``a_* c / 8`` and records it.
    """
    i, j = check_weights(i, j)
    if int(k) != k or k <= 4:
        raise InvalidParameter(f"block base must be an integer > 4, got {k}")
    if not 1 <= t0 < T:
        raise InvalidParameter("need 1 <= t0 < T")
    Q = 2 * k ** (T + 1)
    prov = f"supplied"
    if c is None:
        c = _badness_constant(x, i, j, Q)
        prov = f"profile record minimum over q <= {Q}"
    c = min(float(c), 1 - 1e-12)
    psi1 = refine_psi1(psi, c, i, j)
    psi2 = build_psi2(psi1, k)
    a_lo = float(weight_constants(i, j)[1])
    threshold = a_lo * c / 8
    run = DensityRun((i, j), k, t0, T, c, prov)

    base = k**t0
    for t in range(t0 + 1, T + 1):
        lo, hi = k**t, k ** (t + 1)
        R_t = psi_collection(x, psi2, i, j, base, lo, tag=f"R_{t}")
        mu_t = float(union_measure(R_t))
        err_t = measure_error(R_t)
        lv = DensityLevel(t, mu_t, err_t, threshold)
        if mu_t + err_t >= threshold:
            run.terminated_by, run.terminal_level, run.terminal_measure = \
                "PreconditionLost", t, mu_t
            if raise_on_lost:
                raise PreconditionLost(t, mu_t, threshold)
            break
        twoR = psi_collection(x, psi2, i, j, base, lo, factor=2.0, tag=f"2R_{t}")
        r_abs = np.abs(twoR.labels)
        part1 = 2 * psi2.values(r_abs) < a_lo * c / (2 * hi)
        two1, two2 = twoR.select(part1), twoR.select(~part1)

        r = np.arange(lo + 1, hi + 1, dtype=np.int64)
        qs = np.concatenate([r, -r])
        px, py = orbit_fracs(x[0], qs), orbit_fracs(x[1], qs)
        slack = orbit_error(hi) + twoR.error
        in1 = point_hits(two1, px, py, slack)
        in2 = point_hits(two2, px, py, slack)
        in_any = in1 | in2

        lv.J_size = int(qs.size)
        lv.J_in_2R1, lv.J_in_2R2, lv.J_in_2R = int(in1.sum()), int(in2.sum()), int(in_any.sum())
        lv.rects_2R1, lv.rects_2R2 = len(two1), len(two2)
        lv.count_bound = 2 * lo + hi / 2
        lv.L_size = int((~in_any).sum())
        lv.L_floor = hi / 2

        p2 = float(psi2(hi))
        h1, h2 = p2**i, p2**j
        L = orbit_collection(x, qs[~in_any], h1, h2, tag=f"L_{t + 1}")
        lv.L_disjoint = pairwise_disjoint(L)
        lv.L_mass = 4 * p2 * lv.L_size

        R_next = psi_collection(x, psi2, i, j, base, hi, tag=f"R_{t + 1}")
        mu_next = float(union_measure(R_next))
        lv.gain = mu_next - mu_t
        lv.gain_error = measure_error(R_next) + err_t
        lv.block_mass = 2 * (hi - lo) * p2
        run.levels.append(lv)
    return run


# ---------------------------------------------------------------- shifts


def density_shift_check(x: Sequence[RealSource], psi: ApproxFunction, psi4: ApproxFunction,
                        q_shift: int, Qtest: int, i: float = 0.5, j: float = 0.5,
                        samples: int = 200, seed: int = 0) -> dict:
    """Eventual ``psi4(|q|) < psi(|q+q'|)`` and translated containment of rects."""
    i, j = check_weights(i, j)
    q = np.arange(1, Qtest + 1, dtype=np.int64)
    q = q[q + q_shift != 0]
    ratio = psi4.values(q) / psi.values(np.abs(q + q_shift))
    above = np.nonzero(ratio >= 1)[0]
    threshold = int(q[above[-1]]) + 1 if above.size else 1

    rng = np.random.default_rng(seed)
    tail = q[q >= threshold]
    pick = rng.choice(tail, size=min(samples, tail.size), replace=False) if tail.size else tail
    pick = np.sort(pick)
    v4 = psi4.values(pick)
    v = psi.values(np.abs(pick + q_shift))
    moved_x = (orbit_fracs(x[0], pick) + orbit_fracs(x[0], np.array([q_shift]))[0]) % 1.0
    moved_y = (orbit_fracs(x[1], pick) + orbit_fracs(x[1], np.array([q_shift]))[0]) % 1.0
    tx, ty = orbit_fracs(x[0], pick + q_shift), orbit_fracs(x[1], pick + q_shift)
    err = 3 * orbit_error(int(np.abs(pick).max(initial=1)) + abs(q_shift)) + 2.0**-50
    mx = containment_margin(tx, v**i, moved_x, v4**i)
    my = containment_margin(ty, v**j, moved_y, v4**j)
    margin = np.minimum(mx, my)
    identity_gap = float(np.max(np.maximum(
        np.abs((moved_x - tx + 0.5) % 1 - 0.5), np.abs((moved_y - ty + 0.5) % 1 - 0.5)),
        initial=0.0))
    return {
        "q_shift": q_shift,
        "Qtest": Qtest,
        "ratio_threshold": threshold,
        "ratio_max_tail": float(ratio[q >= threshold].max(initial=0.0)),
        "sampled": int(pick.size),
        "contained": bool(np.all(margin > err)) if pick.size else True,
        "min_margin": float(margin.min(initial=math.inf)),
        "identity_gap": identity_gap,
        "error": err,
    }
