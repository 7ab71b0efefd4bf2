"""Global-stability thresholds and the theorem-case classifier.

Six thresholds partition the (d1, d2/r) plane for fixed competition
coefficients.  ``classify_global`` returns the single theorem case whose
hypotheses a parameter point satisfies, one of the two documented gaps where
global behaviour is open, or ``no_theorem``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import UndefinedThreshold
from .model import REL_TOL, ModelParams, StateKind, near


@dataclass(frozen=True)
class Thresholds:
    """Threshold values; ``None`` marks a threshold whose radicand is negative.

    The d2-type thresholds live on the d2/r axis.
    """

    d1h: float | None
    d2h: float | None
    d1c: float | None
    d2c: float | None
    d1r: float | None
    d2r: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {k: getattr(self, k) for k in ("d1h", "d2h", "d1c", "d2c", "d1r", "d2r")}

    def undefined(self) -> list[str]:
        return [k for k, v in self.as_dict().items() if v is None]


def _root(x: float) -> float | None:
    if x < 0:
        return None
    return math.sqrt(x)


# a1*a2 within this many ulps of 1 counts as on the curve a1*a2 = 1: for a2 = fl(1/a1)
# the rounded product misses 1 by up to ~2 ulp, and sqrt(1 - a1 a2) would turn that
# into a spurious 1e-8 relative shift.
HYPERBOLA_ULPS = 4


def one_minus_product(a1: float, a2: float) -> float:
    x = 1.0 - a1 * a2
    return 0.0 if abs(x) <= HYPERBOLA_ULPS * 2.220446049250313e-16 else x


def thresholds(a1: float, a2: float, d1: float) -> Thresholds:
    s1 = _root(1.0 - a1)  # sqrt(1 - a1)
    s12 = _root(one_minus_product(a1, a2))  # sqrt(1 - a1 a2)
    s2 = _root(1.0 - a2)  # sqrt(1 - a2)

    d1h = d2h = d1c = d2c = d1r = d2r = None
    if s1 is not None:
        # 1 - sqrt(1 - a1) written without cancellation
        g = a1 / (1.0 + s1)
        d1c = a1 * a2 / g**2 - a2
        d2c = 4.0 / (g + a1 * a2 / (g * (a2 + d1))) ** 2 - 1.0
        if s12 is not None:
            d1h = ((1.0 + s12) / g) ** 2 - a2
    if s12 is not None:
        k = 1.0 + s12
        d2h = 0.25 * (a1 * (a2 + d1) / k + k) ** 2 - 1.0
    if s2 is not None:
        k = 1.0 + s2
        d1r = k**2 - a2
        d2r = 0.25 * a1 * ((a2 + d1) / k + k) ** 2 - a1
    return Thresholds(d1h, d2h, d1c, d2c, d1r, d2r)


def d1h_alternate(a1: float, a2: float) -> float:
    """Second closed form of the heterogeneous d1 threshold, used as a cross-check."""
    r = one_minus_product(a1, a2)
    if a1 > 1.0 or r < 0.0:
        raise UndefinedThreshold(f"need a1 <= 1 and a1*a2 <= 1, got a1={a1}, a1*a2={a1 * a2}")
    return ((1.0 + math.sqrt(r)) * (1.0 + math.sqrt(1.0 - a1)) / a1) ** 2 - a2


def d1_lower_ordering_bound(a1: float, a2: float) -> float:
    """Left endpoint of the d1 window on which d2c >= d1 + a2 - 1 (a1 < 1, a1 a2 < 1)."""
    g = a1 / (1.0 + math.sqrt(1.0 - a1))
    return (a1 * a2 / (1.0 + math.sqrt(1.0 - a1 * a2)) / g) ** 2 - a2


class CaseTag(str, Enum):
    T11_i = "T11_i"
    T11_ii = "T11_ii"
    T12_i = "T12_i"
    T12_ii = "T12_ii"
    T12_iii = "T12_iii"
    T12_iv = "T12_iv"
    T13_i = "T13_i"
    T13_ii = "T13_ii"
    UNKNOWN_GAP = "unknown_gap"
    NO_THEOREM = "no_theorem"


ATTRACTOR = {
    CaseTag.T11_i: StateKind.HETEROGENEOUS,
    CaseTag.T11_ii: StateKind.HETEROGENEOUS,
    CaseTag.T12_i: StateKind.HOMOGENEOUS_TUMOR,
    CaseTag.T12_ii: StateKind.HOMOGENEOUS_TUMOR,
    CaseTag.T12_iii: StateKind.HOMOGENEOUS_TUMOR,
    CaseTag.T12_iv: StateKind.HOMOGENEOUS_TUMOR,
    CaseTag.T13_i: StateKind.HEALTHY,
    CaseTag.T13_ii: StateKind.HEALTHY,
}

# tie-break order if two cases ever matched (they cannot; asserted below)
_ORDER = [
    CaseTag.T11_i, CaseTag.T11_ii,
    CaseTag.T12_i, CaseTag.T12_ii, CaseTag.T12_iii, CaseTag.T12_iv,
    CaseTag.T13_i, CaseTag.T13_ii,
]


@dataclass(frozen=True)
class GlobalClassification:
    case_tag: CaseTag
    predicted_attractor: StateKind | None
    notes: tuple[str, ...] = ()
    requires_v0_le_1: bool = False
    boundary: bool = False
    thresholds: Thresholds | None = field(default=None, compare=False)

    def as_dict(self) -> dict:
        return {
            "case_tag": self.case_tag.value,
            "predicted_attractor": None if self.predicted_attractor is None else self.predicted_attractor.value,
            "notes": list(self.notes),
            "requires_v0_le_1": self.requires_v0_le_1,
            "boundary": self.boundary,
        }


class _Cmp:
    """Tolerance-banded comparisons that remember near-equality hits.

    Strict tests (``lt``/``gt``) fail inside the band; non-strict tests
    (``le``/``ge``) pass inside it, so ``le``/``gt`` and ``lt``/``ge`` stay
    complementary.
    """

    def __init__(self, tol: float = REL_TOL):
        self.tol = tol
        self.hits: list[str] = []

    def _band(self, a: float, b: float) -> float:
        return self.tol * max(1.0, abs(a), abs(b))

    def lt(self, a: float, b: float, what: str = "") -> bool:
        if near(a, b, self.tol) and what:
            self.hits.append(what)
        return a < b - self._band(a, b)

    def gt(self, a: float, b: float, what: str = "") -> bool:
        if near(a, b, self.tol) and what:
            self.hits.append(what)
        return a > b + self._band(a, b)

    def le(self, a: float, b: float) -> bool:
        return not self.gt(a, b)

    def ge(self, a: float, b: float) -> bool:
        return not self.lt(a, b)


def _defined(*xs: float | None) -> bool:
    return all(x is not None for x in xs)


def theorem_cases(p: ModelParams, th: Thresholds | None = None, cmp: _Cmp | None = None) -> list[CaseTag]:
    """Every theorem case whose hypotheses hold at ``p`` (at most one in practice)."""
    th = th or thresholds(p.a1, p.a2, p.d1)
    cmp = cmp or _Cmp()
    a1, a2, d1, q = p.a1, p.a2, p.d1, p.d2_over_r
    ab = a1 * a2
    lin = d1 + a2 - 1.0
    out: list[CaseTag] = []

    a1_lt_1 = cmp.lt(a1, 1.0, "a1 = 1")
    a1_gt_1 = cmp.gt(a1, 1.0, "a1 = 1")
    ab_lt_1 = cmp.lt(ab, 1.0, "a1*a2 = 1")

    # heterogeneous state
    if a1_lt_1 and ab_lt_1 and _defined(th.d1h, th.d2h):
        if cmp.le(d1, th.d1h) and cmp.gt(q, lin, "d2/r = d1 + a2 - 1"):
            out.append(CaseTag.T11_i)
        if cmp.gt(d1, th.d1h) and cmp.gt(q, th.d2h, "d2/r = d2h"):
            out.append(CaseTag.T11_ii)

    # homogeneous tumor state
    if a1_lt_1 and _defined(th.d1c, th.d2c):
        if cmp.le(d1, th.d1c) and cmp.lt(q, (d1 + a2) / max(ab, 1.0) - 1.0, "d2/r = (d1+a2)/max(a1a2,1) - 1"):
            out.append(CaseTag.T12_i)
        if ab_lt_1 and _defined(th.d1h):
            if cmp.gt(d1, th.d1c) and cmp.le(d1, th.d1h) and cmp.lt(q, lin, "d2/r = d1 + a2 - 1"):
                out.append(CaseTag.T12_ii)
            if cmp.gt(d1, th.d1h) and cmp.lt(q, th.d2c, "d2/r = d2c"):
                out.append(CaseTag.T12_iii)
        if cmp.ge(ab, 1.0) and cmp.gt(d1, th.d1c) and cmp.lt(q, th.d2c, "d2/r = d2c"):
            out.append(CaseTag.T12_iv)

    # healthy state
    if a1_gt_1 and cmp.lt(a2, 1.0, "a2 = 1") and _defined(th.d1r, th.d2r):
        if cmp.le(d1, th.d1r) and cmp.gt(q, a1 * lin, "d2/r = a1 (d1 + a2 - 1)"):
            out.append(CaseTag.T13_i)
        if cmp.gt(d1, th.d1r) and cmp.gt(q, th.d2r, "d2/r = d2r"):
            out.append(CaseTag.T13_ii)
    return out


def classify_global(p: ModelParams) -> GlobalClassification:
    th = thresholds(p.a1, p.a2, p.d1)
    cmp = _Cmp()
    cases = theorem_cases(p, th, cmp)
    assert len(cases) <= 1, f"theorem cases overlap at {p}: {cases}"
    if cases:
        tag = min(cases, key=_ORDER.index)
        healthy = tag in (CaseTag.T13_i, CaseTag.T13_ii)
        notes = ("global convergence additionally requires v0 <= 1",) if healthy else ()
        return GlobalClassification(tag, ATTRACTOR[tag], notes, requires_v0_le_1=healthy, thresholds=th)

    a1, a2, d1, q = p.a1, p.a2, p.d1, p.d2_over_r
    ab = a1 * a2
    lin = d1 + a2 - 1.0
    gap = _Cmp()
    if gap.lt(a1, 1.0) and th.d1h is not None and gap.gt(d1, th.d1h):
        if gap.lt(ab, 1.0) and th.d2h is not None and gap.gt(q, lin) and gap.le(q, th.d2h):
            return GlobalClassification(
                CaseTag.UNKNOWN_GAP, None,
                ("coexistence state is linearly stable; global stability open for d1 + a2 - 1 < d2/r <= d2h",),
                thresholds=th,
            )
        if gap.le(ab, 1.0) and th.d2c is not None and gap.ge(q, th.d2c) and gap.lt(q, lin):
            return GlobalClassification(
                CaseTag.UNKNOWN_GAP, None,
                ("homogeneous tumor state is linearly stable; global stability open for d2c <= d2/r < d1 + a2 - 1",),
                thresholds=th,
            )

    notes: list[str] = []
    boundary = bool(cmp.hits)
    if boundary:
        notes.append("on a theorem boundary (equality within tolerance): " + ", ".join(sorted(set(cmp.hits))))
    if a1 > 1.0 and cmp.lt(q, lin):
        notes.append("bistable: healthy and homogeneous tumor states are both linearly stable")
    elif a1 < 1.0 and ab > 1.0 and cmp.lt(q, lin):
        notes.append("homogeneous tumor state is linearly stable but no theorem covers this point")
    return GlobalClassification(CaseTag.NO_THEOREM, None, tuple(notes), boundary=boundary, thresholds=th)
