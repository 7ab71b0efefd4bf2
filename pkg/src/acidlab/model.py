"""Model parameters, closed-form steady states and the linear-stability table.

The system is

    u_t = u (1 - u - a2 v) - d1 u w
    v_t = D div((1 - u) grad v) + r v (1 - a1 u - v) - d2 v w
    w_t = lap w + c (v - w)

with zero-flux boundaries for v and w.  Every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum

from .errors import DegenerateDenominator, InvalidParameter

#: relative width of the equality band for the strict inequalities
REL_TOL = 1e-12


def near(a: float, b: float, tol: float = REL_TOL) -> bool:
    """True when ``a`` and ``b`` agree to ``tol`` relative to max(1, |a|, |b|)."""
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class ModelParams:
    D: float
    d1: float
    d2: float
    r: float
    c: float
    a1: float
    a2: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise InvalidParameter(f"{f.name} must be a real number, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise InvalidParameter(f"{f.name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        q = self.d2 / self.r
        if not math.isfinite(q) or q <= 0:
            raise InvalidParameter(f"d2/r must be finite and > 0, got {q!r}")

    @property
    def d2_over_r(self) -> float:
        return self.d2 / self.r

    @classmethod
    def from_ratio(
        cls,
        a1: float,
        a2: float,
        d1: float,
        d2_over_r: float,
        r: float = 1.0,
        c: float = 1.0,
        D: float = 1.0,
    ) -> "ModelParams":
        """Build parameters from the (a1, a2, d1, d2/r) coordinates used by the theorems."""
        return cls(D=D, d1=d1, d2=d2_over_r * r, r=r, c=c, a1=a1, a2=a2)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class StateKind(str, Enum):
    TRIVIAL = "trivial"
    HEALTHY = "healthy"
    HOMOGENEOUS_TUMOR = "homogeneous_tumor"
    HETEROGENEOUS = "heterogeneous"


@dataclass(frozen=True)
class SteadyState:
    kind: StateKind
    u_star: float
    v_star: float
    w_star: float

    @property
    def exists_positive(self) -> bool:
        """All three components strictly positive (meaningful for the coexistence state)."""
        return self.u_star > 0 and self.v_star > 0 and self.w_star > 0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.u_star, self.v_star, self.w_star)


@dataclass(frozen=True)
class StabilityVerdict:
    """``exists_positive`` is True when the state is an admissible equilibrium:
    always for the trivial, healthy and homogeneous tumor states, and for the
    coexistence state only when all of its components are positive."""

    state_kind: StateKind
    exists_positive: bool
    linear: str  # "stable" | "unstable" | "boundary"


def trivial_state() -> SteadyState:
    return SteadyState(StateKind.TRIVIAL, 0.0, 0.0, 0.0)


def healthy_state() -> SteadyState:
    return SteadyState(StateKind.HEALTHY, 1.0, 0.0, 0.0)


def homogeneous_tumor_state(p: ModelParams) -> SteadyState:
    vt = 1.0 / (1.0 + p.d2_over_r)
    return SteadyState(StateKind.HOMOGENEOUS_TUMOR, 0.0, vt, vt)


def heterogeneous_state(p: ModelParams) -> SteadyState:
    """Coexistence equilibrium; components may be non-positive outside its existence range."""
    q = p.d2_over_r
    terms = (1.0, -p.a1 * p.a2, q, -p.a1 * p.d1)
    den = math.fsum(terms)
    scale = max(abs(t) for t in terms)
    if abs(den) <= REL_TOL * scale:
        raise DegenerateDenominator(
            f"1 - a1*a2 + d2/r - a1*d1 = {den!r} vanishes (a1={p.a1}, a2={p.a2}, d1={p.d1}, d2/r={q})"
        )
    vh = (1.0 - p.a1) / den
    return SteadyState(StateKind.HETEROGENEOUS, 1.0 - (p.a2 + p.d1) * vh, vh, vh)


def all_states(p: ModelParams) -> dict[StateKind, SteadyState | None]:
    """The four equilibria; the coexistence entry is None when its denominator vanishes."""
    try:
        het = heterogeneous_state(p)
    except DegenerateDenominator:
        het = None
    return {
        StateKind.TRIVIAL: trivial_state(),
        StateKind.HEALTHY: healthy_state(),
        StateKind.HOMOGENEOUS_TUMOR: homogeneous_tumor_state(p),
        StateKind.HETEROGENEOUS: het,
    }


def _sign(a: float, b: float) -> int:
    """-1, 0, +1 for a < b, a ~ b, a > b."""
    if near(a, b):
        return 0
    return -1 if a < b else 1


def linear_stability(p: ModelParams, s: SteadyState) -> StabilityVerdict:
    """Classify ``s`` with the linear-stability table of the model.

    A coexistence state that is not positive is reported ``unstable`` with
    ``exists_positive=False``; it is not an admissible attractor.
    """
    kind = StateKind(s.kind)
    if kind is StateKind.TRIVIAL:
        return StabilityVerdict(kind, True, "unstable")
    if kind is StateKind.HEALTHY:
        sa = _sign(p.a1, 1.0)
        return StabilityVerdict(kind, True, "boundary" if sa == 0 else ("stable" if sa > 0 else "unstable"))

    sq = _sign(p.d2_over_r, p.a2 + p.d1 - 1.0)
    if kind is StateKind.HOMOGENEOUS_TUMOR:
        return StabilityVerdict(kind, True, "boundary" if sq == 0 else ("stable" if sq < 0 else "unstable"))

    sa = _sign(p.a1, 1.0)
    if sa == 0 or sq == 0:
        return StabilityVerdict(kind, False, "boundary")
    if sa < 0 and sq > 0:
        return StabilityVerdict(kind, True, "stable")
    if sa > 0 and sq < 0:
        return StabilityVerdict(kind, True, "unstable")
    return StabilityVerdict(kind, False, "unstable")
