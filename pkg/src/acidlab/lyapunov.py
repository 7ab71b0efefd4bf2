"""Lyapunov certificates for the three nontrivial equilibria.

For each regime the time derivative of an entropy-type functional E is
bounded by -X^T P X - (eta/c)|grad w|^2, where P is a symmetric 3x3 matrix
depending on two free weights (beta, eta).  P is positive definite exactly
when beta lies in the overlap of the positivity windows of two concave
quadratics Phi and Psi; eta is then taken at the vertex of the determinant
quadratic.  ``find_certificate`` constructs such a pair and reports the
minors and a decay constant epsilon.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import NoCertificate, NonpositiveDensity
from .model import ModelParams, SteadyState, StateKind


class Regime(str, Enum):
    HETEROGENEOUS = "h"
    HOMOGENEOUS_TUMOR = "c"
    HEALTHY = "r"

    @property
    def state_kind(self) -> StateKind:
        return {
            Regime.HETEROGENEOUS: StateKind.HETEROGENEOUS,
            Regime.HOMOGENEOUS_TUMOR: StateKind.HOMOGENEOUS_TUMOR,
            Regime.HEALTHY: StateKind.HEALTHY,
        }[self]

    @classmethod
    def for_state(cls, kind: StateKind | str) -> "Regime":
        kind = StateKind(kind)
        for reg in cls:
            if reg.state_kind is kind:
                return reg
        raise ValueError(f"no Lyapunov regime for state {kind.value!r}")


RegimeTag = Regime


@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi); empty when lo >= hi."""

    lo: float
    hi: float

    @property
    def empty(self) -> bool:
        return not self.lo < self.hi

    def __contains__(self, x: float) -> bool:
        return self.lo < x < self.hi

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def as_list(self) -> list[float] | None:
        return None if self.empty else [self.lo, self.hi]


EMPTY = Interval(math.inf, -math.inf)


def quad_eval(coeffs: tuple[float, float, float], x: float) -> float:
    a, b, c = coeffs
    return (a * x + b) * x + c


@dataclass(frozen=True)
class QuadraticPair:
    regime: Regime
    phi_coeffs: tuple[float, float, float]
    psi_coeffs: tuple[float, float, float]
    # square roots of the window endpoints; None when a radicand is negative
    L1: float | None
    R1: float | None
    L2: float | None
    R2: float | None
    delta_scale: float = 1.0

    @property
    def s1(self) -> Interval:
        if self.L1 is None or self.R1 is None:
            return EMPTY
        return Interval(self.L1**2, self.R1**2)

    @property
    def s2(self) -> Interval:
        if self.L2 is None or self.R2 is None:
            return EMPTY
        return Interval(self.L2**2, self.R2**2)

    @property
    def negative_radicand(self) -> tuple[bool, bool]:
        return (self.L1 is None, self.L2 is None)

    def Phi(self, beta: float) -> float:
        return quad_eval(self.phi_coeffs, beta)

    def Psi(self, beta: float) -> float:
        return quad_eval(self.psi_coeffs, beta)


def _sqrt_or_none(x: float) -> float | None:
    return math.sqrt(x) if x >= 0 else None


def _root_pair(x: float, y: float, k: float, gap: float) -> tuple[float | None, float | None]:
    """(sqrt(x) -/+ sqrt(y)) / k with x - y = gap > 0; the minus branch without cancellation."""
    sx, sy = _sqrt_or_none(x), _sqrt_or_none(y)
    if sx is None or sy is None:
        return None, None
    return gap / (k * (sx + sy)), (sx + sy) / k


def homogeneous_delta(p: ModelParams) -> float:
    return (p.a2 + p.d1) / (p.d2_over_r + 1.0)


def build_quadratics(regime: Regime | str, p: ModelParams) -> QuadraticPair:
    regime = Regime(regime)
    a1, a2, d1, q = p.a1, p.a2, p.d1, p.d2_over_r
    s = a2 + d1
    A = -a1 * a1
    if regime is Regime.HETEROGENEOUS:
        phi = (A, 2.0 * (2.0 * (1.0 + q) - (a1 * a2 + a1 * d1)), -s * s)
        psi = (A, 2.0 * (2.0 - a1 * a2), -a2 * a2)
        L1, R1 = _root_pair(1.0 + q, 1.0 + q - a1 * s, a1, a1 * s)
        L2, R2 = _root_pair(1.0, 1.0 - a1 * a2, a1, a1 * a2)
        delta = 1.0
    elif regime is Regime.HOMOGENEOUS_TUMOR:
        delta = homogeneous_delta(p)
        phi = (A, 2.0 * (2.0 - a1) * s, -s * s)
        psi = (A, 2.0 * (2.0 * delta - a1 * a2), -a2 * a2)
        L1, R1 = _root_pair(s, s * (1.0 - a1), a1, a1 * s)
        L2, R2 = _root_pair(delta, delta - a1 * a2, a1, a1 * a2)
    else:
        phi = (A, 2.0 * (2.0 * (a1 + q) - a1 * s), -s * s)
        psi = (A, 2.0 * (2.0 * a1 - a1 * a2), -a2 * a2)
        L1, R1 = _root_pair(a1 + q, a1 + q - a1 * s, a1, a1 * s)
        # roots of Psi_r are (1 -/+ sqrt(1 - a2))^2 / a1
        L2, R2 = _root_pair(a1, a1 * (1.0 - a2), a1, a1 * a2)
        delta = 1.0
    return QuadraticPair(regime, phi, psi, L1, R1, L2, R2, delta)


def beta_interval(q: QuadraticPair) -> Interval:
    s1, s2 = q.s1, q.s2
    if s1.empty or s2.empty:
        return EMPTY
    return s1.intersect(s2)


def choose_beta(window: Interval) -> float:
    if window.hi / window.lo > 1e4:
        return math.sqrt(window.lo * window.hi)
    return 0.5 * (window.lo + window.hi)


def _diagonal(regime: Regime, p: ModelParams, beta: float) -> tuple[float, float]:
    """(P11, P22) for the regime."""
    if regime is Regime.HOMOGENEOUS_TUMOR:
        return homogeneous_delta(p), beta
    if regime is Regime.HEALTHY:
        return 1.0, p.a1 * beta
    return 1.0, beta


def eta_quadratic(regime: Regime | str, p: ModelParams, beta: float) -> tuple[float, float, float]:
    """Coefficients (A, B, C) of 4 det P as a polynomial in eta."""
    regime = Regime(regime)
    m11, m22 = _diagonal(regime, p, beta)
    q = p.d2_over_r
    alpha = 0.5 * (p.a2 + p.a1 * beta)
    qb = q * beta
    A = -m11
    B = 2.0 * (2.0 * (m11 * m22 - alpha * alpha) + m11 * qb - alpha * p.d1)
    C = 2.0 * alpha * p.d1 * qb - m11 * qb * qb - m22 * p.d1 * p.d1
    return A, B, C


def eta_discriminant(regime: Regime | str, p: ModelParams, beta: float) -> float:
    A, B, C = eta_quadratic(regime, p, beta)
    return B * B - 4.0 * A * C


def eta_window(regime: Regime | str, p: ModelParams, beta: float) -> Interval:
    """Open eta interval on which det P > 0, intersected with eta > 0."""
    A, B, C = eta_quadratic(regime, p, beta)
    disc = B * B - 4.0 * A * C
    if disc <= 0:
        return EMPTY
    sd = math.sqrt(disc)
    # A < 0: roots (-B +/- sd) / (2A); use the stable product form for the small root
    big = (B + math.copysign(sd, B)) / (-2.0 * A)
    small = C / (A * big) if big != 0 else 0.0
    lo, hi = sorted((small, big))
    return Interval(max(lo, 0.0), hi)


def lyapunov_matrix(regime: Regime | str, p: ModelParams, beta: float, eta: float) -> np.ndarray:
    regime = Regime(regime)
    m11, m22 = _diagonal(regime, p, beta)
    alpha = 0.5 * (p.a2 + p.a1 * beta)
    off = 0.5 * (p.d2_over_r * beta - eta)
    return np.array(
        [
            [m11, alpha, 0.5 * p.d1],
            [alpha, m22, off],
            [0.5 * p.d1, off, eta],
        ]
    )


def leading_minors(P: np.ndarray) -> tuple[float, float, float]:
    m1 = P[0, 0]
    m2 = P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]
    m3 = (
        P[0, 0] * (P[1, 1] * P[2, 2] - P[1, 2] * P[2, 1])
        - P[0, 1] * (P[1, 0] * P[2, 2] - P[1, 2] * P[2, 0])
        + P[0, 2] * (P[1, 0] * P[2, 1] - P[1, 1] * P[2, 0])
    )
    return float(m1), float(m2), float(m3)


def _null_vector(M: np.ndarray) -> np.ndarray:
    """Unit vector approximately in the null space of a symmetric 3x3 matrix of rank <= 2."""
    crosses = [np.cross(M[0], M[1]), np.cross(M[0], M[2]), np.cross(M[1], M[2])]
    x = max(crosses, key=lambda c: float(c @ c))
    scale = max(float(np.sum(M * M)), 1e-300)
    if float(x @ x) <= 1e-24 * scale * scale:
        # rank <= 1: any vector orthogonal to the largest row
        row = max(M, key=lambda r: float(r @ r))
        if float(row @ row) == 0.0:
            return np.array([1.0, 0.0, 0.0])
        x = np.cross(row, np.eye(3)[int(np.argmin(np.abs(row)))])
    return x / math.sqrt(float(x @ x))


def symmetric_eigenvalues(P: np.ndarray) -> tuple[float, float, float]:
    """Eigenvalues of a symmetric 3x3 matrix, ascending.

    The characteristic cubic (trigonometric form) locates the eigenvalue best
    separated from the other two; its eigenvector is built from cross products
    and the remaining pair comes from the 2x2 block on the orthogonal
    complement. This keeps full accuracy for clustered eigenvalues, where the
    cubic alone loses half the digits.
    """
    p1 = P[0, 1] ** 2 + P[0, 2] ** 2 + P[1, 2] ** 2
    tr = P[0, 0] + P[1, 1] + P[2, 2]
    m = tr / 3.0
    if p1 == 0.0:
        return tuple(sorted(float(P[i, i]) for i in range(3)))  # type: ignore[return-value]
    p2 = (P[0, 0] - m) ** 2 + (P[1, 1] - m) ** 2 + (P[2, 2] - m) ** 2 + 2.0 * p1
    s = math.sqrt(p2 / 6.0)
    B = (P - m * np.eye(3)) / s
    half_det = 0.5 * leading_minors(B)[2]
    phi = math.acos(min(1.0, max(-1.0, half_det))) / 3.0
    e_hi = m + 2.0 * s * math.cos(phi)
    e_lo = m + 2.0 * s * math.cos(phi + 2.0 * math.pi / 3.0)
    e_mid = tr - e_hi - e_lo
    iso = e_hi if e_hi - e_mid >= e_mid - e_lo else e_lo
    x = _null_vector(P - iso * np.eye(3))
    y = np.cross(x, np.eye(3)[int(np.argmin(np.abs(x)))])
    y /= math.sqrt(float(y @ y))
    z = np.cross(x, y)
    a, b, d = float(y @ P @ y), float(y @ P @ z), float(z @ P @ z)
    mean, rad = 0.5 * (a + d), math.hypot(0.5 * (a - d), b)
    return tuple(sorted((float(x @ P @ x), mean - rad, mean + rad)))  # type: ignore[return-value]


# the 26 nonzero directions of {-1, 0, 1}^3, normalized
PROBE_DIRECTIONS = np.array(
    [v for v in itertools.product((-1.0, 0.0, 1.0), repeat=3) if any(v)]
)
PROBE_DIRECTIONS /= np.linalg.norm(PROBE_DIRECTIONS, axis=1)[:, None]


def probe_minimum(P: np.ndarray) -> float:
    """min x^T P x over the probe set; an upper bound for the smallest eigenvalue."""
    return float(np.min(np.einsum("ij,jk,ik->i", PROBE_DIRECTIONS, P, PROBE_DIRECTIONS)))


@dataclass(frozen=True)
class LyapunovCertificate:
    regime: Regime
    beta: float
    eta: float
    epsilon: float
    epsilon_matrix: float  # smallest eigenvalue of P
    probe_min: float
    matrix: np.ndarray
    minors: tuple[float, float, float]
    beta_window: Interval
    eta_window: Interval

    def as_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "beta": self.beta,
            "eta": self.eta,
            "epsilon": self.epsilon,
            "epsilon_matrix": self.epsilon_matrix,
            "probe_min": self.probe_min,
            "matrix": self.matrix.tolist(),
            "minors": list(self.minors),
            "beta_window": self.beta_window.as_list(),
            "eta_window": self.eta_window.as_list(),
        }


def find_certificate(regime: Regime | str, p: ModelParams, beta: float | None = None) -> LyapunovCertificate:
    """Construct (beta, eta) making P positive definite, or raise NoCertificate.

    ``beta`` overrides the automatic choice (midpoint of the overlap window);
    it is used as given even outside the window, so the eta stage decides.
    """
    regime = Regime(regime)
    if regime is Regime.HOMOGENEOUS_TUMOR and homogeneous_delta(p) <= 1.0:
        raise NoCertificate(
            f"delta = (a2+d1)/(1+d2/r) = {homogeneous_delta(p):.6g} <= 1; the u-weight bound needs delta > 1",
            "delta",
        )
    qp = build_quadratics(regime, p)
    window = beta_interval(qp)
    if beta is None:
        if window.empty:
            raise NoCertificate(
                f"empty beta window: S1={qp.s1.as_list()}, S2={qp.s2.as_list()}", "beta"
            )
        beta = choose_beta(window)
    ew = eta_window(regime, p, beta)
    if ew.empty:
        raise NoCertificate(f"empty eta window at beta={beta:.6g}", "eta")
    A, B, _ = eta_quadratic(regime, p, beta)
    eta = -B / (2.0 * A)
    if eta not in ew:
        eta = 0.5 * (ew.lo + ew.hi)
    P = lyapunov_matrix(regime, p, beta, eta)
    minors = leading_minors(P)
    if min(minors) <= 0.0:
        raise NoCertificate(f"leading minors {minors} not all positive", "minors")
    lam = symmetric_eigenvalues(P)[0]
    return LyapunovCertificate(
        regime=regime,
        beta=beta,
        eta=eta,
        epsilon=min(lam, eta / p.c),
        epsilon_matrix=lam,
        probe_min=probe_minimum(P),
        matrix=P,
        minors=minors,
        beta_window=window,
        eta_window=ew,
    )


# --- functionals along trajectories -------------------------------------------------


def entropy_density(x: np.ndarray, ref: float) -> np.ndarray:
    """x - ref - ref*ln(x/ref), evaluated stably near x = ref."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise NonpositiveDensity(f"log argument must be > 0, min = {x.min()!r}")
    z = (x - ref) / ref
    out = np.empty_like(z)
    small = np.abs(z) < 1e-3
    zs = z[small]
    # z - log1p(z) = z^2/2 - z^3/3 + z^4/4 - z^5/5 + ...
    out[small] = zs * zs * (0.5 - zs * (1.0 / 3.0 - zs * (0.25 - zs * (0.2 - zs / 6.0))))
    zl = z[~small]
    out[~small] = zl - np.log1p(zl)
    return ref * out


def dirichlet_energy(w: np.ndarray, h: float) -> float:
    dw = np.diff(w)
    return float(np.sum(dw * dw) / h)


@dataclass(frozen=True)
class FunctionalSample:
    t: float
    E: float
    F: float
    dE_dt_discrete: float


def functional_values(
    u: np.ndarray, v: np.ndarray, w: np.ndarray, h: float,
    cert: LyapunovCertificate, target: SteadyState, p: ModelParams,
) -> tuple[float, float]:
    """(E, F) on one field snapshot, cell-centered quadrature with spacing h."""
    us, vs, ws = target.as_tuple()
    reg = cert.regime
    if reg is Regime.HETEROGENEOUS:
        A = h * float(np.sum(entropy_density(u, us)))
        B = h * float(np.sum(entropy_density(v, vs)))
    elif reg is Regime.HOMOGENEOUS_TUMOR:
        A = h * float(np.sum(u))
        B = h * float(np.sum(entropy_density(v, vs)))
    else:
        A = h * float(np.sum(entropy_density(u, 1.0)))
        B = h * float(np.sum(v))
    dw = w - ws
    C = 0.5 * h * float(np.sum(dw * dw))
    E = A + cert.beta / p.r * B + cert.eta / p.c * C
    du, dv = u - us, v - vs
    F = h * float(np.sum(du * du) + np.sum(dv * dv) + np.sum(dw * dw)) + dirichlet_energy(w, h)
    return E, F


def eval_functionals(traj, cert: LyapunovCertificate, target: SteadyState) -> list[FunctionalSample]:
    """E and F at every stored snapshot of ``traj``, with centered dE/dt."""
    if not traj.snapshots:
        raise ValueError("trajectory carries no snapshots")
    h = traj.grid.h
    ts = np.array([s.t for s in traj.snapshots])
    EF = np.array(
        [functional_values(s.u, s.v, s.w, h, cert, target, traj.params) for s in traj.snapshots]
    )
    E, F = EF[:, 0], EF[:, 1]
    dE = np.gradient(E, ts) if len(ts) > 1 else np.zeros(1)
    return [FunctionalSample(float(t), float(e), float(f), float(d)) for t, e, f, d in zip(ts, E, F, dE)]


@dataclass(frozen=True)
class DecayReport:
    fraction: float
    n_checked: int
    failures: tuple[float, ...]  # sample times where the inequality failed
    rate: float
    r_squared: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "n_checked": self.n_checked,
            "failures": list(self.failures),
            "rate": self.rate,
            "r_squared": self.r_squared,
            "passed": self.passed,
        }


def fit_log_rate(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log y against t and its R^2, over y > 0."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    t, ly = t[keep], np.log(y[keep])
    if len(t) < 2:
        return math.nan, math.nan
    slope, icpt = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + icpt)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def check_decay(
    samples: Sequence[FunctionalSample],
    cert: LyapunovCertificate,
    *,
    h: float = 0.0,
    dt: float = 0.0,
    t_min: float = 0.0,
    min_fraction: float = 0.99,
) -> DecayReport:
    """Test dE/dt <= -epsilon F + tol at each sample with t >= t_min.

    tol = 10 (dt^2 + h^2)(1 + F) budgets the discretization error.  The decay
    rate is fitted to log E over the trailing half of the samples.
    """
    if len(samples) < 3:
        raise ValueError("check_decay needs at least 3 samples")
    ok, fails = 0, []
    checked = [s for s in samples if s.t >= t_min]
    for s in checked:
        tol = 10.0 * (dt * dt + h * h) * (1.0 + s.F)
        if s.dE_dt_discrete <= -cert.epsilon * s.F + tol:
            ok += 1
        else:
            fails.append(s.t)
    frac = ok / len(checked) if checked else 0.0
    tail = samples[len(samples) // 2 :]
    rate, r2 = fit_log_rate(np.array([s.t for s in tail]), np.array([s.E for s in tail]))
    passed = frac >= min_fraction and (math.isnan(rate) or rate < 0)
    if math.isnan(rate):
        passed = frac >= min_fraction
    return DecayReport(frac, len(checked), tuple(fails), rate, r2, passed)
