"""Upper/lower comparison ODEs driven by an envelope of the acid deviation.

For each regime a small ODE system, fed by a nonincreasing envelope
sigma(t) >= ||w - w_target||_inf, produces spatially constant functions
that bound the PDE solution from above and below.  This module integrates
those systems, checks the bounds against stored PDE snapshots, tracks the
log-ratio quantity that drives the convergence argument in the coexistence
regime, and analyses the two-line phase plane of the reduced competitive
system in the homogeneous-tumor regime.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import EmptySeries, NonpositiveComponent, OrderingViolation, ParallelLines
from .lyapunov import Regime
from .model import REL_TOL, ModelParams, SteadyState, heterogeneous_state, homogeneous_tumor_state, healthy_state
from .pde import Field, Trajectory

ENVELOPE_FLOOR = 1e-8
AUX_DT_FACTOR = 1e-3

COMPONENTS = {
    Regime.HETEROGENEOUS: ("u_bar", "u_under", "v_bar", "v_under"),
    Regime.HOMOGENEOUS_TUMOR: ("u_bar", "v_bar", "v_under"),
    Regime.HEALTHY: ("u_under", "v_bar"),
}
_CODE = {Regime.HETEROGENEOUS: 0, Regime.HOMOGENEOUS_TUMOR: 1, Regime.HEALTHY: 2}


def regime_target(regime: Regime | str, p: ModelParams) -> SteadyState:
    regime = Regime(regime)
    if regime is Regime.HETEROGENEOUS:
        return heterogeneous_state(p)
    if regime is Regime.HOMOGENEOUS_TUMOR:
        return homogeneous_tumor_state(p)
    return healthy_state()


# --- envelope --------------------------------------------------------------------------


@dataclass(frozen=True)
class Envelope:
    """Nonincreasing step function: sigma(t) = values[k] on [times[k], times[k+1])."""

    times: np.ndarray
    values: np.ndarray

    def at(self, t: float | np.ndarray) -> np.ndarray | float:
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1)
        return self.values[k]


def build_envelope(times: Sequence[float], deviations: Sequence[float], floor: float = ENVELOPE_FLOOR) -> Envelope:
    t = np.asarray(times, dtype=float)
    d = np.asarray(deviations, dtype=float)
    if d.size == 0:
        raise EmptySeries("deviation series is empty")
    if t.shape != d.shape:
        raise ValueError("times and deviations must have equal length")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("deviations must be finite and >= 0")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    sigma = np.maximum(np.maximum.accumulate(d[::-1])[::-1], floor)
    return Envelope(t, sigma)


def envelope_from_trajectory(traj: Trajectory, floor: float = ENVELOPE_FLOOR) -> Envelope:
    """Envelope from the per-interval maxima of |w - w_target| recorded during the run."""
    return build_envelope(traj.times, traj.w_dev_max, floor)


# --- auxiliary states --------------------------------------------------------------------


@dataclass(frozen=True)
class AuxStateH:
    u_bar: float
    u_under: float
    v_bar: float
    v_under: float


@dataclass(frozen=True)
class AuxStateC:
    u_bar: float
    v_bar: float
    v_under: float


@dataclass(frozen=True)
class AuxStateR:
    u_under: float
    v_bar: float


_STATE_CLS = {
    Regime.HETEROGENEOUS: AuxStateH,
    Regime.HOMOGENEOUS_TUMOR: AuxStateC,
    Regime.HEALTHY: AuxStateR,
}


def aux_initial(regime: Regime | str, f0: Field, p: ModelParams) -> np.ndarray:
    """Initial values built from the extrema of the PDE data and the target state."""
    regime = Regime(regime)
    s = regime_target(regime, p)
    umin, umax = float(f0.u.min()), float(f0.u.max())
    vmin, vmax = float(f0.v.min()), float(f0.v.max())
    if regime is Regime.HETEROGENEOUS:
        return np.array([max(umax, s.u_star), min(umin, s.u_star), max(vmax, s.v_star), min(vmin, s.v_star)])
    if regime is Regime.HOMOGENEOUS_TUMOR:
        return np.array([umax, max(vmax, s.v_star), min(vmin, s.v_star)])
    return np.array([umin, vmax])


def check_ordering(regime: Regime | str, y0: np.ndarray, p: ModelParams) -> None:
    regime = Regime(regime)
    s = regime_target(regime, p)
    y = [float(x) for x in y0]
    if regime is Regime.HETEROGENEOUS:
        ub, ul, vb, vl = y
        ok = 0 < ul <= s.u_star <= ub <= 1 and 0 < vl <= s.v_star <= vb
        want = "0 < u_under <= u* <= u_bar <= 1 and 0 < v_under <= v* <= v_bar"
    elif regime is Regime.HOMOGENEOUS_TUMOR:
        ub, vb, vl = y
        ok = 0 < ub <= 1 and 0 < vl <= s.v_star <= vb
        want = "0 < u_bar <= 1 and 0 < v_under <= v~ <= v_bar"
    else:
        ul, vb = y
        ok = 0 < ul <= 1 and 0 < vb
        want = "0 < u_under <= 1 and v_bar > 0"
    if not ok:
        raise OrderingViolation(f"initial aux state {y} violates {want}")


@numba.njit(cache=True, nogil=True)
def _aux_rhs(code, y, sig, ws, d1, d2, r, a1, a2, out):
    if code == 0:
        ub, ul, vb, vl = y[0], y[1], y[2], y[3]
        out[0] = ub * (1.0 - ub - a2 * vl - d1 * (ws - sig))
        out[1] = ul * (1.0 - ul - a2 * vb - d1 * (ws + sig))
        out[2] = vb * (r * (1.0 - a1 * ul - vb) - d2 * (ws - sig))
        out[3] = vl * (r * (1.0 - a1 * ub - vl) - d2 * (ws + sig))
    elif code == 1:
        ub, vb, vl = y[0], y[1], y[2]
        out[0] = ub * (1.0 - ub - a2 * vl - d1 * (ws - sig))
        out[1] = vb * (r * (1.0 - vb) - d2 * (ws - sig))
        out[2] = vl * (r * (1.0 - a1 * ub - vl) - d2 * (ws + sig))
    else:
        ul, vb = y[0], y[1]
        out[0] = ul * (1.0 - ul - a2 * vb - d1 * sig)
        out[1] = r * vb * (1.0 - a1 * ul - vb)


@numba.njit(cache=True, nogil=True)
def _aux_rk4(code, y, sig, ws, d1, d2, r, a1, a2, dt, nsteps, dense):
    """RK4 with constant sigma; returns the (nsteps+1, k) path if dense, else the end state."""
    k = y.shape[0]
    k1 = np.empty(k)
    k2 = np.empty(k)
    k3 = np.empty(k)
    k4 = np.empty(k)
    tmp = np.empty(k)
    cur = y.copy()
    path = np.empty((nsteps + 1 if dense else 1, k))
    path[0] = cur
    for s in range(nsteps):
        _aux_rhs(code, cur, sig, ws, d1, d2, r, a1, a2, k1)
        for i in range(k):
            tmp[i] = cur[i] + 0.5 * dt * k1[i]
        _aux_rhs(code, tmp, sig, ws, d1, d2, r, a1, a2, k2)
        for i in range(k):
            tmp[i] = cur[i] + 0.5 * dt * k2[i]
        _aux_rhs(code, tmp, sig, ws, d1, d2, r, a1, a2, k3)
        for i in range(k):
            tmp[i] = cur[i] + dt * k3[i]
        _aux_rhs(code, tmp, sig, ws, d1, d2, r, a1, a2, k4)
        for i in range(k):
            cur[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if dense:
            path[s + 1] = cur
    if not dense:
        path[0] = cur
    return path


def _max_rate(p: ModelParams, y: np.ndarray, sig: float, ws: float) -> float:
    ymax = max(1.0, float(np.max(y)))
    return max(
        1.0 + ymax + p.a2 * ymax + p.d1 * (ws + sig),
        p.r * (1.0 + p.a1 * ymax + ymax) + p.d2 * (ws + sig),
    )


@dataclass
class AuxTrajectory:
    regime: Regime
    params: ModelParams
    times: np.ndarray
    states: np.ndarray  # (n, k), columns COMPONENTS[regime]
    dt_max: float = 0.0
    # every RK4 stage-end state when integrated with dense=True
    dense_times: np.ndarray | None = None
    dense_states: np.ndarray | None = None

    @property
    def components(self) -> tuple[str, ...]:
        return COMPONENTS[self.regime]

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.components.index(name)]

    def state(self, k: int):
        return _STATE_CLS[self.regime](*map(float, self.states[k]))

    def interpolate(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.states[:, j]) for j in range(self.states.shape[1])])

    def log_ratio_series(self) -> np.ndarray | None:
        if self.regime is not Regime.HETEROGENEOUS:
            return None
        return np.array([log_ratio(self.state(k), self.params).value for k in range(len(self.times))])

    def to_csv(self, path: str | Path) -> None:
        lr = self.log_ratio_series()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(("t",) + self.components + (("log_ratio",) if lr is not None else ()))
            for k, t in enumerate(self.times):
                row = [t, *self.states[k]] + ([lr[k]] if lr is not None else [])
                wr.writerow([f"{x:.17g}" for x in row])


def simulate_aux(
    regime: Regime | str,
    p: ModelParams,
    env: Envelope,
    init: np.ndarray | Sequence[float],
    T_end: float,
    *,
    dense: bool = False,
) -> AuxTrajectory:
    """Integrate the regime's comparison system on [0, T_end].

    Output is recorded at the envelope sample times inside [0, T_end] (plus
    T_end).  sigma is held constant on each envelope interval at the value of
    its left sample, the larger one, so every right-hand side is smooth
    within an RK4 sweep.
    """
    regime = Regime(regime)
    y = np.array(init, dtype=float)
    if y.shape != (len(COMPONENTS[regime]),):
        raise ValueError(f"regime {regime.value} expects {len(COMPONENTS[regime])} components")
    check_ordering(regime, y, p)
    ws = regime_target(regime, p).w_star
    code = _CODE[regime]
    knots = [0.0] + [float(t) for t in env.times if 0.0 < t < T_end] + [float(T_end)]
    out = [y.copy()]
    dts: list[float] = []
    dense_t: list[np.ndarray] = [np.zeros(1)]
    dense_y: list[np.ndarray] = [y[None, :].copy()]
    dt_max = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        sig = float(env.at(a))
        dt0 = AUX_DT_FACTOR / _max_rate(p, y, sig, ws)
        n = max(1, math.ceil((b - a) / dt0))
        dt = (b - a) / n
        dt_max = max(dt_max, dt)
        path = _aux_rk4(code, y, sig, ws, p.d1, p.d2, p.r, p.a1, p.a2, dt, n, dense)
        y = path[-1].copy()
        out.append(y.copy())
        if dense:
            dense_t.append(a + dt * np.arange(1, n + 1))
            dense_y.append(path[1:])
    return AuxTrajectory(
        regime=regime,
        params=p,
        times=np.array(knots),
        states=np.array(out),
        dt_max=dt_max,
        dense_times=np.concatenate(dense_t) if dense else None,
        dense_states=np.vstack(dense_y) if dense else None,
    )


# --- sandwich check ----------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    t: float
    cell: int  # -1 for steady-state checks
    component: str
    value: float
    bound: float
    kind: str

    def as_dict(self) -> dict:
        return {
            "t": self.t, "cell": self.cell, "component": self.component,
            "value": self.value, "bound": self.bound, "kind": self.kind,
        }


@dataclass
class SandwichReport:
    regime: Regime
    tol: float
    n_snapshots: int
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self, limit: int = 50) -> dict:
        return {
            "regime": self.regime.value,
            "tol": self.tol,
            "n_snapshots": self.n_snapshots,
            "n_violations": len(self.violations),
            "violations": [v.as_dict() for v in self.violations[:limit]],
            "passed": self.passed,
        }


def sandwich_tolerance(h: float, dt: float) -> float:
    return 1e-6 + 10.0 * (h * h + dt)


def _bounds(regime: Regime, y: np.ndarray) -> dict[str, tuple[float, float]]:
    """Per-component (lower, upper) bounds on the PDE field implied by an aux state."""
    if regime is Regime.HETEROGENEOUS:
        ub, ul, vb, vl = y
        return {"u": (ul, ub), "v": (vl, vb)}
    if regime is Regime.HOMOGENEOUS_TUMOR:
        ub, vb, vl = y
        return {"u": (0.0, ub), "v": (vl, vb)}
    ul, vb = y
    return {"u": (ul, 1.0), "v": (0.0, vb)}


def verify_sandwich(
    traj: Trajectory,
    aux: AuxTrajectory,
    regime: Regime | str | None = None,
    tol: float | None = None,
) -> SandwichReport:
    """Check aux_lower - tol <= field <= aux_upper + tol at every snapshot cell.

    Aux values are interpolated linearly to snapshot times.  Snapshots after
    the last aux time are skipped.  Violations are ordered by time, then cell.
    """
    regime = Regime(regime) if regime is not None else aux.regime
    if tol is None:
        tol = sandwich_tolerance(traj.grid.h, traj.dt_max)
    rep = SandwichReport(regime, tol, 0)
    for snap in traj.snapshots:
        if snap.t > aux.times[-1] + 1e-12:
            continue
        rep.n_snapshots += 1
        bounds = _bounds(regime, aux.interpolate(snap.t))
        for comp, (lo, hi) in bounds.items():
            arr = getattr(snap, comp)
            bad_lo = np.nonzero(arr < lo - tol)[0]
            bad_hi = np.nonzero(arr > hi + tol)[0]
            for i in sorted(set(bad_lo.tolist()) | set(bad_hi.tolist())):
                x = float(arr[i])
                if x < lo - tol:
                    rep.violations.append(Violation(snap.t, int(i), comp, x, float(lo), "below lower"))
                else:
                    rep.violations.append(Violation(snap.t, int(i), comp, x, float(hi), "above upper"))
    rep.violations.extend(steady_sandwich_violations(aux, tol))
    rep.violations.sort(key=lambda v: (v.t, v.cell))
    return rep


def steady_sandwich_violations(aux: AuxTrajectory, tol: float = 1e-9) -> list[Violation]:
    """Aux bounds must also enclose the target state (vacuous in the healthy regime)."""
    s = regime_target(aux.regime, aux.params)
    pairs: list[tuple[str, str, float]] = []
    if aux.regime is Regime.HETEROGENEOUS:
        pairs = [("u_under", "u_bar", s.u_star), ("v_under", "v_bar", s.v_star)]
    elif aux.regime is Regime.HOMOGENEOUS_TUMOR:
        pairs = [("v_under", "v_bar", s.v_star)]
    out = []
    times = aux.dense_times if aux.dense_times is not None else aux.times
    states = aux.dense_states if aux.dense_states is not None else aux.states
    names = aux.components
    for lo_name, hi_name, star in pairs:
        lo = states[:, names.index(lo_name)]
        hi = states[:, names.index(hi_name)]
        for k in np.nonzero(lo > star + tol)[0]:
            out.append(Violation(float(times[k]), -1, lo_name, float(lo[k]), star, "steady state below lower"))
        for k in np.nonzero(hi < star - tol)[0]:
            out.append(Violation(float(times[k]), -1, hi_name, float(hi[k]), star, "steady state above upper"))
    return out


# --- log-ratio diagnostic ----------------------------------------------------------------


@dataclass(frozen=True)
class LogRatioDiag:
    value: float
    A0: float
    A1: float
    A2: float


def log_ratio_constants(p: ModelParams) -> tuple[float, float, float]:
    """(A0, A1, A2) with d/dt[ln(ub/ul) + A0 ln(vb/vl)] = -A1 (gap_u + gap_v) + A2 sigma."""
    A0 = (1.0 + p.a2) / ((1.0 + p.a1) * p.r)
    A1 = (1.0 - p.a1 * p.a2) / (1.0 + p.a1)
    A2 = 2.0 * p.d1 + 2.0 * p.d2 * A0
    return A0, A1, A2


def log_ratio(aux: AuxStateH, p: ModelParams) -> LogRatioDiag:
    comps = (aux.u_bar, aux.u_under, aux.v_bar, aux.v_under)
    if not all(x > 0 for x in comps):
        raise NonpositiveComponent(f"log ratio needs positive components, got {comps}")
    A0, A1, A2 = log_ratio_constants(p)
    val = math.log(aux.u_bar / aux.u_under) + A0 * math.log(aux.v_bar / aux.v_under)
    return LogRatioDiag(val, A0, A1, A2)


def log_ratio_rate(aux: AuxStateH, p: ModelParams, sigma: float) -> float:
    """Right-hand side of the log-ratio identity at ``aux``."""
    _, A1, A2 = log_ratio_constants(p)
    return -A1 * ((aux.u_bar - aux.u_under) + (aux.v_bar - aux.v_under)) + A2 * sigma


# --- phase-plane analysis (homogeneous-tumor regime) -------------------------------------


@dataclass(frozen=True)
class NullclineReport:
    epsilon: float
    # each line as (coef_u, coef_v, const): coef_u*U + coef_v*V + const = 0
    mu: tuple[float, float, float]
    nu: tuple[float, float, float]
    intersection: tuple[float, float] | None
    parallel: bool
    tumor_free_equilibrium: tuple[float, float]  # (U, 0)
    healthy_free_equilibrium: tuple[float, float]  # (0, V)
    nu_above_mu: bool
    positive_interior_equilibrium: bool

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "mu": list(self.mu),
            "nu": list(self.nu),
            "intersection": None if self.intersection is None else list(self.intersection),
            "parallel": self.parallel,
            "tumor_free_equilibrium": list(self.tumor_free_equilibrium),
            "healthy_free_equilibrium": list(self.healthy_free_equilibrium),
            "nu_above_mu": self.nu_above_mu,
            "positive_interior_equilibrium": self.positive_interior_equilibrium,
        }


def nullclines_c(p: ModelParams, epsilon: float, *, strict: bool = False) -> NullclineReport:
    """Zero lines of the reduced competitive system around (0, v~).

    mu: 1 - U - a2 V - d1 v~ + eps/2 = 0 and nu: 1 - a1 U - V - (d2/r) v~ - eps/2 = 0.
    When a1 a2 = 1 (within tolerance) the lines are parallel; with ``strict``
    this raises ParallelLines, otherwise the report has intersection None.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    vt = homogeneous_tumor_state(p).v_star
    q = p.d2_over_r
    e2 = 0.5 * epsilon
    mu = (-1.0, -p.a2, 1.0 - p.d1 * vt + e2)
    nu = (-p.a1, -1.0, 1.0 - q * vt - e2)
    det = 1.0 - p.a1 * p.a2
    parallel = abs(det) <= REL_TOL * max(1.0, p.a1 * p.a2)
    if parallel and strict:
        raise ParallelLines(f"a1*a2 = {p.a1 * p.a2!r} = 1: nullclines are parallel")
    inter = None
    if not parallel:
        # U + a2 V = m, a1 U + V = n
        m, n = mu[2], nu[2]
        U0 = (m - p.a2 * n) / det
        V0 = (n - p.a1 * m) / det
        inter = (U0, V0)

    def v_mu(U: float) -> float:
        return (mu[2] - U) / p.a2

    def v_nu(U: float) -> float:
        return nu[2] - p.a1 * U

    above = all(v_nu(U) > v_mu(U) for U in (0.0, 1.0))
    positive = inter is not None and inter[0] > 0 and inter[1] > 0
    return NullclineReport(
        epsilon=epsilon,
        mu=mu,
        nu=nu,
        intersection=inter,
        parallel=parallel,
        tumor_free_equilibrium=(mu[2], 0.0),
        healthy_free_equilibrium=(0.0, nu[2]),
        nu_above_mu=above,
        positive_interior_equilibrium=positive,
    )
