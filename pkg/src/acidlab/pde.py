"""Finite-volume solver for the three-component system on a 1-D interval.

Cells are uniform with centers x_i = (i + 1/2) h.  The v-flux across an
interior face uses the arithmetic mean of the mobility (1 - u) of its two
neighbours; boundary faces carry no flux, and w uses reflecting ghost
cells.  Time stepping is Heun's method written in SSP form, which keeps the
discrete solution inside the invariant region whenever dt <= stable_dt.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import BoundViolation, InvalidParameter
from .lyapunov import fit_log_rate
from .model import ModelParams, SteadyState

BOUND_TOL = 1e-12
DT_SAFETY = 0.4

NORM_FIELDS = ("linf_u", "linf_v", "linf_w", "l2_u", "l2_v", "l2_w", "dirichlet_w")


@dataclass(frozen=True)
class Grid1D:
    L: float = 1.0
    n_cells: int = 128

    def __post_init__(self) -> None:
        if not (isinstance(self.n_cells, (int, np.integer)) and self.n_cells >= 8):
            raise InvalidParameter(f"n_cells must be an integer >= 8, got {self.n_cells!r}")
        if not (math.isfinite(self.L) and self.L > 0):
            raise InvalidParameter(f"L must be finite and > 0, got {self.L!r}")

    @property
    def h(self) -> float:
        return self.L / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.h


@dataclass
class Field:
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def copy(self) -> "Field":
        return Field(self.u.copy(), self.v.copy(), self.w.copy(), self.t)

    @classmethod
    def uniform(cls, n: int, u: float, v: float, w: float, t: float = 0.0) -> "Field":
        return cls(np.full(n, float(u)), np.full(n, float(v)), np.full(n, float(w)), t)

    @classmethod
    def at_state(cls, n: int, s: SteadyState) -> "Field":
        return cls.uniform(n, *s.as_tuple())


# --- initial data -------------------------------------------------------------------

INIT_MARGIN = 0.05
N_MODES = 4


@dataclass(frozen=True)
class InitialData:
    """Generator for admissible initial data.

    ``kind`` is ``constant`` (the means), ``cosine`` (means plus a seeded
    four-mode cosine series) or ``arrays`` (explicit per-cell values).  For
    cosine data each component's coefficient magnitudes sum to at most
    min(amplitude, room), where room keeps the values inside the admissible
    range with margin 0.05.  ``v0_le_1`` additionally caps v0 at 1.
    """

    kind: str = "cosine"
    u_mean: float = 0.5
    v_mean: float = 0.5
    w_mean: float = 0.5
    amplitude: float = 0.2
    seed: int = 0
    v0_le_1: bool = False
    arrays: tuple[Sequence[float], Sequence[float], Sequence[float]] | None = None

    def _series(self, rng: np.random.Generator, x: np.ndarray, L: float, mean: float, room: float) -> np.ndarray:
        coeffs = rng.uniform(-1.0, 1.0, N_MODES)
        budget = max(0.0, min(self.amplitude, room))
        total = float(np.sum(np.abs(coeffs)))
        if total > 0:
            coeffs *= budget / total
        k = np.arange(1, N_MODES + 1)
        return mean + np.cos(np.outer(x, k) * math.pi / L) @ coeffs

    def build(self, grid: Grid1D) -> Field:
        n = grid.n_cells
        if self.kind == "constant":
            f = Field.uniform(n, self.u_mean, self.v_mean, self.w_mean)
        elif self.kind == "cosine":
            rng = np.random.default_rng(self.seed)
            x = grid.x
            u_room = min(self.u_mean, 1.0 - self.u_mean) - INIT_MARGIN
            v_room = self.v_mean - INIT_MARGIN
            if self.v0_le_1:
                v_room = min(v_room, 1.0 - self.v_mean)
            w_room = self.w_mean - INIT_MARGIN
            f = Field(
                self._series(rng, x, grid.L, self.u_mean, u_room),
                self._series(rng, x, grid.L, self.v_mean, v_room),
                self._series(rng, x, grid.L, self.w_mean, w_room),
            )
        elif self.kind == "arrays":
            if self.arrays is None:
                raise InvalidParameter("kind 'arrays' needs explicit arrays")
            u, v, w = (np.array(a, dtype=float) for a in self.arrays)
            if not (u.shape == v.shape == w.shape == (n,)):
                raise InvalidParameter(f"initial arrays must have shape ({n},)")
            f = Field(u, v, w)
        else:
            raise InvalidParameter(f"unknown initial-data kind {self.kind!r}")
        check_admissible(f, v0_le_1=self.v0_le_1)
        return f

    def as_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "u_mean": self.u_mean,
            "v_mean": self.v_mean,
            "w_mean": self.w_mean,
            "amplitude": self.amplitude,
            "seed": self.seed,
            "v0_le_1": self.v0_le_1,
        }
        if self.arrays is not None:
            d["arrays"] = [list(map(float, a)) for a in self.arrays]
        return d


def check_admissible(f: Field, v0_le_1: bool = False) -> None:
    """0 < u0 < 1, v0 > 0, w0 > 0 (and v0 <= 1 on request); raise InvalidParameter otherwise."""
    for name, arr in (("u0", f.u), ("v0", f.v), ("w0", f.w)):
        if not np.all(np.isfinite(arr)):
            raise InvalidParameter(f"{name} has non-finite entries")
    if not (np.all(f.u > 0) and np.all(f.u < 1)):
        raise InvalidParameter(f"u0 must lie in (0, 1); range [{f.u.min()}, {f.u.max()}]")
    if not np.all(f.v > 0):
        raise InvalidParameter(f"v0 must be > 0; min {f.v.min()}")
    if not np.all(f.w > 0):
        raise InvalidParameter(f"w0 must be > 0; min {f.w.min()}")
    if v0_le_1 and np.any(f.v > 1):
        raise InvalidParameter(f"v0 <= 1 requested but max v0 = {f.v.max()}")


# --- kernels -------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _rhs_into(u, v, w, D, d1, d2, r, c, a1, a2, inv_h2, du, dv, dw):
    n = u.shape[0]
    for i in range(n):
        ui = u[i]
        vi = v[i]
        wi = w[i]
        du[i] = ui * (1.0 - ui - a2 * vi) - d1 * ui * wi
        flux = 0.0
        if i > 0:
            flux -= 0.5 * ((1.0 - u[i - 1]) + (1.0 - ui)) * (vi - v[i - 1])
        if i < n - 1:
            flux += 0.5 * ((1.0 - ui) + (1.0 - u[i + 1])) * (v[i + 1] - vi)
        dv[i] = D * flux * inv_h2 + r * vi * (1.0 - a1 * ui - vi) - d2 * vi * wi
        wl = w[i - 1] if i > 0 else wi
        wr = w[i + 1] if i < n - 1 else wi
        dw[i] = (wl - 2.0 * wi + wr) * inv_h2 + c * (vi - wi)


@numba.njit(cache=True, nogil=True)
def _advance(u, v, w, D, d1, d2, r, c, a1, a2, h, dt, nsteps, v_cap, w_cap, tol, w_star):
    """Take ``nsteps`` Heun steps in place.

    Returns (status, cell, value, steps_done, max |w - w_star| over all visited
    states).  status: 0 ok, 1/2 u below/above, 3/4 v below/above, 5/6 w
    below/above its bound.
    """
    n = u.shape[0]
    inv_h2 = 1.0 / (h * h)
    du = np.empty(n)
    dv = np.empty(n)
    dw = np.empty(n)
    u1 = np.empty(n)
    v1 = np.empty(n)
    w1 = np.empty(n)
    dev = 0.0
    for i in range(n):
        dev = max(dev, abs(w[i] - w_star))
    for s in range(nsteps):
        _rhs_into(u, v, w, D, d1, d2, r, c, a1, a2, inv_h2, du, dv, dw)
        for i in range(n):
            u1[i] = u[i] + dt * du[i]
            v1[i] = v[i] + dt * dv[i]
            w1[i] = w[i] + dt * dw[i]
        _rhs_into(u1, v1, w1, D, d1, d2, r, c, a1, a2, inv_h2, du, dv, dw)
        for i in range(n):
            u[i] = 0.5 * (u[i] + u1[i] + dt * du[i])
            v[i] = 0.5 * (v[i] + v1[i] + dt * dv[i])
            w[i] = 0.5 * (w[i] + w1[i] + dt * dw[i])
        for i in range(n):
            if not u[i] > -tol:
                return 1, i, u[i], s + 1, dev
            if not u[i] < 1.0 + tol:
                return 2, i, u[i], s + 1, dev
            if not v[i] > -tol:
                return 3, i, v[i], s + 1, dev
            if not v[i] <= v_cap + tol:
                return 4, i, v[i], s + 1, dev
            if not w[i] > -tol:
                return 5, i, w[i], s + 1, dev
            if not w[i] <= w_cap + tol:
                return 6, i, w[i], s + 1, dev
            dev = max(dev, abs(w[i] - w_star))
    return 0, -1, 0.0, nsteps, dev


_VIOLATION = {
    1: ("u", "u > 0"),
    2: ("u", "u < 1"),
    3: ("v", "v > 0"),
    4: ("v", "v <= max(1, max v0)"),
    5: ("w", "w > 0"),
    6: ("w", "w <= max(1, max v0, max w0)"),
}


def _pvals(p: ModelParams) -> tuple[float, ...]:
    return (p.D, p.d1, p.d2, p.r, p.c, p.a1, p.a2)


def rhs(f: Field, p: ModelParams, grid: Grid1D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = f.u.shape[0]
    du, dv, dw = np.empty(n), np.empty(n), np.empty(n)
    _rhs_into(f.u, f.v, f.w, *_pvals(p), 1.0 / grid.h**2, du, dv, dw)
    return du, dv, dw


def reaction_rate(f: Field, p: ModelParams) -> float:
    """Upper estimate of the per-capita reaction rates."""
    vm, wm = float(np.max(f.v)), float(np.max(f.w))
    return max(
        1.0 + p.a2 * vm + p.d1 * wm,
        p.r * (1.0 + p.a1 + vm) + p.d2 * wm,
        p.c,
    )


def stable_dt(f: Field, p: ModelParams, grid: Grid1D) -> float:
    mobility = p.D * float(np.max(1.0 - f.u))
    dt = DT_SAFETY * grid.h**2 / (2.0 * max(mobility, 1.0))
    return min(dt, 0.1 / reaction_rate(f, p))


@dataclass(frozen=True)
class Caps:
    """Upper bounds for v and w fixed by the initial data."""

    v: float
    w: float

    @classmethod
    def from_initial(cls, f: Field) -> "Caps":
        vmax = max(1.0, float(np.max(f.v)))
        return cls(vmax, max(vmax, float(np.max(f.w))))


def _raise_violation(status: int, cell: int, value: float, t: float) -> None:
    comp, bound = _VIOLATION[status]
    raise BoundViolation(comp, cell, value, bound, t)


def step(f: Field, p: ModelParams, grid: Grid1D, dt: float, caps: Caps | None = None) -> Field:
    """One Heun step; returns a new Field and raises BoundViolation on exit from the invariant region."""
    caps = caps or Caps.from_initial(f)
    g = f.copy()
    status, cell, value, _, _ = _advance(
        g.u, g.v, g.w, *_pvals(p), grid.h, dt, 1, caps.v, caps.w, BOUND_TOL, 0.0
    )
    g.t = f.t + dt
    if status:
        _raise_violation(status, cell, value, g.t)
    return g


def norms(f: Field, target: SteadyState, h: float) -> tuple[float, ...]:
    us, vs, ws = target.as_tuple()
    eu, ev, ew = f.u - us, f.v - vs, f.w - ws
    dw = np.diff(f.w)
    return (
        float(np.max(np.abs(eu))),
        float(np.max(np.abs(ev))),
        float(np.max(np.abs(ew))),
        math.sqrt(h * float(eu @ eu)),
        math.sqrt(h * float(ev @ ev)),
        math.sqrt(h * float(ew @ ew)),
        float(dw @ dw) / h,
    )


# --- trajectories --------------------------------------------------------------------


@dataclass
class Trajectory:
    params: ModelParams
    grid: Grid1D
    target: SteadyState
    times: np.ndarray
    norms: np.ndarray  # (n_samples, 7), columns NORM_FIELDS
    # entry k: max |w - w*| over every step state in [t_k, t_{k+1}]; the last entry is the final value
    w_dev_max: np.ndarray
    snapshots: list[Field] = field(default_factory=list)
    n_steps: int = 0
    dt_max: float = 0.0
    wall_clock: float = 0.0
    caps: Caps | None = None

    @property
    def final(self) -> dict[str, float]:
        return dict(zip(NORM_FIELDS, map(float, self.norms[-1])))

    @property
    def linf_max(self) -> np.ndarray:
        """max over components of the L-infinity distance at each sample."""
        return np.max(self.norms[:, :3], axis=1)

    def snapshot_times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def to_csv(self, path: str | Path) -> None:
        write_trajectory_csv(path, self.times, self.norms)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trajectory_csv(path: str | Path, times: np.ndarray, norm_rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("t",) + NORM_FIELDS)
        for t, row in zip(times, norm_rows):
            wr.writerow([_fmt(t)] + [_fmt(x) for x in row])


def read_trajectory_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def write_snapshot_csv(path: str | Path, grid: Grid1D, f: Field) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("x", "u", "v", "w"))
        for row in zip(grid.x, f.u, f.v, f.w):
            wr.writerow([_fmt(x) for x in row])


def read_snapshot_csv(path: str | Path) -> tuple[np.ndarray, Field]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], Field(data[:, 1].copy(), data[:, 2].copy(), data[:, 3].copy())


def sample_times(T_end: float, sample_every: float) -> np.ndarray:
    if not (T_end > 0 and sample_every > 0):
        raise InvalidParameter("T_end and sample_every must be > 0")
    k = int(math.floor(T_end / sample_every + 1e-9))
    ts = np.arange(k + 1) * sample_every
    if T_end - ts[-1] > 1e-9 * T_end:
        ts = np.append(ts, T_end)
    else:
        ts[-1] = T_end
    return ts


def simulate(
    p: ModelParams,
    init: InitialData | Field,
    grid: Grid1D,
    T_end: float,
    sample_every: float,
    target: SteadyState,
    *,
    dt: float | None = None,
    keep_snapshots: bool = True,
    snapshot_every: int = 1,
) -> Trajectory:
    """Integrate to ``T_end``, recording norms to ``target`` every ``sample_every``.

    Within each sample interval the step is dt = delta / ceil(delta / dt0),
    dt0 = ``dt`` or stable_dt at the interval start, so samples land exactly.
    """
    f = init.build(grid) if isinstance(init, InitialData) else init.copy()
    if isinstance(init, Field):
        check_admissible(f)
    caps = Caps.from_initial(f)
    ts = sample_times(T_end, sample_every)
    rows = np.empty((len(ts), len(NORM_FIELDS)))
    dev = np.empty(len(ts))
    rows[0] = norms(f, target, grid.h)
    snaps = [f.copy()] if keep_snapshots else []
    pv = _pvals(p)
    w_star = target.w_star
    n_steps, dt_max = 0, 0.0
    t0 = time.perf_counter()
    for k in range(1, len(ts)):
        span = ts[k] - ts[k - 1]
        dt0 = dt if dt is not None else stable_dt(f, p, grid)
        n = max(1, math.ceil(span / dt0 - 1e-12))
        dtk = span / n
        status, cell, value, done, d = _advance(
            f.u, f.v, f.w, *pv, grid.h, dtk, n, caps.v, caps.w, BOUND_TOL, w_star
        )
        n_steps += done
        if status:
            _raise_violation(status, cell, value, ts[k - 1] + done * dtk)
        f.t = float(ts[k])
        dt_max = max(dt_max, dtk)
        dev[k - 1] = d
        rows[k] = norms(f, target, grid.h)
        if keep_snapshots and (k % snapshot_every == 0 or k == len(ts) - 1):
            snaps.append(f.copy())
    dev[-1] = rows[-1, 2]
    return Trajectory(
        params=p,
        grid=grid,
        target=target,
        times=ts,
        norms=rows,
        w_dev_max=dev,
        snapshots=snaps,
        n_steps=n_steps,
        dt_max=dt_max,
        wall_clock=time.perf_counter() - t0,
        caps=caps,
    )


def final_field(traj: Trajectory) -> Field:
    if not traj.snapshots:
        raise ValueError("trajectory kept no snapshots")
    return traj.snapshots[-1]


NOISE_FLOOR = 1e-9


def fit_tail_rate(
    times: np.ndarray, dist: np.ndarray, *, noise_floor: float = NOISE_FLOOR, fraction: float = 0.5
) -> tuple[float, float, int]:
    """Exponential rate of ``dist`` over its trailing window: (slope of log dist, R^2, n points).

    Samples at or below ``noise_floor`` are dropped first; once the distance
    reaches round-off level the iterates stop moving and the log flattens.
    The window is the trailing ``fraction`` of the remaining samples.
    """
    times = np.asarray(times, dtype=float)
    dist = np.asarray(dist, dtype=float)
    keep = dist > noise_floor
    t, d = times[keep], dist[keep]
    start = int(len(t) * (1.0 - fraction))
    t, d = t[start:], d[start:]
    slope, r2 = fit_log_rate(t, d)
    return slope, r2, len(t)
