"""Command-line entry point: ``acidlab {classify,thresholds,simulate,verify,scan}``.

Inputs come from a single JSON config (``--config``) with kebab-case flags
overriding individual fields.  Exit codes: 0 ok, 2 invalid input,
3 simulation fault (bound violation), 4 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import auxode, lyapunov, pde, svg
from .errors import AcidLabError, BoundViolation, InvalidParameter, NoCertificate
from .model import ModelParams, StateKind, SteadyState, all_states, linear_stability, trivial_state
from .regimes import CaseTag, classify_global, thresholds

log = logging.getLogger("acidlab")

EXIT_OK, EXIT_INVALID, EXIT_FAULT, EXIT_VERIFY = 0, 2, 3, 4

PARAM_NAMES = ("D", "d1", "d2", "r", "c", "a1", "a2")


class ConfigError(InvalidParameter):
    pass


# --- configuration -------------------------------------------------------------------------


def params_from_dict(d: dict) -> ModelParams:
    d = dict(d)
    if "d2_over_r" in d:
        q = d.pop("d2_over_r")
        if "d2" in d and q is not None:
            raise ConfigError("give either d2 or d2_over_r, not both")
        if q is not None:
            d["d2"] = float(q) * float(d.get("r", 1.0))
    for k, default in (("r", 1.0), ("c", 1.0), ("D", 1.0)):
        d.setdefault(k, default)
    missing = [k for k in PARAM_NAMES if d.get(k) is None]
    if missing:
        raise ConfigError(f"missing parameters: {', '.join(missing)}")
    unknown = set(d) - set(PARAM_NAMES)
    if unknown:
        raise ConfigError(f"unknown parameters: {', '.join(sorted(unknown))}")
    try:
        return ModelParams(**{k: float(d[k]) for k in PARAM_NAMES})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class RunConfig:
    params: dict[str, float]
    grid: dict[str, Any] = field(default_factory=lambda: {"L": 1.0, "n_cells": 128})
    init: dict[str, Any] = field(default_factory=lambda: {"kind": "cosine", "seed": 0})
    T_end: float = 100.0
    sample_every: float = 0.1
    target: str = "auto"
    verify: dict[str, bool] = field(default_factory=lambda: {"lyapunov": True, "sandwich": True})
    output: dict[str, Any] = field(default_factory=lambda: {"dir": "run", "svg": True})

    KEYS = ("params", "grid", "init", "T_end", "sample_every", "target", "verify", "output")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "params" not in d:
            raise ConfigError("config needs a 'params' section")
        base = cls(params=dict(d["params"]))
        for k in cls.KEYS[1:]:
            if k in d:
                v = d[k]
                cur = getattr(base, k)
                setattr(base, k, {**cur, **v} if isinstance(cur, dict) else v)
        base.validate()
        return base

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.KEYS}

    def validate(self) -> None:
        self.model_params()
        self.grid_obj()
        self.init_obj()
        if not (isinstance(self.T_end, (int, float)) and self.T_end > 0):
            raise ConfigError(f"T_end must be > 0, got {self.T_end!r}")
        if not (isinstance(self.sample_every, (int, float)) and 0 < self.sample_every <= self.T_end):
            raise ConfigError(f"sample_every must be in (0, T_end], got {self.sample_every!r}")
        if self.target != "auto" and self.target not in {k.value for k in StateKind}:
            raise ConfigError(f"target must be 'auto' or a state kind, got {self.target!r}")

    def model_params(self) -> ModelParams:
        return params_from_dict(self.params)

    def grid_obj(self) -> pde.Grid1D:
        try:
            return pde.Grid1D(float(self.grid.get("L", 1.0)), int(self.grid.get("n_cells", 128)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def init_obj(self) -> pde.InitialData:
        allowed = {"kind", "u_mean", "v_mean", "w_mean", "amplitude", "seed", "v0_le_1", "arrays"}
        unknown = set(self.init) - allowed
        if unknown:
            raise ConfigError(f"unknown init keys: {', '.join(sorted(unknown))}")
        kw = dict(self.init)
        if kw.get("arrays") is not None:
            kw["arrays"] = tuple(tuple(a) for a in kw["arrays"])
        init = pde.InitialData(**kw)
        if init.kind not in ("constant", "cosine", "arrays"):
            raise ConfigError(f"unknown init kind {init.kind!r}")
        return init


@dataclass
class ScanConfig:
    a1: float
    a2: float
    d1_range: tuple[float, float]
    d1_count: int
    q_range: tuple[float, float]
    q_count: int
    r: float = 1.0
    c: float = 1.0
    D: float = 1.0
    action: str = "classify_only"  # classify_only | classify+certificate | full_simulation
    sim_T_end: float = 20.0
    sim_n_cells: int = 32
    seed: int = 0
    output: dict[str, Any] = field(default_factory=lambda: {"dir": "scan", "svg": True})

    ACTIONS = ("classify_only", "classify+certificate", "full_simulation")

    @classmethod
    def from_dict(cls, d: dict) -> "ScanConfig":
        names = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown scan keys: {', '.join(sorted(unknown))}")
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.d1_range = tuple(map(float, cfg.d1_range))  # type: ignore[assignment]
        cfg.q_range = tuple(map(float, cfg.q_range))  # type: ignore[assignment]
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {f: copy.deepcopy(getattr(self, f)) for f in self.__dataclass_fields__}

    def validate(self) -> None:
        if self.d1_count < 2 or self.q_count < 2:
            raise ConfigError("scan counts must be >= 2")
        for name, (lo, hi) in (("d1_range", self.d1_range), ("q_range", self.q_range)):
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if self.action not in self.ACTIONS:
            raise ConfigError(f"action must be one of {self.ACTIONS}")
        ModelParams.from_ratio(self.a1, self.a2, self.d1_range[0], self.q_range[0], self.r, self.c, self.D)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(*self.d1_range, self.d1_count), np.linspace(*self.q_range, self.q_count)


# --- shared helpers ---------------------------------------------------------------------


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n"


def _json_default(o: Any) -> Any:
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _finite_or_none(x: float) -> float | None:
    return x if isinstance(x, float) and math.isfinite(x) else (None if isinstance(x, float) else x)


def _state_dict(s: SteadyState | None) -> dict | None:
    if s is None:
        return None
    return {"kind": s.kind.value, "u": s.u_star, "v": s.v_star, "w": s.w_star}


def classify_report(p: ModelParams) -> dict:
    states = all_states(p)
    th = thresholds(p.a1, p.a2, p.d1)
    gc = classify_global(p)
    verdicts = {}
    for kind, s in states.items():
        if s is None:
            verdicts[kind.value] = {"state": None, "exists_positive": False, "linear": "degenerate"}
            continue
        v = linear_stability(p, s)
        verdicts[kind.value] = {"state": _state_dict(s), "exists_positive": v.exists_positive, "linear": v.linear}
    attractor = gc.predicted_attractor
    return {
        "params": p.as_dict(),
        "d2_over_r": p.d2_over_r,
        "thresholds": th.as_dict(),
        "linear": verdicts,
        "classification": gc.as_dict(),
        "predicted_state": None if attractor is None else _state_dict(states[attractor]),
    }


def select_target(p: ModelParams, selector: str) -> SteadyState:
    states = all_states(p)
    if selector != "auto":
        s = states[StateKind(selector)]
        if s is None:
            raise ConfigError(f"target {selector} is undefined for these parameters")
        return s
    gc = classify_global(p)
    if gc.predicted_attractor is not None:
        return states[gc.predicted_attractor]
    for kind in (StateKind.HETEROGENEOUS, StateKind.HOMOGENEOUS_TUMOR, StateKind.HEALTHY):
        s = states[kind]
        if s is not None:
            v = linear_stability(p, s)
            if v.exists_positive and v.linear == "stable":
                return s
    raise ConfigError("no theorem or linearly stable state selects a target; set 'target' explicitly")


def _load_json(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# --- argument parsing ---------------------------------------------------------------------


def _add_param_flags(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("model parameters")
    for name in PARAM_NAMES:
        g.add_argument(f"--{name}", type=float, default=None)
    g.add_argument("--d2-over-r", dest="d2_over_r", type=float, default=None)


def _param_overrides(ns: argparse.Namespace) -> dict:
    out = {k: getattr(ns, k) for k in PARAM_NAMES if getattr(ns, k) is not None}
    if ns.d2_over_r is not None:
        out["d2_over_r"] = ns.d2_over_r
    return out


def _merge_params(base: dict, over: dict) -> dict:
    merged = dict(base)
    if "d2" in over or "d2_over_r" in over:
        merged.pop("d2", None)
        merged.pop("d2_over_r", None)
    merged.update(over)
    return merged


def _add_run_flags(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--config", help="JSON run config")
    _add_param_flags(ap)
    ap.add_argument("--n-cells", type=int)
    ap.add_argument("--length", type=float, dest="L")
    ap.add_argument("--init-kind", choices=("constant", "cosine"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--amplitude", type=float)
    ap.add_argument("--v0-le-1", action="store_true", default=None)
    ap.add_argument("--t-end", type=float)
    ap.add_argument("--sample-every", type=float)
    ap.add_argument("--target")
    ap.add_argument("--out-dir")
    ap.add_argument("--no-svg", action="store_true")
    ap.add_argument("--no-lyapunov", action="store_true")
    ap.add_argument("--no-sandwich", action="store_true")


def run_config_from_args(ns: argparse.Namespace) -> RunConfig:
    d: dict = _load_json(ns.config) if ns.config else {"params": {}}
    d.setdefault("params", {})
    d["params"] = _merge_params(d["params"], _param_overrides(ns))
    sections = {k: dict(d.get(k, {})) for k in ("grid", "init", "verify", "output")}
    if ns.n_cells is not None:
        sections["grid"]["n_cells"] = ns.n_cells
    if ns.L is not None:
        sections["grid"]["L"] = ns.L
    for flag, key in (("init_kind", "kind"), ("seed", "seed"), ("amplitude", "amplitude"), ("v0_le_1", "v0_le_1")):
        if getattr(ns, flag) is not None:
            sections["init"][key] = getattr(ns, flag)
    if ns.no_lyapunov:
        sections["verify"]["lyapunov"] = False
    if ns.no_sandwich:
        sections["verify"]["sandwich"] = False
    if ns.out_dir is not None:
        sections["output"]["dir"] = ns.out_dir
    if ns.no_svg:
        sections["output"]["svg"] = False
    for k, v in sections.items():
        if v:
            d[k] = v
    if ns.t_end is not None:
        d["T_end"] = ns.t_end
    if ns.sample_every is not None:
        d["sample_every"] = ns.sample_every
    if ns.target is not None:
        d["target"] = ns.target
    return RunConfig.from_dict(d)


# --- simulate / verify ----------------------------------------------------------------------


REGIME_OF = {
    StateKind.HETEROGENEOUS: lyapunov.Regime.HETEROGENEOUS,
    StateKind.HOMOGENEOUS_TUMOR: lyapunov.Regime.HOMOGENEOUS_TUMOR,
    StateKind.HEALTHY: lyapunov.Regime.HEALTHY,
}


def run_simulation(cfg: RunConfig) -> tuple[pde.Trajectory, SteadyState]:
    p = cfg.model_params()
    target = select_target(p, cfg.target)
    init = cfg.init_obj()
    gc = classify_global(p)
    if gc.requires_v0_le_1 and not init.v0_le_1:
        log.warning("warning: %s predicts the healthy state only for v0 <= 1; the v0_le_1 flag is not set", gc.case_tag.value)
    traj = pde.simulate(p, init, cfg.grid_obj(), float(cfg.T_end), float(cfg.sample_every), target)
    return traj, target


def verification_report(traj: pde.Trajectory, target: SteadyState, checks: dict[str, bool]) -> dict:
    """Lyapunov decay and sandwich checks; each entry reports passed / failed / skipped."""
    p = traj.params
    out: dict[str, Any] = {}
    regime = REGIME_OF.get(target.kind)
    if checks.get("lyapunov", True):
        if regime is None:
            out["lyapunov"] = {"status": "skipped", "reason": f"no Lyapunov functional for {target.kind.value}"}
        else:
            try:
                cert = lyapunov.find_certificate(regime, p)
            except NoCertificate as exc:
                out["lyapunov"] = {"status": "skipped", "reason": str(exc), "stage": exc.stage}
            else:
                samples = lyapunov.eval_functionals(traj, cert, target)
                t_min = min(1.0, float(traj.times[-1]) / 2)
                rep = lyapunov.check_decay(samples, cert, h=traj.grid.h, dt=traj.dt_max, t_min=t_min)
                out["lyapunov"] = {
                    "status": "passed" if rep.passed else "failed",
                    "certificate": cert.as_dict(),
                    "t_min": t_min,
                    "E0": samples[0].E,
                    "E_final": samples[-1].E,
                    **rep.as_dict(),
                }
    if checks.get("sandwich", True):
        if regime is None:
            out["sandwich"] = {"status": "skipped", "reason": f"no comparison system for {target.kind.value}"}
        else:
            env = auxode.envelope_from_trajectory(traj)
            y0 = auxode.aux_initial(regime, traj.snapshots[0], p)
            try:
                aux = auxode.simulate_aux(regime, p, env, y0, float(traj.times[-1]))
            except AcidLabError as exc:
                out["sandwich"] = {"status": "skipped", "reason": str(exc)}
            else:
                srep = auxode.verify_sandwich(traj, aux, regime)
                out["sandwich"] = {"status": "passed" if srep.passed else "failed", **srep.as_dict()}
                final = dict(zip(aux.components, map(float, aux.states[-1])))
                out["sandwich"]["aux_final"] = final
    out["passed"] = all(v.get("status") != "failed" for v in out.values() if isinstance(v, dict))
    return out


def save_run(out_dir: Path, cfg: RunConfig, traj: pde.Trajectory) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out_dir / "trajectory.csv")
    pde.write_snapshot_csv(out_dir / "snapshot_final.csv", traj.grid, traj.snapshots[-1])
    snaps = traj.snapshots
    np.savez_compressed(
        out_dir / "snapshots.npz",
        t=np.array([s.t for s in snaps]),
        u=np.array([s.u for s in snaps]),
        v=np.array([s.v for s in snaps]),
        w=np.array([s.w for s in snaps]),
        times=traj.times,
        norms=traj.norms,
        w_dev_max=traj.w_dev_max,
        dt_max=traj.dt_max,
        n_steps=traj.n_steps,
    )
    _write(out_dir / "config.json", _dump(cfg.to_dict()))


def load_run(run_dir: Path) -> tuple[RunConfig, pde.Trajectory, SteadyState]:
    cfg = RunConfig.from_dict(_load_json(run_dir / "config.json"))
    try:
        z = np.load(run_dir / "snapshots.npz")
    except OSError as exc:
        raise ConfigError(f"cannot read snapshots in {run_dir}: {exc}") from exc
    p = cfg.model_params()
    target = select_target(p, cfg.target)
    snaps = [pde.Field(u.copy(), v.copy(), w.copy(), float(t)) for t, u, v, w in zip(z["t"], z["u"], z["v"], z["w"])]
    traj = pde.Trajectory(
        params=p,
        grid=cfg.grid_obj(),
        target=target,
        times=z["times"],
        norms=z["norms"],
        w_dev_max=z["w_dev_max"],
        snapshots=snaps,
        n_steps=int(z["n_steps"]),
        dt_max=float(z["dt_max"]),
        caps=pde.Caps.from_initial(snaps[0]),
    )
    return cfg, traj, target


def cmd_simulate(ns: argparse.Namespace) -> int:
    cfg = run_config_from_args(ns)
    out_dir = Path(cfg.output.get("dir", "run"))
    try:
        traj, target = run_simulation(cfg)
    except BoundViolation as exc:
        payload = {"error": "bound_violation", **exc.payload()}
        _write(out_dir / "error.json", _dump(payload))
        sys.stderr.write(_dump(payload))
        return EXIT_FAULT
    save_run(out_dir, cfg, traj)
    rate, r2, npts = pde.fit_tail_rate(traj.times, traj.linf_max)
    ver = verification_report(traj, target, cfg.verify)
    lyap = ver.get("lyapunov", {})
    sand = ver.get("sandwich", {})
    summary = {
        "target": _state_dict(target),
        "classification": classify_global(traj.params).as_dict(),
        **{f"final_{k}": v for k, v in traj.final.items()},
        "decay_rate": _finite_or_none(rate),
        "decay_r_squared": _finite_or_none(r2),
        "decay_fit_points": npts,
        "certificate": lyap.get("certificate"),
        "lyapunov_status": lyap.get("status"),
        "lyapunov_decay_fraction": lyap.get("fraction"),
        "sandwich_status": sand.get("status"),
        "sandwich_violations": sand.get("n_violations"),
        "n_steps": traj.n_steps,
        "dt_max": traj.dt_max,
        "wall_clock_s": traj.wall_clock,
    }
    _write(out_dir / "summary.json", _dump(summary))
    if cfg.output.get("svg", True):
        series = {name: traj.norms[:, j] for j, name in enumerate(pde.NORM_FIELDS[:3])}
        _write(out_dir / "norms.svg", svg.line_plot_log(traj.times, series, title="L-inf distance to target"))
    sys.stdout.write(_dump(summary))
    return EXIT_OK


def cmd_verify(ns: argparse.Namespace) -> int:
    if ns.run_dir:
        cfg, traj, target = load_run(Path(ns.run_dir))
    else:
        cfg = run_config_from_args(ns)
        try:
            traj, target = run_simulation(cfg)
        except BoundViolation as exc:
            sys.stderr.write(_dump({"error": "bound_violation", **exc.payload()}))
            return EXIT_FAULT
    checks = dict(cfg.verify)
    if ns.no_lyapunov:
        checks["lyapunov"] = False
    if ns.no_sandwich:
        checks["sandwich"] = False
    rep = verification_report(traj, target, checks)
    text = _dump(rep)
    if ns.report:
        _write(Path(ns.report), text)
    sys.stdout.write(text)
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


# --- classify / thresholds ----------------------------------------------------------------


def _params_for_point(ns: argparse.Namespace) -> ModelParams:
    base = _load_json(ns.config).get("params", {}) if ns.config else {}
    return params_from_dict(_merge_params(base, _param_overrides(ns)))


def cmd_classify(ns: argparse.Namespace) -> int:
    p = _params_for_point(ns)
    rep = classify_report(p)
    if ns.certificate:
        kind = classify_global(p).predicted_attractor
        if kind is not None:
            try:
                rep["certificate"] = lyapunov.find_certificate(REGIME_OF[kind], p).as_dict()
            except NoCertificate as exc:
                rep["certificate"] = {"error": str(exc), "stage": exc.stage}
    text = _dump(rep)
    if ns.out:
        _write(Path(ns.out), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_thresholds(ns: argparse.Namespace) -> int:
    for k in ("a1", "a2", "d1"):
        v = getattr(ns, k)
        if not (math.isfinite(v) and v > 0):
            raise InvalidParameter(f"{k} must be finite and > 0")
    th = thresholds(ns.a1, ns.a2, ns.d1)
    sys.stdout.write(_dump({"a1": ns.a1, "a2": ns.a2, "d1": ns.d1, **th.as_dict(), "undefined": th.undefined()}))
    return EXIT_OK


# --- scan ---------------------------------------------------------------------------------


SCAN_COLUMNS = ("d1", "d2_over_r", "case_tag", "certificate_found", "certificate_regime", "attained_attractor")

CASE_COLORS = {
    "T11_i": "#1f77b4", "T11_ii": "#6baed6",
    "T12_i": "#d62728", "T12_ii": "#ff7f0e", "T12_iii": "#fdae6b", "T12_iv": "#e377c2",
    "T13_i": "#2ca02c", "T13_ii": "#98df8a",
    "unknown_gap": "#000000", "no_theorem": "#c7c7c7",
}


def worker_count() -> int:
    env = os.environ.get("ACIDLAB_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"ACIDLAB_THREADS must be an integer, got {env!r}") from None
    return cap


def _nearest_state(p: ModelParams, f: pde.Field, tol: float = 1e-2) -> str:
    best, best_d = "none", math.inf
    for kind, s in all_states(p).items():
        if s is None:
            continue
        d = max(float(np.max(np.abs(f.u - s.u_star))), float(np.max(np.abs(f.v - s.v_star))),
                float(np.max(np.abs(f.w - s.w_star))))
        if d < best_d:
            best, best_d = kind.value, d
    return best if best_d < tol else "none"


def scan_point(cfg: ScanConfig, d1: float, q: float) -> dict:
    p = ModelParams.from_ratio(cfg.a1, cfg.a2, float(d1), float(q), cfg.r, cfg.c, cfg.D)
    gc = classify_global(p)
    row: dict[str, Any] = {"d1": float(d1), "d2_over_r": float(q), "case_tag": gc.case_tag.value,
                           "certificate_found": "", "certificate_regime": "", "attained_attractor": ""}
    if cfg.action != "classify_only":
        if gc.predicted_attractor is not None:
            regimes = [REGIME_OF[gc.predicted_attractor]]
        else:
            regimes = list(lyapunov.Regime)
        found = ""
        for reg in regimes:
            try:
                lyapunov.find_certificate(reg, p)
            except NoCertificate:
                continue
            found = reg.value
            break
        row["certificate_found"] = "true" if found else "false"
        row["certificate_regime"] = found
    if cfg.action == "full_simulation":
        init = pde.InitialData(seed=cfg.seed, v0_le_1=gc.requires_v0_le_1)
        grid = pde.Grid1D(1.0, cfg.sim_n_cells)
        try:
            traj = pde.simulate(p, init, grid, cfg.sim_T_end, cfg.sim_T_end, trivial_state())
            row["attained_attractor"] = _nearest_state(p, traj.snapshots[-1])
        except BoundViolation:
            row["attained_attractor"] = "bound_violation"
    return row


def run_scan(cfg: ScanConfig, workers: int | None = None) -> list[dict]:
    d1s, qs = cfg.axes()
    points = [(d1, q) for d1 in d1s for q in qs]  # row-major: d1 outer, d2/r inner
    workers = workers or worker_count()
    if workers <= 1:
        return [scan_point(cfg, d1, q) for d1, q in points]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda pt: scan_point(cfg, *pt), points))


def write_scan_csv(path: Path, rows: Sequence[dict]) -> None:
    import csv

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SCAN_COLUMNS)
        for row in rows:
            wr.writerow([f"{row[k]:.17g}" if isinstance(row[k], float) else row[k] for k in SCAN_COLUMNS])


def cmd_scan(ns: argparse.Namespace) -> int:
    d = _load_json(ns.config) if ns.config else {}
    for flag, key in (("a1", "a1"), ("a2", "a2"), ("r", "r"), ("c", "c"), ("D", "D"),
                      ("d1_count", "d1_count"), ("q_count", "q_count"), ("action", "action")):
        if getattr(ns, flag) is not None:
            d[key] = getattr(ns, flag)
    if ns.d1_range is not None:
        d["d1_range"] = ns.d1_range
    if ns.q_range is not None:
        d["q_range"] = ns.q_range
    if ns.out_dir is not None:
        d.setdefault("output", {})["dir"] = ns.out_dir
    cfg = ScanConfig.from_dict(d)
    rows = run_scan(cfg)
    out_dir = Path(cfg.output.get("dir", "scan"))
    write_scan_csv(out_dir / "scan.csv", rows)
    if cfg.output.get("svg", True) and not ns.no_svg:
        d1s, qs = cfg.axes()
        labels = [[rows[i * len(qs) + j]["case_tag"] for j in range(len(qs))] for i in range(len(d1s))]
        _write(out_dir / "scan.svg", svg.category_map(
            list(d1s), list(qs), labels, colors=CASE_COLORS,
            title=f"theorem cases, a1={cfg.a1:g}, a2={cfg.a2:g}",
        ))
    counts: dict[str, int] = {}
    for row in rows:
        counts[row["case_tag"]] = counts.get(row["case_tag"], 0) + 1
    sys.stdout.write(_dump({"points": len(rows), "case_counts": dict(sorted(counts.items())), "dir": str(out_dir)}))
    return EXIT_OK


# --- main ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="acidlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", help="thresholds, linear verdicts and the global case for one point")
    c.add_argument("--config")
    _add_param_flags(c)
    c.add_argument("--certificate", action="store_true", help="also search a Lyapunov certificate")
    c.add_argument("--out")
    c.set_defaults(func=cmd_classify)

    t = sub.add_parser("thresholds", help="the six threshold values")
    t.add_argument("--a1", type=float, required=True)
    t.add_argument("--a2", type=float, required=True)
    t.add_argument("--d1", type=float, required=True)
    t.set_defaults(func=cmd_thresholds)

    s = sub.add_parser("simulate", help="run the PDE and write CSV/JSON/SVG artifacts")
    _add_run_flags(s)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="Lyapunov decay and sandwich checks on a run")
    _add_run_flags(v)
    v.add_argument("--run-dir", help="directory written by 'simulate'")
    v.add_argument("--report", help="write the JSON report here")
    v.set_defaults(func=cmd_verify)

    sc = sub.add_parser("scan", help="classify a (d1, d2/r) grid")
    sc.add_argument("--config")
    for name in ("a1", "a2", "r", "c", "D"):
        sc.add_argument(f"--{name}", type=float)
    sc.add_argument("--d1-range", type=float, nargs=2)
    sc.add_argument("--q-range", "--d2-over-r-range", dest="q_range", type=float, nargs=2)
    sc.add_argument("--d1-count", type=int)
    sc.add_argument("--q-count", "--d2-over-r-count", dest="q_count", type=int)
    sc.add_argument("--action", choices=ScanConfig.ACTIONS)
    sc.add_argument("--out-dir")
    sc.add_argument("--no-svg", action="store_true")
    sc.set_defaults(func=cmd_scan)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(message)s", stream=sys.stderr)
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        return ns.func(ns)
    except BoundViolation as exc:
        sys.stderr.write(_dump({"error": "bound_violation", **exc.payload()}))
        return EXIT_FAULT
    except (AcidLabError, ValueError, TypeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
