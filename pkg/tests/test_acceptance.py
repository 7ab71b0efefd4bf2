"""End-to-end acceptance checks; each records one pass/fail line for the terminal summary."""

from __future__ import annotations

import time

import numpy as np
import pytest

from acidlab.auxode import aux_initial, envelope_from_trajectory, simulate_aux, verify_sandwich
from acidlab.errors import NoCertificate
from acidlab.lyapunov import (
    beta_interval,
    build_quadratics,
    check_decay,
    eta_discriminant,
    eval_functionals,
    find_certificate,
)
from acidlab.model import ModelParams, healthy_state, homogeneous_tumor_state
from acidlab.pde import BOUND_TOL, Grid1D, InitialData, fit_tail_rate, simulate
from acidlab.regimes import CaseTag, classify_global, d1h_alternate, thresholds

from conftest import heterogeneous_run, record

pytestmark = pytest.mark.acceptance


def draw_broad(rng):
    a1, a2 = rng.uniform(0.05, 3.0, 2)
    d1, q = 10 ** rng.uniform(-2, 2, 2)
    return ModelParams.from_ratio(a1, a2, d1, q)


def draw_past_d1h(rng):
    """Proposal concentrated where d1 > d1h and d2/r > d2h."""
    a1 = rng.uniform(0.05, 0.95)
    a2 = rng.uniform(0.05, min(3.0, 0.999 / a1))
    d1h = thresholds(a1, a2, 1.0).d1h
    d1 = d1h * 10 ** rng.uniform(0.0, 1.0)
    q = thresholds(a1, a2, d1).d2h * 10 ** rng.uniform(0.0, 1.0)
    return ModelParams.from_ratio(a1, a2, d1, q)


def sample_case(rng, tag, n, proposal=draw_broad, max_tries=2_000_000):
    out = []
    for _ in range(max_tries):
        p = proposal(rng)
        if classify_global(p).case_tag is tag:
            out.append(p)
            if len(out) == n:
                return out
    raise RuntimeError(f"could not sample {n} points for {tag}")


def linf_to(f, s):
    return max(
        float(np.max(np.abs(f.u - s.u_star))),
        float(np.max(np.abs(f.v - s.v_star))),
        float(np.max(np.abs(f.w - s.w_star))),
    )


def within_bounds(traj):
    cap = traj.caps
    for s in traj.snapshots:
        if not (np.all(s.u > -BOUND_TOL) and np.all(s.u < 1 + BOUND_TOL)):
            return False
        if not (np.all(s.v > -BOUND_TOL) and np.all(s.v <= cap.v + BOUND_TOL)):
            return False
        if not (np.all(s.w > -BOUND_TOL) and np.all(s.w <= cap.w + BOUND_TOL)):
            return False
    return True


@pytest.fixture(scope="module")
def tumor_run():
    p = ModelParams.from_ratio(0.5, 1.5, 0.5, 0.5)
    t0 = time.perf_counter()
    traj = simulate(p, InitialData(seed=42), Grid1D(1.0, 128), 200.0, 0.1, homogeneous_tumor_state(p))
    return traj, time.perf_counter() - t0


@pytest.fixture(scope="module")
def healthy_run():
    p = ModelParams.from_ratio(2.0, 0.5, 0.5, 1.0)
    t0 = time.perf_counter()
    traj = simulate(p, InitialData(seed=42, v0_le_1=True), Grid1D(1.0, 128), 200.0, 0.1, healthy_state())
    return traj, time.perf_counter() - t0


class TestAcceptance:
    def test_01_threshold_coincidence(self):
        rng = np.random.default_rng(1)
        t0 = time.perf_counter()
        worst = 0.0
        for a1 in rng.uniform(0.05, 0.95, 1000):
            th = thresholds(a1, 1.0 / a1, 1.0)
            d1h = th.d1h
            worst = max(worst, abs(th.d1c - d1h) / (1.0 + abs(d1h)))
        dt = time.perf_counter() - t0
        ok = worst <= 1e-10 and dt < 1.0
        record(1, ok, f"max |d1c-d1h|/(1+|d1h|) = {worst:.2e} (tol 1e-10), {dt:.2f} s")
        assert ok

    def test_02_d1h_dual_form(self):
        rng = np.random.default_rng(2)
        t0 = time.perf_counter()
        worst, n = 0.0, 0
        while n < 1000:
            a1 = rng.uniform(0.01, 0.99)
            a2 = rng.uniform(0.01, 5.0)
            if a1 * a2 >= 1.0:
                continue
            a, b = thresholds(a1, a2, 1.0).d1h, d1h_alternate(a1, a2)
            worst = max(worst, abs(a - b) / abs(b))
            n += 1
        dt = time.perf_counter() - t0
        ok = worst <= 1e-10 and dt < 1.0
        record(2, ok, f"max rel diff = {worst:.2e} (tol 1e-10), {dt:.2f} s")
        assert ok

    def test_03_discriminant_factorization(self):
        rng = np.random.default_rng(3)
        t0 = time.perf_counter()
        worst = 0.0
        for regime in "hcr":
            n = 0
            while n < 1000:
                p = draw_broad(rng)
                if regime == "c" and (p.a2 + p.d1) / (1.0 + p.d2_over_r) <= 1.0:
                    continue
                qp = build_quadratics(regime, p)
                w = beta_interval(qp)
                if w.empty:
                    continue
                beta = rng.uniform(w.lo, w.hi)
                prod = qp.Phi(beta) * qp.Psi(beta)
                worst = max(worst, abs(eta_discriminant(regime, p, beta) - prod) / abs(prod))
                n += 1
        dt = time.perf_counter() - t0
        ok = worst <= 1e-8 and dt < 5.0
        record(3, ok, f"max rel |disc - Phi*Psi| = {worst:.2e} over 3x1000 draws (tol 1e-8), {dt:.2f} s")
        assert ok

    def test_04_certificates(self):
        rng = np.random.default_rng(4)
        t0 = time.perf_counter()
        plan = {
            "h": [(CaseTag.T11_i, 250, draw_broad), (CaseTag.T11_ii, 250, draw_past_d1h)],
            "c": [(t, 125, draw_broad) for t in (CaseTag.T12_i, CaseTag.T12_ii, CaseTag.T12_iii, CaseTag.T12_iv)],
            "r": [(CaseTag.T13_i, 250, draw_broad), (CaseTag.T13_ii, 250, draw_broad)],
        }
        failures = []
        for regime, parts in plan.items():
            for tag, n, proposal in parts:
                for p in sample_case(rng, tag, n, proposal):
                    try:
                        cert = find_certificate(regime, p)
                    except NoCertificate as exc:
                        failures.append((regime, tag.value, p, exc.stage))
                        continue
                    if min(cert.minors) <= 0:
                        failures.append((regime, tag.value, p, "minors"))
        try:
            find_certificate("h", ModelParams.from_ratio(0.99, 0.99, 5.0, 5.0))
            counterexample = False
        except NoCertificate as exc:
            counterexample = exc.stage == "beta"
        dt = time.perf_counter() - t0
        ok = not failures and counterexample and dt < 10.0
        record(4, ok, f"{len(failures)} failures in 3x500 draws, (0.99,0.99,5,5) -> NoCertificate: {counterexample}, {dt:.2f} s")
        assert ok, failures[:5]

    def test_05_heterogeneous_convergence(self, heterogeneous_128):
        traj, secs = heterogeneous_128.traj, heterogeneous_128.seconds
        fin = traj.final
        rate, r2, npts = fit_tail_rate(traj.times, traj.linf_max)
        ok = max(fin["linf_u"], fin["linf_v"], fin["linf_w"]) < 1e-3 and rate < -0.01 and r2 >= 0.95 and secs < 60
        record(
            5, ok,
            f"Linf (u,v,w) = ({fin['linf_u']:.1e}, {fin['linf_v']:.1e}, {fin['linf_w']:.1e}), "
            f"rate {rate:.4f}, R^2 {r2:.6f} ({npts} pts), {secs:.1f} s",
        )
        assert ok

    def test_06_homogeneous_tumor_convergence(self, tumor_run):
        traj, secs = tumor_run
        f = traj.snapshots[-1]
        u = float(np.max(np.abs(f.u)))
        v = float(np.max(np.abs(f.v - 2.0 / 3.0)))
        w = float(np.max(np.abs(f.w - 2.0 / 3.0)))
        ok = max(u, v, w) < 1e-3 and secs < 120
        record(6, ok, f"|u|, |v-2/3|, |w-2/3| = ({u:.1e}, {v:.1e}, {w:.1e}) at T=200, {secs:.1f} s")
        assert ok

    def test_07_healthy_convergence(self, healthy_run):
        traj, secs = healthy_run
        d = linf_to(traj.snapshots[-1], healthy_state())
        ok = d < 1e-3 and secs < 120 and float(traj.snapshots[0].v.max()) <= 1.0
        record(7, ok, f"Linf distance to (1,0,0) = {d:.1e} at T=200, {secs:.1f} s")
        assert ok

    def test_08_lyapunov_decay(self, heterogeneous_128):
        traj = heterogeneous_128.traj
        cert = find_certificate("h", traj.params)
        samples = eval_functionals(traj, cert, traj.target)
        rep = check_decay(samples, cert, h=traj.grid.h, dt=traj.dt_max, t_min=1.0)
        ratio = samples[-1].E / samples[0].E
        ok = rep.fraction >= 0.99 and ratio < 1e-6
        record(8, ok, f"decay inequality at {rep.fraction:.4f} of {rep.n_checked} samples (t>=1), E(T)/E(0) = {ratio:.1e}")
        assert ok

    def test_09_bounds(self, heterogeneous_128, tumor_run, healthy_run):
        runs = [heterogeneous_128.traj, tumor_run[0], healthy_run[0]]
        ok = all(within_bounds(t) for t in runs)
        record(9, ok, f"all snapshots of 3 runs inside the invariant region (tol {BOUND_TOL:g}); every step checked in-kernel")
        assert ok

    def test_10_sandwich(self, heterogeneous_128):
        traj = heterogeneous_128.traj
        env = envelope_from_trajectory(traj)
        aux = simulate_aux("h", traj.params, env, aux_initial("h", traj.snapshots[0], traj.params), 100.0, dense=True)
        rep = verify_sandwich(traj, aux)
        gap = float(aux.column("u_bar")[-1] - aux.column("u_under")[-1])
        ok = rep.passed and gap < 1e-3
        record(10, ok, f"{len(rep.violations)} violations (tol {rep.tol:.2e}), u_bar - u_under at T=100 = {gap:.1e}")
        assert ok

    def test_11_spatial_order(self):
        # distance to equilibrium is ~0.1 at t = 1; at T = 100 every grid sits at round-off
        T = 1.0

        def fields(n):
            return heterogeneous_run(n, T).traj.snapshots[-1]

        def restrict(a, m):
            # cubic midpoint interpolation between fine cells m*i + m/2 - 1 and m*i + m/2
            pad = np.pad(a, 2, mode="symmetric")
            j = m * np.arange(len(a) // m) + m // 2 - 1 + 2
            return (-pad[j - 1] + 9 * pad[j] + 9 * pad[j + 1] - pad[j + 2]) / 16.0

        ref = fields(1024)
        errs = []
        for n in (64, 128, 256):
            f = fields(n)
            m = 1024 // n
            errs.append(max(float(np.max(np.abs(getattr(f, c) - restrict(getattr(ref, c), m)))) for c in "uvw"))
        ratios = [errs[0] / errs[1], errs[1] / errs[2]]
        ok = all(3.0 <= r <= 5.0 for r in ratios)
        record(11, ok, f"errors {', '.join(f'{e:.2e}' for e in errs)}; ratios {ratios[0]:.2f}, {ratios[1]:.2f} (band [3, 5])")
        assert ok

    def test_12_determinism(self, heterogeneous_128, tmp_path):
        heterogeneous_128.traj.to_csv(tmp_path / "a.csv")
        heterogeneous_run().traj.to_csv(tmp_path / "b.csv")
        same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        record(12, same, f"trajectory CSV byte-identical on rerun: {same}")
        assert same
