"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The long closed-loop runs are module-scoped fixtures so that the criteria
reading the same run (tracking, monitors, jump bound, orthonormality) share
it.
"""
import math
import time

import numpy as np
import pytest

from morphsim import analysis as an
from morphsim import config
from morphsim import estimator as est
from morphsim import experiment as ex
from morphsim import planner as pl
from morphsim import rigid_body as rb
from morphsim import simulator as sim
from morphsim import so3
from morphsim.errors import SettlingViolation
from morphsim.so3 import GainSet

from conftest import random_spd_params


def report(n, title, ok, detail=""):
    print(f"criterion {n:2d} [{title}]: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


ORTHO = {}  # run name -> max |R'R - I| over the run


def _track(name, log):
    ORTHO[name] = log.summary["max_orthonormality_error"]
    return log


@pytest.fixture(scope="module")
def adaptive_run():
    cfg = config.load_bundled("fig3")
    sc = ex.build_scenario(cfg)
    log, elapsed = _timed(sim.run, sc)
    return sc, _track("adaptive_switching", log), elapsed


@pytest.fixture(scope="module")
def disturbance_run():
    cfg = config.load_bundled("fig5_disturbance")
    sc = ex.build_scenario(cfg)
    return sc, _track("disturbance", sim.run(sc))


# 1 ------------------------------------------------------------------------


def test_regressor_identities():
    rng = np.random.default_rng(1)
    n = 10_000
    t0 = time.perf_counter()
    W = rng.normal(size=(n, 3))
    A = rng.normal(size=(n, 3))
    H = rng.normal(size=(n, 6))
    worst = 0.0
    for w, a, h in zip(W, A, H):
        J = rb.assemble_inertia(h)
        Jw = J @ w
        scale1 = np.linalg.norm(J) * (w @ w)
        scale2 = np.linalg.norm(J) * np.linalg.norm(a)
        e1 = np.linalg.norm(rb.regressor_y1(w) @ h - np.cross(Jw, w)) / scale1
        e2 = np.linalg.norm(rb.regressor_y2(a) @ h - J @ a) / scale2
        worst = max(worst, e1, e2)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    report(1, "regressor identities", ok, f"max rel err {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert elapsed < 1.0


# 2 ------------------------------------------------------------------------


def test_geometry_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    G = np.array([0.9, 1.0, 1.1])
    # hat/vee round trip, exact
    v = rng.normal(size=(1000, 3))
    roundtrip = all(np.array_equal(so3.vee(so3.hat(x)), x) for x in v)
    # C(R_d, R) spectral norm
    n = 100_000
    from scipy.spatial.transform import Rotation

    R = Rotation.random(n, random_state=3).as_matrix()
    Rd = Rotation.random(n, random_state=4).as_matrix()
    B = np.einsum("nji,njk->nik", R, Rd) * G[None, None, :]
    tr = np.einsum("nii->n", B)
    C = 0.5 * (tr[:, None, None] * np.eye(3) - B)
    cnorm = np.linalg.norm(C, ord=2, axis=(1, 2))
    c_bad = int(np.count_nonzero(cnorm > G.sum() / math.sqrt(2) * (1 + 1e-12)))
    # Phi versus |e_R|^2 on an independent draw of the certified sublevel set
    level = an.default_phi_level(G)
    b1, b2 = an.certify_phi_bounds(G, level)
    ratio = an._sample_sublevel(G, level, n, np.random.default_rng(987654))
    phi_bad = int(np.count_nonzero((ratio < b1) | (ratio > b2)))
    elapsed = time.perf_counter() - t0
    ok = roundtrip and c_bad == 0 and phi_bad == 0 and elapsed < 10.0
    report(2, "geometry suite", ok,
           f"roundtrip={roundtrip}, |C| violations {c_bad}, Phi-bound violations {phi_bad} "
           f"(b1={b1:.4f}, b2={b2:.4f}, level {level:.2f}), {elapsed:.1f} s")
    assert roundtrip
    assert c_bad == 0
    assert phi_bad == 0
    assert elapsed < 10.0


# 3 ------------------------------------------------------------------------


def test_known_model_exponential_certificate():
    cfg = config.load_bundled("case1_single")
    sc = ex.build_scenario(cfg)
    assert sc.dt == 1e-4 and sc.horizon == 10.0
    beta = sc.certificate.subsystems[1].beta
    s_ = sim.Simulator(sc)
    t0 = time.perf_counter()
    s = s_.initial_state()
    V0 = s_.loop.lyapunov(s_.evaluate_state(s), 1, None)
    worst = -math.inf
    n = int(round(sc.horizon / sc.dt))
    for k in range(n):
        s = s_.step(s, sc.dt)
        s.t = (k + 1) * sc.dt
        V = s_.loop.lyapunov(s_.evaluate_state(s), 1, None)
        worst = max(worst, V / (V0 * math.exp(-2 * beta * s.t)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1 + 1e-3 and elapsed < 30.0
    report(3, "known-model exponential certificate", ok,
           f"max V/(V0 exp(-2 beta t)) = {worst:.6f}, beta={beta:.4g}, {n} steps in {elapsed:.1f} s")
    assert worst <= 1 + 1e-3
    assert elapsed < 30.0


# 4 ------------------------------------------------------------------------


def test_dwell_time_soundness():
    cfg = config.load_bundled("case1_dwell")
    base = ex.build_scenario(cfg)
    tau_d = base.certificate.tau_d
    r = 1.05 * tau_d
    n_res = 11  # five complete 1 -> 2 -> 1 cycles
    bps = [(k * r, 1 + k % 2) for k in range(n_res)]
    cfg.switching.breakpoints = [[t, p] for t, p in bps]
    cfg.integration.horizon = n_res * r
    sc = ex.build_scenario(cfg)
    log = _track("dwell", sim.run(sc))
    entries = {1: [log["V"][0]], 2: []}
    for e in log.events:
        entries[e["to"]].append(e["V_in"])
    dec = {p: all(b < a for a, b in zip(v, v[1:])) for p, v in entries.items()}
    cycles = min(len(entries[1]), len(entries[2]) + 1) - 1
    ok = all(dec.values()) and cycles >= 5
    report(4, "dwell-time soundness", ok,
           f"tau_d={tau_d:.3f} s, residence {r:.3f} s, entries V_1={['%.2e' % x for x in entries[1]]}")
    assert cycles >= 5
    assert dec[1] and dec[2]


# 5 ------------------------------------------------------------------------


def test_adaptive_switching_reproduction(adaptive_run):
    sc, log, elapsed = adaptive_run
    assert sc.controller == "adaptive"
    assert [t for t in sc.signal.switch_times()] == [30.0, 60.0]
    e_O = float(np.linalg.norm(log.e_Omega[-1]))
    e_R = float(np.linalg.norm(log.e_R[-1]))
    reentry = [e for e in log.events if abs(e["t"] - 60.0) < 1e-6 and e.get("reentry")]
    cond = bool(reentry) and reentry[0]["condition_ok"]
    min_p = log.summary["min_P_eig"]
    ok = (log.t[-1] == 90.0 and e_O <= 1e-2 and e_R <= 1e-2 and cond and min_p > 0
          and elapsed < 120.0)
    report(5, "adaptive switching reproduction", ok,
           f"|e_Omega(90)|={e_O:.2e}, |e_R(90)|={e_R:.2e}, re-entry condition {cond}, "
           f"min eig P={min_p:.2e}, {elapsed:.0f} s")
    assert log.t[-1] == 90.0
    assert e_O <= 1e-2 and e_R <= 1e-2
    assert cond
    assert min_p > 0
    assert elapsed < 120.0


# 6 ------------------------------------------------------------------------


def _monitor_excess(log):
    V = log["V"]
    return np.max((log["Vdot"] - log["Vdot_bound"]) / np.maximum(1.0, V))


def test_lyapunov_monitors(adaptive_run, disturbance_run):
    _, log2, _ = adaptive_run
    _, log3 = disturbance_run
    assert log2.summary["steps"] == len(log2) - 1  # every step logged
    assert log3.summary["steps"] == len(log3) - 1
    x2, x3 = _monitor_excess(log2), _monitor_excess(log3)
    ok = x2 <= 1e-6 and x3 <= 1e-6
    report(6, "Lyapunov monitors", ok,
           f"max (Vdot - bound)/max(1,V): adaptive {x2:.2e}, adaptive-robust {x3:.2e}")
    assert x2 <= 1e-6
    assert x3 <= 1e-6


# 7 ------------------------------------------------------------------------


def test_disturbance_rejection(disturbance_run):
    sc, log = disturbance_run
    assert sc.controller == "robust" and sc.robust.delta_R == 0.2 and sc.robust.eta_max == 3e-4
    z = log.z1_norm
    t = log.t
    settled = 45.0  # transients: the e_R dynamics have a time constant near 1/c ~ 33 s
    after = z[t >= settled]
    entered = t[np.argmax(z <= 5e-2)]
    e_A = np.c_[log["eA_x"], log["eA_y"], log["eA_z"]]
    mu = np.c_[log["u_mu_x"], log["u_mu_y"], log["u_mu_z"]]
    D = np.array([sc.disturbance(tt) for tt in t])
    excess = np.max(np.einsum("ni,ni->n", e_A, D + mu) - log["eta"])
    ok = after.max() <= 5e-2 and excess <= 1e-6
    report(7, "disturbance rejection", ok,
           f"|z1| <= 5e-2 from t={entered:.1f} s, max after {settled:.0f} s {after.max():.2e}, "
           f"max e_A.(D+mu)-eta {excess:.2e}")
    assert after.max() <= 5e-2
    assert excess <= 1e-6


# 8 ------------------------------------------------------------------------


def test_jump_bound(adaptive_run):
    sc, log, _ = adaptive_run
    within = [e for e in log.events if e["z1"] <= sc.switch_plan.rho]
    worst = max((e["jump"] / e["jump_bound"] for e in within), default=math.nan)
    ok = len(within) >= 1 and all(e["jump"] <= e["jump_bound"] for e in within)
    report(8, "jump bound", ok,
           f"{len(within)} of {len(log.events)} switches within rho; max jump/bound {worst:.3g}")
    assert len(within) >= 1
    assert all(e["jump"] <= e["jump_bound"] for e in within)


# 9 ------------------------------------------------------------------------


def test_min_jerk():
    rng = np.random.default_rng(9)
    worst_bc = 0.0
    for _ in range(50):
        tau = rng.uniform(0.5, 10.0)
        start = rng.normal(size=3)
        end = rng.normal(size=3)
        c = pl.quintic_coefficients(*start, *end, tau)
        seg = pl.QuinticSegment([c, c, c], tau)
        res = seg.boundary_residuals([[start[0]] * 3, [start[1]] * 3, [start[2]] * 3],
                                     [[end[0]] * 3, [end[1]] * 3, [end[2]] * 3])
        worst_bc = max(worst_bc, float(np.abs(res).max()))
    unit = pl.quintic_coefficients(0, 0, 0, 1, 0, 0, 1.0)
    unit_err = float(np.abs(unit - [0, 0, 0, 10, -15, 6]).max())
    # perturbations t^3 (tau - t)^3 q(t) keep position, velocity and acceleration at both ends
    decreased = 0
    for _ in range(100):
        tau = rng.uniform(0.5, 5.0)
        c = pl.quintic_coefficients(*rng.normal(size=3), *rng.normal(size=3), tau)
        base = pl.polynomial_jerk_integral(c, tau)
        bump = np.polynomial.Polynomial([0, 0, 0, 1]) * np.polynomial.Polynomial([tau, -1]) ** 3
        q = np.polynomial.Polynomial(rng.normal(size=rng.integers(1, 4)))
        p = np.polynomial.Polynomial(c) + rng.normal() * 10 ** rng.uniform(-3, 1) / tau ** 6 * bump * q
        if pl.polynomial_jerk_integral(p.coef, tau) < base * (1 - 1e-12):
            decreased += 1
    ok = worst_bc <= 1e-9 and unit_err <= 1e-12 and decreased == 0
    report(9, "minimum-jerk segment", ok,
           f"max BC residual {worst_bc:.1e}, unit quintic err {unit_err:.1e}, "
           f"{decreased}/100 perturbations lowered the jerk")
    assert worst_bc <= 1e-9
    assert unit_err <= 1e-12
    assert decreased == 0


# 10 -----------------------------------------------------------------------


def test_planned_versus_waypoint_passage():
    mjt = ex.run_config(config.load_bundled("mjt"))
    _track("passage_min_jerk", mjt.log)
    fold = [e for e in mjt.log.events if e["to"] == 2][0]
    rho = mjt.info["rho"]
    mjt_ok = fold["z1"] <= rho and all(c["ok"] for c in mjt.schedule.checks)
    with pytest.raises(SettlingViolation) as info:
        ex.run_config(config.load_bundled("waypoint"))
    exc = info.value
    way = exc.info
    way_ok = way["t_enter"] < way["tau_s"] and exc.z1_norm > fold["z1"]
    report(10, "planned vs waypoint passage", mjt_ok and way_ok,
           f"min-jerk: fold at {fold['t']:.2f} s (tau_s={mjt.info['tau_s']:.2f}, "
           f"tau_d={mjt.info['tau_d']:.2f}) |z1|={fold['z1']:.2e} <= rho={rho}; "
           f"waypoint: arrival {way['t_enter']:.2f} s < tau_s, SettlingViolation |z1|={exc.z1_norm:.2e}")
    assert mjt_ok
    assert way["t_enter"] < way["tau_s"]
    assert exc.z1_norm > fold["z1"]


# 11 -----------------------------------------------------------------------


def test_estimator_calculus():
    rng = np.random.default_rng(11)
    worst_g = worst_h = 0.0
    d_min = math.inf
    for _ in range(100):
        h = random_spd_params(rng)
        step = 1e-6 * np.abs(h).max()
        g = est.psi_gradient(h)
        H = est.psi_hessian(h)
        g_fd = np.zeros(6)
        H_fd = np.zeros((6, 6))
        for k in range(6):
            e = np.zeros(6)
            e[k] = step
            g_fd[k] = (est.psi(h + e) - est.psi(h - e)) / (2 * step)
            H_fd[:, k] = (est.psi_gradient(h + e) - est.psi_gradient(h - e)) / (2 * step)
        worst_g = max(worst_g, np.linalg.norm(g - g_fd) / np.linalg.norm(g))
        worst_h = max(worst_h, np.linalg.norm(H - H_fd) / np.linalg.norm(H))
        h2 = random_spd_params(rng)
        d_min = min(d_min, est.bregman_divergence(h, h2))
        assert est.bregman_divergence(h, h) == 0.0
    ok = worst_g <= 1e-5 and worst_h <= 1e-5 and d_min > 0
    report(11, "estimator calculus", ok,
           f"grad rel err {worst_g:.1e}, hess rel err {worst_h:.1e}, min d(h, h') {d_min:.2e}")
    assert worst_g <= 1e-5
    assert worst_h <= 1e-5
    assert d_min > 0


# 12 -----------------------------------------------------------------------


def _order_scenario(dt):
    return sim.Scenario(
        rb.default_configurations(), GainSet(0.0424, 0.0296, 0.004), "known",
        rb.SwitchingSignal.constant(1),
        attitude_reference=sim.AttitudeReference("sinusoid", amplitude=(1.0, 0.8, 0.9),
                                                 frequency=(0.5, 0.7, 0.3)),
        attitude_error0=(0.6, -0.4, 0.3), Omega0=(0.5, -0.3, 0.2), dt=dt, horizon=1.0,
    )


def _final_state(dt):
    s_ = sim.Simulator(_order_scenario(dt))
    s = s_.initial_state()
    n = int(round(1.0 / dt))
    for k in range(n):
        s = s_.step(s, dt)
        s.t = (k + 1) * dt
    return s


def test_integrator_quality(adaptive_run, disturbance_run):
    ref = _final_state(1 / 2560)
    errs = []
    for n in (20, 40, 80, 160):
        s = _final_state(1 / n)
        errs.append(np.linalg.norm(s.R - ref.R) + np.linalg.norm(s.Omega - ref.Omega))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    order_ok = bool(np.all(np.abs(orders - 4.0) < 0.3))
    worst_ortho = max(ORTHO.values())
    cfg = config.load_bundled("fig3").with_overrides(horizon=1.0)
    a = sim.run(ex.build_scenario(cfg)).to_csv()
    b = sim.run(ex.build_scenario(cfg)).to_csv()
    same = a == b
    ok = order_ok and worst_ortho <= 1e-9 and same
    report(12, "integrator quality", ok,
           f"observed orders {np.round(orders, 3).tolist()}, max |R'R-I| {worst_ortho:.1e} "
           f"over {sorted(ORTHO)}, identical CSV {same}")
    assert order_ok
    assert worst_ortho <= 1e-9
    assert same
