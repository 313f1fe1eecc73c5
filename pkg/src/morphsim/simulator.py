"""Closed-loop simulation of the switched vehicle.

The attitude is advanced with a fourth-order Runge-Kutta-Munthe-Kaas step:
the stage body rates are pulled back to the Lie algebra through a truncated
inverse exponential differential, averaged with the classical RK4 weights and
pushed forward with the exponential map, so ``R`` never leaves SO(3) beyond
round-off.  Angular velocity, position, velocity and the active inertia
estimate use the classical RK4 stages.

Switch instants are always step boundaries: a step that would straddle a
switch is split there.  Only the active configuration's estimate evolves;
the others are held in a bank and resume where they stopped.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import controllers as ctl
from . import estimator as est
from .analysis import SwitchPlan, StabilityCertificate, check_switch_condition, jump_bound
from .errors import EstimatorBoundary, InfeasibleParams, NumericalBlowup
from .rigid_body import GRAVITY, Configuration, DisturbanceModel, SwitchingSignal
from .so3 import (E3, GainSet, _attitude_errors, _diag_of, c_matrix, exp_so3,
                  orthonormality_error, project_to_so3)

CONTROLLERS = ("known", "adaptive", "robust", "robust_baseline")
BLOWUP_RATE = 1e6
REPROJECT_TOL = 1e-9
ESTIMATOR_FLOOR = 1e-12
MAX_HALVINGS = 8

# flag bits of the log
FLAG_SWITCH = 1
FLAG_MONITOR = 2
FLAG_REPROJECT = 4
FLAG_OUTSIDE_L = 8
FLAG_OUTSIDE_CERT = 16
FLAG_SUBSTEP = 32


# --------------------------------------------------------------------------
# references
# --------------------------------------------------------------------------


@dataclass
class AttitudeReference:
    """Desired attitude driven by a prescribed body rate.

    kinds:
      ``hold``: ``Omega_d = 0``
      ``sinusoid``: ``Omega_d,i = a_i sin(w_i t + phase_i)``
      ``chirp``: ``Omega_d,i = a_i sin(phi(t) + phase_i)`` with the
      instantaneous frequency sweeping linearly from ``w0`` to ``w1`` over
      ``sweep_time`` seconds and staying at ``w1`` afterwards.

    ``R_d`` starts at ``R0`` and is integrated alongside the vehicle.
    """

    kind: str = "hold"
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    amplitude: tuple = (0.0, 0.0, 0.0)
    frequency: tuple = (1.0, 1.0, 1.0)
    phase: tuple = (0.0, 0.0, 0.0)
    w0: float = 0.5
    w1: float = 2.0
    sweep_time: float = 60.0

    def __post_init__(self):
        if self.kind not in ("hold", "sinusoid", "chirp"):
            raise ValueError(f"unknown attitude reference kind {self.kind!r}")
        self._a = np.asarray(self.amplitude, dtype=float)
        self._w = np.asarray(self.frequency, dtype=float)
        self._ph = np.asarray(self.phase, dtype=float)
        self.R0 = np.asarray(self.R0, dtype=float)

    def rates(self, t):
        if self.kind == "hold":
            return np.zeros(3), np.zeros(3)
        if self.kind == "sinusoid":
            arg = self._w * t + self._ph
            return self._a * np.sin(arg), self._a * self._w * np.cos(arg)
        T = self.sweep_time
        k = (self.w1 - self.w0) / T
        if t <= T:
            phi, w = self.w0 * t + 0.5 * k * t * t, self.w0 + k * t
        else:
            phi, w = self.w0 * T + 0.5 * k * T * T + self.w1 * (t - T), self.w1
        arg = phi + self._ph
        return self._a * np.sin(arg), self._a * w * np.cos(arg)


@dataclass
class PositionLoop:
    """Outer loop: a position reference plus the PD force law and yaw."""

    reference: object
    yaw: float = 0.0
    k_x: float | None = None
    k_v: float | None = None
    feedforward_rates: bool = True


# --------------------------------------------------------------------------
# scenario and state
# --------------------------------------------------------------------------


@dataclass
class Scenario:
    """Everything a run needs, already validated and built."""

    configurations: list
    gains: GainSet
    controller: str = "adaptive"
    signal: SwitchingSignal | None = None
    mass: float = 1.4
    robust: ctl.RobustParams | None = None
    adaptation_gain: float = 1.0
    disturbance: DisturbanceModel = field(default_factory=DisturbanceModel)
    attitude_reference: AttitudeReference | None = None
    position_loop: PositionLoop | None = None
    R0: np.ndarray | None = None
    attitude_error0: tuple = (0.0, 0.0, 0.0)
    Omega0: tuple = (0.0, 0.0, 0.0)
    pos0: tuple = (0.0, 0.0, 0.0)
    vel0: tuple = (0.0, 0.0, 0.0)
    h_hat0: dict | None = None
    dt: float = 1e-3
    horizon: float = 10.0
    log_every: int = 1
    certificate: StabilityCertificate | None = None
    switch_plan: SwitchPlan | None = None
    monitor_tol: float = 1e-6
    name: str = "scenario"

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")
        if not self.dt > 0 or not self.horizon > 0:
            raise ValueError("dt and horizon must be positive")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if not self.adaptation_gain > 0:
            raise ValueError("adaptation_gain must be positive")
        self.cfg = {c.index: c for c in self.configurations}
        if self.signal is None:
            self.signal = SwitchingSignal.constant(self.configurations[0].index)
        for _, p in self.signal.breakpoints:
            if p not in self.cfg:
                raise ValueError(f"switching signal uses unknown configuration {p}")
        if self.controller in ("robust", "robust_baseline") and self.robust is None:
            self.robust = ctl.RobustParams(delta_R=self.disturbance.delta_R)
        if self.robust is not None and self.robust.delta_R < self.disturbance.delta_R - 1e-15:
            raise ValueError("robust delta_R is below the disturbance bound")
        if (self.attitude_reference is None) == (self.position_loop is None):
            if self.position_loop is None:
                self.attitude_reference = AttitudeReference()
            else:
                raise ValueError("give either an attitude reference or a position loop, not both")

    @property
    def adaptive(self) -> bool:
        return self.controller in ("adaptive", "robust")


@dataclass
class VehicleState:
    t: float
    R: np.ndarray
    Omega: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    estimator: est.EstimatorState
    sigma: int
    R_d: np.ndarray | None = None


# --------------------------------------------------------------------------
# log
# --------------------------------------------------------------------------


def _vec(prefix, names="xyz"):
    return [f"{prefix}_{a}" for a in names]


def _mat(prefix):
    return [f"{prefix}{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]


COLUMNS = (
    ["t"] + _mat("R") + _vec("Omega") + _mat("Rd") + _vec("Omegad")
    + _vec("eR") + _vec("eOmega") + _vec("eA") + ["Phi"]
    + _vec("u") + _vec("u_fb") + _vec("u_ff") + _vec("u_mu")
    + [f"hhat_{n}" for n in ("xx", "yy", "zz", "xy", "xz", "yz")]
    + ["sigma", "V", "Vdot", "Vdot_bound", "eta"]
    + _vec("pos") + _vec("vel") + _vec("posd") + ["thrust", "flags"]
)
_INT_COLUMNS = {"sigma", "flags"}
# shared zero vector for the closed-loop hot path; read-only so that an
# accidental in-place update fails loudly
_ZERO3 = np.zeros(3)
_ZERO3.flags.writeable = False


class SimLog:
    """Sampled run record with fixed columns, switch events and monitor summary."""

    columns = COLUMNS

    def __init__(self, rows, events, summary, dt):
        self.data = np.asarray(rows, dtype=float).reshape(-1, len(COLUMNS))
        self._index = {c: k for k, c in enumerate(COLUMNS)}
        self.events = events
        self.summary = summary
        self.dt = dt

    def __getitem__(self, name) -> np.ndarray:
        return self.data[:, self._index[name]]

    def __len__(self):
        return len(self.data)

    @property
    def t(self):
        return self["t"]

    def block(self, prefix, n=3):
        cols = [c for c in COLUMNS if c.startswith(prefix + "_")][:n] if n == 3 else None
        return self.data[:, [self._index[c] for c in cols]]

    @property
    def e_R(self):
        return self.data[:, [self._index[c] for c in _vec("eR")]]

    @property
    def e_Omega(self):
        return self.data[:, [self._index[c] for c in _vec("eOmega")]]

    @property
    def z1_norm(self):
        return np.sqrt(np.sum(self.e_R ** 2, axis=1) + np.sum(self.e_Omega ** 2, axis=1))

    @property
    def R(self):
        return self.data[:, [self._index[c] for c in _mat("R")]].reshape(-1, 3, 3)

    def z1_at(self, t):
        """``|z1|`` at ``t``, linearly interpolated between samples; ``None`` outside the log."""
        ts = self.t
        if t < ts[0] - 0.5 * self.dt or t > ts[-1] + 0.5 * self.dt:
            return None
        return float(np.interp(t, ts, self.z1_norm))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        ints = [k for k, c in enumerate(COLUMNS) if c in _INT_COLUMNS]
        for row in self.data.tolist():
            out = [repr(x) for x in row]
            for k in ints:
                out[k] = str(int(row[k]))
            w.writerow(out)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text

    def events_document(self) -> dict:
        return {"events": self.events, "summary": self.summary}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.events_document(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as f:
                f.write(text + "\n")
        return text

    @property
    def violations(self) -> list:
        return self.summary.get("violations", [])


# --------------------------------------------------------------------------
# closed loop
# --------------------------------------------------------------------------


@dataclass
class _Eval:
    errors: object
    out: object
    dh: np.ndarray | None
    dOmega: np.ndarray
    dvel: np.ndarray
    R_d: np.ndarray
    Omega_d: np.ndarray
    pos_d: np.ndarray
    thrust: float
    Delta: np.ndarray


class ClosedLoop:
    """Right-hand side of the full closed loop for one scenario."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.G = np.asarray(sc.gains.G, dtype=float)
        self._g = tuple(_diag_of(self.G).tolist())
        ref = sc.attitude_reference
        self._hold = ref is not None and ref.kind == "hold"
        self._no_disturbance = sc.disturbance.kind == "zero"
        self._J = {p: tuple(c.J.ravel().tolist()) for p, c in sc.cfg.items()}
        self._J_inv = {p: tuple(c.J_inv.ravel().tolist()) for p, c in sc.cfg.items()}
        self.g = GRAVITY
        self._w31 = {}
        if sc.certificate is not None and sc.certificate.case == "adaptive":
            self._w31 = {p: s.matrices["W31"] for p, s in sc.certificate.subsystems.items()}
        self._rate_cache = {}

    # attitude reference from the outer loop ------------------------------
    def _ff_rates(self, t):
        hit = self._rate_cache.get(t)
        if hit is None:
            loop = self.sc.position_loop
            ref = loop.reference
            hit = ctl.reference_rates(
                lambda s: ctl.reference_attitude(ref.acceleration(s), loop.yaw, self.sc.mass, self.g), t
            )[1:]
            if len(self._rate_cache) > 16:
                self._rate_cache.clear()
            self._rate_cache[t] = hit
        return hit

    def evaluate(self, t, R, Omega, pos, vel, h_hat, R_d, p) -> _Eval:
        sc = self.sc
        cfg = sc.cfg[p]
        if sc.position_loop is None:
            if self._hold:
                Omega_d = dOmega_d = _ZERO3
            else:
                Omega_d, dOmega_d = sc.attitude_reference.rates(t)
            thrust = 0.0
            pos_d = _ZERO3
        else:
            loop = sc.position_loop
            ref = loop.reference(t)
            pos_d = ref.pos
            cmd = ctl.position_controller(pos, vel, ref.pos, ref.vel, ref.acc, loop.yaw, sc.mass,
                                          loop.k_x, loop.k_v, R=R, g=self.g)
            R_d = cmd.R_d
            thrust = cmd.thrust
            if loop.feedforward_rates and ref.__class__.__name__ != "WaypointReference":
                Omega_d, dOmega_d = self._ff_rates(t)
            else:
                Omega_d = dOmega_d = _ZERO3
        errors = _attitude_errors(*self._g, R, Omega, R_d, Omega_d, dOmega_d, sc.gains.c)
        dh = None
        if sc.controller == "known":
            out = ctl._case1(errors, Omega, errors.alpha_D, cfg.true_inertia, sc.gains, cfg.J)
        elif sc.controller == "adaptive":
            out, dh = ctl._case2(errors, Omega, errors.alpha_D, h_hat, sc.gains, sc.adaptation_gain)
        elif sc.controller == "robust":
            out, dh = ctl._case3(errors, Omega, errors.alpha_D, h_hat, sc.gains, sc.robust,
                                 sc.adaptation_gain, self._w31.get(p))
        else:
            out = ctl._baseline(errors, Omega, errors.alpha_D, cfg.nominal_inertia, sc.gains, sc.robust)
        Delta = _ZERO3 if self._no_disturbance else sc.disturbance(t)
        # J Omega' = (J Omega) x Omega + u + Delta, with scalar 3x3 products
        m00, m01, m02, m10, m11, m12, m20, m21, m22 = self._J[p]
        w0, w1, w2 = Omega.tolist()
        j0 = m00 * w0 + m01 * w1 + m02 * w2
        j1 = m10 * w0 + m11 * w1 + m12 * w2
        j2 = m20 * w0 + m21 * w1 + m22 * w2
        f = out.u if self._no_disturbance else out.u + Delta
        f0, f1, f2 = f.tolist()
        f0 += j1 * w2 - j2 * w1
        f1 += j2 * w0 - j0 * w2
        f2 += j0 * w1 - j1 * w0
        n00, n01, n02, n10, n11, n12, n20, n21, n22 = self._J_inv[p]
        dOmega = np.array([n00 * f0 + n01 * f1 + n02 * f2,
                           n10 * f0 + n11 * f1 + n12 * f2,
                           n20 * f0 + n21 * f1 + n22 * f2])
        if sc.position_loop is None:
            dvel = _ZERO3
        else:
            dvel = (thrust / sc.mass) * R[:, 2] - self.g * E3
        return _Eval(errors, out, dh, dOmega, dvel, R_d, Omega_d, pos_d, thrust, Delta)

    # Lyapunov function ---------------------------------------------------
    def lyapunov(self, ev: _Eval, p, h_hat) -> float:
        sc = self.sc
        J = sc.cfg[p].J
        e = ev.errors
        V = 0.5 * e.e_Omega @ J @ e.e_Omega + sc.gains.k_R * e.phi
        if sc.controller == "known" or sc.controller == "robust_baseline":
            return float(V + sc.gains.c * e.e_R @ e.e_Omega)
        V += sc.gains.c * e.e_R @ J @ e.e_Omega
        return float(V + est.bregman_divergence(sc.cfg[p].true_inertia, h_hat) / sc.adaptation_gain)

    def lyapunov_rate(self, ev: _Eval, R, p, h_hat):
        """``(dV/dt, bound)`` along the actual closed-loop vector field."""
        sc = self.sc
        cfg = sc.cfg[p]
        J = cfg.J
        e = ev.errors
        c = sc.gains.c
        de_Omega = ev.dOmega - e.alpha_D
        de_R = c_matrix(ev.R_d, R, self.G) @ e.e_Omega
        z1 = e.z1
        if sc.controller in ("known", "robust_baseline"):
            Vd = (e.e_Omega @ J @ de_Omega + sc.gains.k_R * e.e_R @ e.e_Omega
                  + c * de_R @ e.e_Omega + c * e.e_R @ de_Omega)
            if sc.controller == "robust_baseline" or sc.certificate is None \
                    or sc.certificate.case != "known":
                return float(Vd), math.nan
            W3 = sc.certificate.subsystems[p].matrices["W3"]
            return float(Vd), float(-z1 @ W3 @ z1)
        Vd = (e.e_Omega @ J @ de_Omega + sc.gains.k_R * e.e_R @ e.e_Omega
              + c * de_R @ J @ e.e_Omega + c * e.e_R @ J @ de_Omega)
        H = est.psi_hessian(h_hat)
        Vd += (h_hat - cfg.true_inertia) @ H @ ev.dh / sc.adaptation_gain
        W31 = self._w31.get(p)
        if W31 is None:
            return float(Vd), math.nan
        bound = -z1 @ W31 @ z1
        if sc.controller == "robust":
            bound += ev.out.eta
        return float(Vd), float(bound)


def _rk4_increment(dt, k1, k2, k3, k4):
    """``dt/6 (k1 + 2 k2 + 2 k3 + k4)`` for 3-vectors."""
    h = dt / 6.0
    return np.array([h * (a + 2.0 * b + 2.0 * c + d)
                     for a, b, c, d in zip(k1.tolist(), k2.tolist(), k3.tolist(), k4.tolist())])


def _dexpinv(th, w):
    # scalar form of so3.dexpinv; this sits in the innermost loop
    t0, t1, t2 = th.tolist()
    w0, w1, w2 = w.tolist()
    c0, c1, c2 = t1 * w2 - t2 * w1, t2 * w0 - t0 * w2, t0 * w1 - t1 * w0
    return np.array([w0 + 0.5 * c0 + (t1 * c2 - t2 * c1) / 12.0,
                     w1 + 0.5 * c1 + (t2 * c0 - t0 * c2) / 12.0,
                     w2 + 0.5 * c2 + (t0 * c1 - t1 * c0) / 12.0])


class Simulator:
    """Stepper and run driver for one :class:`Scenario`."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.loop = ClosedLoop(scenario)
        self.reprojections = 0
        self.substeps = 0
        self.max_ortho = 0.0
        self._ev_cache = None

    def evaluate_state(self, s: VehicleState):
        """Closed-loop quantities at ``s``; reused as the first stage of the next step."""
        ev = self.loop.evaluate(s.t, s.R, s.Omega, s.pos, s.vel, s.estimator[s.sigma], s.R_d, s.sigma)
        self._ev_cache = (s, ev)
        return ev

    # initial state -------------------------------------------------------
    def initial_state(self) -> VehicleState:
        sc = self.sc
        p0 = sc.signal(0.0)
        bank = sc.h_hat0 or {c.index: c.nominal_inertia for c in sc.configurations}
        estim = est.EstimatorState(bank)
        pos0 = np.asarray(sc.pos0, dtype=float)
        vel0 = np.asarray(sc.vel0, dtype=float)
        R_d = None
        if sc.position_loop is None:
            R_d = sc.attitude_reference.R0.copy()
            Rd0 = R_d
        else:
            loop = sc.position_loop
            ref = loop.reference(0.0)
            Rd0 = ctl.position_controller(pos0, vel0, ref.pos, ref.vel, ref.acc, loop.yaw, sc.mass,
                                          loop.k_x, loop.k_v).R_d
        if sc.R0 is not None:
            R0 = np.asarray(sc.R0, dtype=float)
        else:
            R0 = Rd0 @ exp_so3(np.asarray(sc.attitude_error0, dtype=float))
        return VehicleState(0.0, R0, np.asarray(sc.Omega0, dtype=float).copy(), pos0.copy(),
                            vel0.copy(), estim, p0, R_d)

    # one step ------------------------------------------------------------
    def _rk_step(self, s: VehicleState, dt):
        ev = self.loop.evaluate
        p = s.sigma
        adaptive = self.sc.adaptive
        pos_mode = self.sc.position_loop is not None
        # a held reference attitude never moves
        fixed_ref = pos_mode or self.sc.attitude_reference.kind == "hold"
        h0 = s.estimator[p]
        t0 = s.t
        R0, W0, x0, v0, Rd0 = s.R, s.Omega, s.pos, s.vel, s.R_d

        def stage(t, th, W, x, v, h, thd):
            R = R0 @ exp_so3(th) if th is not None else R0
            if pos_mode:
                Rd = None
            elif fixed_ref or thd is None:
                Rd = Rd0
            else:
                Rd = Rd0 @ exp_so3(thd)
            return ev(t, R, W, x, v, h, Rd, p)

        half = 0.5 * dt
        cached = self._ev_cache
        if cached is not None and cached[0] is s:
            e1 = cached[1]
        else:
            e1 = stage(t0, None, W0, x0, v0, h0, None)
        # the translational and reference-attitude stages are only formed
        # when the scenario uses them
        x2 = x3 = x4 = x0
        v2 = v3 = v4 = v0
        thd = None
        kR1 = W0
        kd1 = e1.Omega_d
        th = half * kR1
        if not fixed_ref:
            thd = half * kd1
        W2 = W0 + half * e1.dOmega
        if pos_mode:
            x2 = x0 + half * v0
            v2 = v0 + half * e1.dvel
        h2 = h0 + half * e1.dh if adaptive else h0
        e2 = stage(t0 + half, th, W2, x2, v2, h2, thd)
        kR2 = _dexpinv(th, W2)
        if not fixed_ref:
            kd2 = _dexpinv(thd, e2.Omega_d)
            thd = half * kd2
        th = half * kR2
        W3 = W0 + half * e2.dOmega
        if pos_mode:
            x3 = x0 + half * v2
            v3 = v0 + half * e2.dvel
        h3 = h0 + half * e2.dh if adaptive else h0
        e3 = stage(t0 + half, th, W3, x3, v3, h3, thd)
        kR3 = _dexpinv(th, W3)
        if not fixed_ref:
            kd3 = _dexpinv(thd, e3.Omega_d)
            thd = dt * kd3
        th = dt * kR3
        W4 = W0 + dt * e3.dOmega
        if pos_mode:
            x4 = x0 + dt * v3
            v4 = v0 + dt * e3.dvel
        h4 = h0 + dt * e3.dh if adaptive else h0
        e4 = stage(t0 + dt, th, W4, x4, v4, h4, thd)
        kR4 = _dexpinv(th, W4)

        R = R0 @ exp_so3(_rk4_increment(dt, kR1, kR2, kR3, kR4))
        if pos_mode:
            Rd = None
        elif fixed_ref:
            Rd = Rd0
        else:
            kd4 = _dexpinv(thd, e4.Omega_d)
            Rd = Rd0 @ exp_so3(_rk4_increment(dt, kd1, kd2, kd3, kd4))
        W = W0 + _rk4_increment(dt, e1.dOmega, e2.dOmega, e3.dOmega, e4.dOmega)
        if pos_mode:
            x = x0 + (dt / 6.0) * (v0 + 2 * v2 + 2 * v3 + v4)
            v = v0 + (dt / 6.0) * (e1.dvel + 2 * e2.dvel + 2 * e3.dvel + e4.dvel)
        else:
            x, v = x0, v0
        estim = s.estimator
        if adaptive:
            h = h0 + (dt / 6.0) * (e1.dh + 2 * e2.dh + 2 * e3.dh + e4.dh)
            if est.min_consistency_eig(h) < ESTIMATOR_FLOOR:
                raise InfeasibleParams("estimate left the physically consistent set")
            estim = estim.replace(p, h)
        return VehicleState(t0 + dt, R, W, x, v, estim, p, Rd)

    def step(self, s: VehicleState, dt, depth=0) -> VehicleState:
        """Advance by ``dt``; halves the step when the estimate would become infeasible."""
        try:
            new = self._rk_step(s, dt)
        except InfeasibleParams:
            if depth >= MAX_HALVINGS:
                raise EstimatorBoundary(
                    f"inertia estimate reached the feasibility boundary at t={s.t:.6g}"
                ) from None
            self.substeps += 1
            mid = self.step(s, 0.5 * dt, depth + 1)
            return self.step(mid, 0.5 * dt, depth + 1)
        w0, w1, w2 = new.Omega.tolist()
        # the negated comparison also catches NaN
        if not (w0 * w0 + w1 * w1 + w2 * w2 <= BLOWUP_RATE * BLOWUP_RATE):
            raise NumericalBlowup(f"|Omega| exceeded {BLOWUP_RATE:g} rad/s at t={new.t:.6g}")
        err = orthonormality_error(new.R)
        if err > REPROJECT_TOL:
            new.R = project_to_so3(new.R)
            self.reprojections += 1
            err = orthonormality_error(new.R)
        if err > self.max_ortho:
            self.max_ortho = err
        if new.R_d is not None and new.R_d is not s.R_d \
                and orthonormality_error(new.R_d) > REPROJECT_TOL:
            new.R_d = project_to_so3(new.R_d)
        return new


def step(state: VehicleState, scenario: Scenario, dt) -> VehicleState:
    """One closed-loop step of ``scenario`` from ``state`` (pure: returns a new state)."""
    return Simulator(scenario).step(state, dt)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def _row(sim: Simulator, s: VehicleState, ev: _Eval, V, Vd, Vb, flags):
    out = ev.out
    e = ev.errors
    h = s.estimator[s.sigma]
    Rd = ev.R_d if s.R_d is None else s.R_d
    return np.concatenate((
        [s.t], s.R.ravel(), s.Omega, Rd.ravel(), ev.Omega_d, e.e_R, e.e_Omega, e.e_A, [e.phi],
        out.u, out.feedback, out.feedforward, out.robust, h,
        [s.sigma, V, Vd, Vb, out.eta], s.pos, s.vel, ev.pos_d, [ev.thrust, flags],
    ))


def _z2(sc, p, h):
    return est.bregman_divergence(sc.cfg[p].true_inertia, h) / sc.adaptation_gain


def run(scenario) -> SimLog:
    """Integrate ``scenario`` over its horizon and return the log.

    ``scenario`` may be a :class:`Scenario` or anything with a ``build()``
    method returning one (a parsed configuration).
    """
    if not isinstance(scenario, Scenario):
        scenario = scenario.build()
    sc = scenario
    sim = Simulator(sc)
    loop = sim.loop
    dt = sc.dt
    n = int(round(sc.horizon / dt))
    switch_times = [t for t in sc.signal.switch_times() if 0 < t <= n * dt + 1e-9 * dt]
    cert_level = sc.certificate.phi_level if sc.certificate is not None else math.nan
    plan = sc.switch_plan
    z2_caps = {}
    if plan is not None and sc.adaptive:
        z2_caps = dict(plan.z2_bound)
    explicit_caps = bool(z2_caps)
    s = sim.initial_state()
    for p in sc.cfg:
        if sc.adaptive and p not in z2_caps:
            z2_caps[p] = _z2(sc, p, s.estimator[p])
    if plan is not None:
        plan = SwitchPlan(plan.tau_s, plan.rho, z2_caps)

    rows, events, violations = [], [], []
    entries = {s.sigma: (0.0, None)}  # index -> (time, |z1|) at its latest entry
    worst = {"monitor_excess": -math.inf, "min_P_eig": math.inf, "max_phi": 0.0}

    def record(s, flags):
        ev = sim.evaluate_state(s)
        V = loop.lyapunov(ev, s.sigma, s.estimator[s.sigma])
        Vd, Vb = loop.lyapunov_rate(ev, s.R, s.sigma, s.estimator[s.sigma])
        if not math.isnan(Vb):
            excess = Vd - Vb
            worst["monitor_excess"] = max(worst["monitor_excess"], excess / max(1.0, V))
            if excess > sc.monitor_tol * max(1.0, V):
                flags |= FLAG_MONITOR
                if len(violations) < 50:
                    violations.append({"t": s.t, "kind": "lyapunov_rate", "Vdot": Vd, "bound": Vb})
        if ev.errors.phi >= ctl.SUBLEVEL:
            flags |= FLAG_OUTSIDE_L
        if ev.errors.phi >= cert_level:
            flags |= FLAG_OUTSIDE_CERT
        worst["max_phi"] = max(worst["max_phi"], ev.errors.phi)
        if sc.adaptive:
            worst["min_P_eig"] = min(worst["min_P_eig"], est.min_consistency_eig(s.estimator[s.sigma]))
        return ev, V, _row(sim, s, ev, V, Vd, Vb, flags)

    def switch_event(s, new_p):
        """Evaluate both Lyapunov functions at a switch and the re-entry test."""
        old_p = s.sigma
        ev_i = loop.evaluate(s.t, s.R, s.Omega, s.pos, s.vel, s.estimator[old_p], s.R_d, old_p)
        ev_j = loop.evaluate(s.t, s.R, s.Omega, s.pos, s.vel, s.estimator[new_p], s.R_d, new_p)
        V_i = loop.lyapunov(ev_i, old_p, s.estimator[old_p])
        V_j = loop.lyapunov(ev_j, new_p, s.estimator[new_p])
        z1 = float(np.linalg.norm(ev_i.errors.z1))
        evt = {"t": s.t, "from": old_p, "to": new_p, "z1": z1, "V_out": V_i, "V_in": V_j,
               "jump": abs(V_i - V_j), "phi": ev_i.errors.phi}
        prev = entries.get(new_p)
        cert = sc.certificate
        if prev is not None and cert is not None and cert.case == "adaptive":
            ok = check_switch_condition(prev[1], z1, cert, new_p)
            evt.update({"reentry": True, "z1_prev_entry": prev[1], "t_prev_entry": prev[0],
                        "switch_ratio": cert.subsystems[new_p].switch_ratio, "condition_ok": ok})
            if not ok:
                violations.append({"t": s.t, "kind": "switch_condition", "index": new_p})
        else:
            evt["reentry"] = prev is not None
        if prev is not None:
            evt["t_prev_entry"] = prev[0]
        if cert is not None and cert.case == "adaptive" and plan is not None:
            b = jump_bound(cert, plan, old_p, new_p)
            evt.update({"rho": plan.rho, "within_rho": z1 <= plan.rho, "jump_bound": b,
                        "z2": {str(old_p): _z2(sc, old_p, s.estimator[old_p]),
                               str(new_p): _z2(sc, new_p, s.estimator[new_p])},
                        "jump_ok": (z1 > plan.rho) or abs(V_i - V_j) <= b})
            if not evt["jump_ok"]:
                violations.append({"t": s.t, "kind": "jump_bound", "jump": abs(V_i - V_j), "bound": b})
            evt["z2_ok"] = all(evt["z2"][str(q)] <= z2_caps[q] * (1 + 1e-9) + 1e-15
                               for q in (old_p, new_p))
            # caps defaulted from the initial estimates are informational only
            if explicit_caps and not evt["z2_ok"]:
                violations.append({"t": s.t, "kind": "z2_cap", "from": old_p, "to": new_p})
        if sc.certificate is not None and sc.certificate.tau_d and prev is not None:
            evt["residence_ok"] = s.t - prev[0] >= sc.certificate.tau_d
        events.append(evt)
        entries[new_p] = (s.t, z1)

    def apply_switches(s):
        nonlocal sw
        flag = 0
        while sw < len(switch_times) and switch_times[sw] <= s.t + 1e-9 * dt:
            new_p = sc.signal(switch_times[sw])
            if new_p != s.sigma:
                switch_event(s, new_p)
                s = replace(s, sigma=new_p)
                flag = FLAG_SWITCH
            sw += 1
        return s, flag

    # |z1| at the first entry (t = 0)
    ev0 = loop.evaluate(s.t, s.R, s.Omega, s.pos, s.vel, s.estimator[s.sigma], s.R_d, s.sigma)
    entries[s.sigma] = (0.0, float(np.linalg.norm(ev0.errors.z1)))

    sw = 0
    rows.append(record(s, 0)[2])
    pending = 0
    for k in range(n):
        t_next = (k + 1) * dt
        counts = (sim.reprojections, sim.substeps)
        # split the step at switch instants strictly inside it
        while sw < len(switch_times) and switch_times[sw] < t_next - 1e-9 * dt:
            ts = switch_times[sw]
            if ts > s.t:
                s = sim.step(s, ts - s.t)
                s.t = ts
            s, f = apply_switches(s)
            pending |= f
        s = sim.step(s, t_next - s.t)
        s.t = t_next
        s, f = apply_switches(s)
        pending |= f
        if sim.reprojections != counts[0]:
            pending |= FLAG_REPROJECT
        if sim.substeps != counts[1]:
            pending |= FLAG_SUBSTEP
        if (k + 1) % sc.log_every == 0 or k + 1 == n:
            rows.append(record(s, pending)[2])
            pending = 0

    summary = {
        "name": sc.name,
        "controller": sc.controller,
        "steps": n,
        "dt": dt,
        "reprojections": sim.reprojections,
        "estimator_substeps": sim.substeps,
        "max_orthonormality_error": sim.max_ortho,
        "max_phi": worst["max_phi"],
        "min_P_eig": worst["min_P_eig"] if sc.adaptive else None,
        "max_monitor_excess": worst["monitor_excess"] if worst["monitor_excess"] > -math.inf else None,
        "violations": violations,
    }
    return SimLog(rows, events, summary, dt * sc.log_every)

