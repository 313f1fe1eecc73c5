"""Minimum-jerk references, the waypoint baseline and switch scheduling.

A passage is flown by planning a quintic from rest at the origin to the
passage entrance ``r_des`` with exit velocity ``v_des``.  The planner is
"control-aware": the segment duration may not undercut the attitude
settling time or the dwell time, so the configuration switch at the entrance
happens once the attitude errors have settled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .analysis import StabilityCertificate, SwitchPlan, check_switch_condition
from .errors import DurationTooShort, DwellViolation, SettlingViolation
from .rigid_body import SwitchingSignal

DEFAULT_TAU_FACTOR = 1.02


@dataclass(frozen=True)
class PlannerRequest:
    r_des: tuple
    v_des: tuple = (0.0, 0.0, 0.0)
    tau_s: float = 0.0
    tau_d: float = 0.0

    def __post_init__(self):
        for name in ("r_des", "v_des"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3:
                raise ValueError(f"{name} needs three components")
            object.__setattr__(self, name, v)
        if self.tau_s < 0 or self.tau_d < 0:
            raise ValueError("tau_s and tau_d must be non-negative")

    @property
    def min_duration(self) -> float:
        return max(self.tau_s, self.tau_d)

    def default_duration(self) -> float:
        return DEFAULT_TAU_FACTOR * self.min_duration


def quintic_coefficients(p0, v0, a0, p1, v1, a1, tau) -> np.ndarray:
    """Ascending-power coefficients of the quintic meeting both endpoint states.

    Solves the 6x6 boundary-value system; the result is the unique
    minimum-jerk polynomial for these conditions.
    """
    T = float(tau)
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, T, T**2, T**3, T**4, T**5],
        [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
        [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
    ], dtype=float)
    b = np.array([p0, v0, a0, p1, v1, a1], dtype=float)
    return np.linalg.solve(A, b)


class QuinticSegment:
    """Per-axis quintic on ``[0, tau]``.

    ``coeffs`` has shape (3, 6), ascending powers of ``t``.
    """

    def __init__(self, coeffs, tau):
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(3, 6)
        self.tau = float(tau)
        if not self.tau > 0:
            raise ValueError("segment duration must be positive")
        # coefficients of each derivative, shifted to ascending powers of t
        self._dcoeffs = []
        for order in range(6):
            d = np.zeros((3, 6))
            for k in range(order, 6):
                d[:, k - order] = math.perm(k, order) * self.coeffs[:, k]
            self._dcoeffs.append(d)

    def derivative(self, t, order=0) -> np.ndarray:
        """``order``-th time derivative of the position at ``t`` (per axis)."""
        if order > 5:
            return np.zeros(3)
        t = float(t)
        return self._dcoeffs[order] @ np.array([1.0, t, t * t, t ** 3, t ** 4, t ** 5])

    def position(self, t):
        return self.derivative(t, 0)

    def velocity(self, t):
        return self.derivative(t, 1)

    def acceleration(self, t):
        return self.derivative(t, 2)

    def jerk(self, t):
        return self.derivative(t, 3)

    def jerk_integral(self) -> np.ndarray:
        """``int_0^tau jerk(t)^2 dt`` per axis, exact."""
        return np.array([_jerk_integral(c, self.tau) for c in self.coeffs])

    def boundary_residuals(self, start, end) -> np.ndarray:
        """Residuals of ``(p, v, a)`` at both ends against ``start``/``end`` triples."""
        res = []
        for t, target in ((0.0, start), (self.tau, end)):
            for order in range(3):
                res.append(self.derivative(t, order) - np.asarray(target[order], dtype=float))
        return np.array(res)

    def sample(self, n=200) -> np.ndarray:
        """Rows ``t, x, y, z, vx, vy, vz, ax, ay, az`` on a uniform grid."""
        ts = np.linspace(0.0, self.tau, n)
        return np.array([np.concatenate(([t], self.position(t), self.velocity(t),
                                         self.acceleration(t))) for t in ts])


def _jerk_integral(c, tau) -> float:
    # jerk = 6 c3 + 24 c4 t + 60 c5 t^2; square and integrate term by term
    j = np.polynomial.Polynomial([6 * c[3], 24 * c[4], 60 * c[5]])
    return float((j * j).integ()(tau))


def polynomial_jerk_integral(coeffs, tau) -> float:
    """``int_0^tau (p''')^2`` for an arbitrary ascending-coefficient polynomial."""
    p = np.polynomial.Polynomial(coeffs)
    j = p.deriv(3)
    return float((j * j).integ()(tau))


def min_jerk(req: PlannerRequest, tau=None) -> QuinticSegment:
    """Rest-to-``(r_des, v_des)`` minimum-jerk segment.

    ``tau`` defaults to ``1.02 * max(tau_s, tau_d)``.

    Raises
    ------
    DurationTooShort
        ``tau`` is below ``max(tau_s, tau_d)``: the switch at the passage
        entrance would happen before the attitude has settled or before the
        dwell time has elapsed.
    """
    if tau is None:
        tau = req.default_duration()
    tau = float(tau)
    if tau < req.min_duration:
        raise DurationTooShort(
            f"duration {tau:.4g} s is below max(tau_s, tau_d) = {req.min_duration:.4g} s"
        )
    if not tau > 0:
        raise DurationTooShort("duration must be positive")
    coeffs = [quintic_coefficients(0.0, 0.0, 0.0, req.r_des[k], req.v_des[k], 0.0, tau)
              for k in range(3)]
    return QuinticSegment(coeffs, tau)


class Reference(NamedTuple):
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray


class MinJerkReference:
    """Position reference following a segment, then cruising at its exit velocity."""

    kind = "min_jerk"

    def __init__(self, segment: QuinticSegment):
        self.segment = segment
        self._p_end = segment.position(segment.tau)
        self._v_end = segment.velocity(segment.tau)

    @property
    def arrival_time(self) -> float:
        return self.segment.tau

    def __call__(self, t) -> Reference:
        seg = self.segment
        if t <= 0.0:
            z = np.zeros(3)
            return Reference(seg.position(0.0), z, z.copy())
        if t >= seg.tau:
            return Reference(self._p_end + self._v_end * (t - seg.tau), self._v_end.copy(),
                             np.zeros(3))
        return Reference(seg.position(t), seg.velocity(t), seg.acceleration(t))

    def acceleration(self, t) -> np.ndarray:
        return self(t).acc

    def describe(self) -> dict:
        return {"kind": self.kind, "tau": self.segment.tau,
                "coefficients": self.segment.coeffs.tolist()}


class WaypointReference:
    """Step position command: ``r_des`` from ``t = 0`` with no feedforward."""

    kind = "waypoint"

    def __init__(self, r_des):
        self.r_des = np.asarray(r_des, dtype=float).copy()

    def __call__(self, t) -> Reference:
        return Reference(self.r_des.copy(), np.zeros(3), np.zeros(3))

    def acceleration(self, t) -> np.ndarray:
        return np.zeros(3)

    def describe(self) -> dict:
        return {"kind": self.kind, "r_des": self.r_des.tolist(),
                "vel": [0.0, 0.0, 0.0], "acc": [0.0, 0.0, 0.0]}


def waypoint_reference(r_des) -> WaypointReference:
    return WaypointReference(r_des)


@dataclass(frozen=True)
class Passage:
    """A narrow passage on the reference timeline.

    Between ``t_enter`` and ``t_exit`` the vehicle must be in configuration
    ``inside``; ``outside`` is the configuration before and after.
    """

    t_enter: float
    t_exit: float
    inside: int = 2
    outside: int = 1

    def __post_init__(self):
        if not self.t_exit >= self.t_enter >= 0:
            raise ValueError("need 0 <= t_enter <= t_exit")
        if self.inside == self.outside:
            raise ValueError("inside and outside configurations must differ")


@dataclass
class ScheduleResult:
    signal: SwitchingSignal
    checks: list = field(default_factory=list)


def schedule_switch(plan: SwitchPlan, cert: StabilityCertificate, passage: Passage,
                    z1_norm: Callable[[float], float | None], tau_d=None,
                    t_prev=0.0) -> ScheduleResult:
    """Fold at the passage entrance and unfold after it, respecting the dwell time.

    ``z1_norm(t)`` returns ``|z1|`` at time ``t`` from a simulation log, or
    ``None`` when ``t`` is not covered.  Before the fold the closed loop does
    not depend on the schedule, so a log of the unswitched run is exact
    feedback up to ``t_enter``.  ``t_prev`` is the last entry into the
    outside configuration (the start of the run by default).

    The unfold happens at ``t_exit`` or, if the passage is shorter than the
    dwell time, at ``t_enter + tau_d``.

    Raises
    ------
    SettlingViolation
        ``|z1(t_enter)| > rho`` (checked first).
    DwellViolation
        The fold would come less than ``tau_d`` after ``t_prev``.
    """
    if tau_d is None:
        tau_d = cert.tau_d or 0.0
    t_in, t_out = passage.t_enter, passage.t_exit
    checks = []
    z_in = z1_norm(t_in)
    if z_in is None:
        raise ValueError(f"no attitude-error feedback at t={t_in}")
    checks.append({"t": t_in, "kind": "settling", "z1": float(z_in), "rho": plan.rho,
                   "ok": bool(z_in <= plan.rho)})
    if z_in > plan.rho:
        raise SettlingViolation(
            f"|z1|={z_in:.4g} exceeds rho={plan.rho:.4g} at the fold t={t_in:.4g} s",
            t=t_in, z1_norm=float(z_in), rho=plan.rho,
        )
    if t_in - t_prev < tau_d:
        raise DwellViolation(
            f"fold at t={t_in:.4g} s comes {t_in - t_prev:.4g} s after the previous entry, "
            f"below the dwell time {tau_d:.4g} s"
        )
    t_unfold = max(t_out, t_in + tau_d)
    signal = SwitchingSignal([(0.0, passage.outside), (t_in, passage.inside),
                              (t_unfold, passage.outside)])
    z_prev, z_back = z1_norm(t_prev), z1_norm(t_unfold)
    if z_prev is not None and z_back is not None and cert.subsystems[passage.outside].switch_ratio is not None:
        checks.append({"t": t_unfold, "kind": "reentry", "index": passage.outside,
                       "z1_prev": float(z_prev), "z1": float(z_back),
                       "ok": check_switch_condition(z_prev, z_back, cert, passage.outside)})
    return ScheduleResult(signal, checks)
