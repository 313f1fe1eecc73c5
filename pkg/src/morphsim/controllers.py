"""Attitude control laws for the folding quadrotor and the outer position loop.

Three attitude laws share the feedback ``-k_R e_R - k_Omega e_Omega`` and the
regressor feedforward ``-Y h`` with ``Y = Y1(Omega) - Y2(alpha_D)``:

* known model:        ``h`` is the true inertia
* adaptive:           ``h`` is the running estimate, updated along ``e_A``
* robust-adaptive:    adaptive plus a bounded disturbance-rejection term ``mu``

A conventional robust baseline (fixed nominal inertia plus ``mu``) is kept
for comparisons.  None of the functions mutate state: the adaptive laws
return the estimate's time derivative for the caller to integrate.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import estimator
from .errors import DegenerateThrust, OutsideSublevelSet
from .rigid_body import GRAVITY, regressor_y1, regressor_y2
from .so3 import E3, AttitudeErrors, GainSet

SUBLEVEL = 2.0
_ZERO3 = np.zeros(3)
_ZERO3.flags.writeable = False


@dataclass(frozen=True)
class RobustParams:
    """Settings of the disturbance-rejection term.

    ``sign`` picks the boundary-term sign: ``"minus"`` gives
    ``-(delta_R - eta/|e_A|) e_A/|e_A|`` and ``"plus"`` gives
    ``-(delta_R + eta/|e_A|) e_A/|e_A|``.  ``law="sign"`` switches to the
    discontinuous ``-(delta_R + nu) sign(e_A)``.
    """

    delta_R: float = 0.0
    eta: float = 3e-4
    eta_policy: str = "fixed"
    gamma: float = 0.5
    eta_max: float = 3e-4
    epsilon_smooth: float = 1e-6
    sign: str = "minus"
    law: str = "smooth"
    nu: float = 1e-3

    def __post_init__(self):
        if self.delta_R < 0:
            raise ValueError("delta_R must be non-negative")
        if self.eta <= 0 or self.epsilon_smooth <= 0:
            raise ValueError("eta and epsilon_smooth must be positive")
        if self.eta_policy not in ("fixed", "adaptive"):
            raise ValueError(f"unknown eta_policy {self.eta_policy!r}")
        if self.eta_policy == "adaptive" and not 0 < self.gamma < 1:
            raise ValueError("adaptive eta needs gamma in (0, 1)")
        if self.sign not in ("minus", "plus"):
            raise ValueError(f"unknown sign {self.sign!r}")
        if self.law not in ("smooth", "sign"):
            raise ValueError(f"unknown law {self.law!r}")


@dataclass(frozen=True)
class ControlOutput:
    u: np.ndarray
    feedback: np.ndarray
    feedforward: np.ndarray
    robust: np.ndarray
    eta: float = 0.0


def _check_sublevel(errors):
    if errors.phi >= SUBLEVEL:
        warnings.warn(
            f"attitude error Phi={errors.phi:.3f} outside the sublevel set Phi < 2",
            OutsideSublevelSet,
            stacklevel=3,
        )


def regressor(Omega, alpha_D) -> np.ndarray:
    """``Y = Y1(Omega) - Y2(alpha_D)``."""
    return regressor_y1(Omega) - regressor_y2(alpha_D)


def _assemble(feedback, feedforward, robust, eta=0.0):
    return ControlOutput(feedback + feedforward + robust, feedback, feedforward, robust, eta)


def feedback_term(errors: AttitudeErrors, gains: GainSet):
    return -gains.k_R * errors.e_R - gains.k_Omega * errors.e_Omega


def control_case1(errors, Omega, alpha_D, h_true, gains) -> ControlOutput:
    """Known-model law ``u = -k_R e_R - k_Omega e_Omega - Y h``."""
    _check_sublevel(errors)
    return _case1(errors, Omega, alpha_D, h_true, gains)


def _case1(errors, Omega, alpha_D, h_true, gains, J=None):
    if J is None:
        ff = -regressor(Omega, alpha_D) @ h_true
    else:
        # -Y h = J alpha_D - (J Omega) x Omega, without forming Y
        # scalar 3x3 products: numpy call overhead dominates at this size
        m00, m01, m02, m10, m11, m12, m20, m21, m22 = J.ravel().tolist()
        w0, w1, w2 = Omega.tolist()
        a0, a1, a2 = alpha_D.tolist()
        j0 = m00 * w0 + m01 * w1 + m02 * w2
        j1 = m10 * w0 + m11 * w1 + m12 * w2
        j2 = m20 * w0 + m21 * w1 + m22 * w2
        ff = np.array([m00 * a0 + m01 * a1 + m02 * a2 - (j1 * w2 - j2 * w1),
                       m10 * a0 + m11 * a1 + m12 * a2 - (j2 * w0 - j0 * w2),
                       m20 * a0 + m21 * a1 + m22 * a2 - (j0 * w1 - j1 * w0)])
    fb = feedback_term(errors, gains)
    return ControlOutput(fb + ff, fb, ff, _ZERO3)


def control_case2(errors, Omega, alpha_D, h_hat, gains, adaptation_gain=1.0):
    """Adaptive law.  Returns ``(ControlOutput, dh_hat/dt)``.

    With ``u`` carrying ``-Y h_hat`` the closed loop reads
    ``J de_Omega = -k_R e_R - k_Omega e_Omega - Y (h_hat - h)``, so the
    regressor that multiplies the estimation error is ``-Y``; that is the
    one handed to the natural-gradient update.
    """
    _check_sublevel(errors)
    return _case2(errors, Omega, alpha_D, h_hat, gains, adaptation_gain)


def _case2(errors, Omega, alpha_D, h_hat, gains, adaptation_gain=1.0):
    Y = regressor(Omega, alpha_D)
    out = _assemble(feedback_term(errors, gains), -Y @ h_hat, np.zeros(3))
    dh = estimator.update_rate(h_hat, -Y, errors.e_A, adaptation_gain)
    return out, dh


def effective_eta(params: RobustParams, w31_quadratic=None) -> float:
    """Boundary value in use: fixed, or ``min(eta_max, gamma * z1' W31 z1)``."""
    if params.eta_policy == "fixed" or w31_quadratic is None:
        return params.eta
    return min(params.eta_max, params.gamma * max(w31_quadratic, 0.0))


def robust_term(e_A, params: RobustParams, w31_quadratic=None) -> np.ndarray:
    """Disturbance-rejection term ``mu``.

    ``|e_A|`` is regularised as ``sqrt(|e_A|^2 + eps^2)``; with that the
    bound ``e_A . (Delta + mu) <= eta`` (minus form) degrades by at most
    ``delta_R * eps``.
    """
    e_A = np.asarray(e_A, dtype=float)
    if params.law == "sign":
        return -(params.delta_R + params.nu) * np.sign(e_A)
    eta = effective_eta(params, w31_quadratic)
    n = math.sqrt(float(e_A @ e_A) + params.epsilon_smooth ** 2)
    boundary = eta / n if params.sign == "minus" else -eta / n
    return -(params.delta_R - boundary) * e_A / n


def control_case3(errors, Omega, alpha_D, h_hat, gains, robust: RobustParams,
                  adaptation_gain=1.0, w31=None):
    """Robust-adaptive law: the adaptive law plus ``mu``.

    ``w31`` (2x2) feeds the adaptive choice of ``eta``.
    """
    _check_sublevel(errors)
    return _case3(errors, Omega, alpha_D, h_hat, gains, robust, adaptation_gain, w31)


def _case3(errors, Omega, alpha_D, h_hat, gains, robust, adaptation_gain=1.0, w31=None):
    out2, dh = _case2(errors, Omega, alpha_D, h_hat, gains, adaptation_gain)
    q = None
    if w31 is not None:
        z1 = errors.z1
        q = float(z1 @ w31 @ z1)
    mu = robust_term(errors.e_A, robust, q)
    eta = effective_eta(robust, q) if robust.law == "smooth" else 0.0
    return _assemble(out2.feedback, out2.feedforward, mu, eta), dh


def control_robust_baseline(errors, Omega, alpha_D, h_nominal, gains, robust) -> ControlOutput:
    """Fixed-model robust law ``u = fb - Y h_nominal + mu``, no adaptation.

    ``mu = -delta_R e_A / |e_A|`` (regularised), or the per-axis sign law when
    ``robust.law == "sign"``; ``delta_R`` is held fixed for every configuration.
    """
    _check_sublevel(errors)
    return _baseline(errors, Omega, alpha_D, h_nominal, gains, robust)


def _baseline(errors, Omega, alpha_D, h_nominal, gains, robust):
    Y = regressor(Omega, alpha_D)
    e_A = errors.e_A
    if robust.delta_R == 0:
        mu = np.zeros(3)
    elif robust.law == "sign":
        mu = -(robust.delta_R + robust.nu) * np.sign(e_A)
    else:
        mu = -robust.delta_R * e_A / math.sqrt(float(e_A @ e_A) + robust.epsilon_smooth ** 2)
    return _assemble(feedback_term(errors, gains), -Y @ h_nominal, mu)


def desired_attitude(f_d, yaw_d) -> np.ndarray:
    """Rotation whose third column is along ``f_d`` with heading ``yaw_d``."""
    fx, fy, fz = (float(x) for x in f_d)
    norm = math.sqrt(fx * fx + fy * fy + fz * fz)
    if norm < 1e-9:
        raise DegenerateThrust("commanded force vanishes")
    z0, z1, z2 = fx / norm, fy / norm, fz / norm
    c, s = math.cos(yaw_d), math.sin(yaw_d)
    # b2 = b3 x b1c with b1c = (cos yaw, sin yaw, 0)
    y0, y1, y2 = -z2 * s, z2 * c, z0 * s - z1 * c
    n2 = math.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
    if n2 < 1e-9:
        raise DegenerateThrust("commanded force parallel to the heading direction")
    y0, y1, y2 = y0 / n2, y1 / n2, y2 / n2
    # b1 = b2 x b3
    x0, x1, x2 = y1 * z2 - y2 * z1, y2 * z0 - y0 * z2, y0 * z1 - y1 * z0
    return np.array([[x0, y0, z0], [x1, y1, z1], [x2, y2, z2]])


class PositionCommand(NamedTuple):
    thrust: float
    R_d: np.ndarray
    Omega_d: np.ndarray
    dOmega_d: np.ndarray
    f_d: np.ndarray


def position_controller(pos, vel, pos_d, vel_d, acc_d, yaw_d, mass, k_x=None, k_v=None,
                        R=None, acc_fn=None, t=None, g=GRAVITY) -> PositionCommand:
    """PD position loop producing thrust and desired attitude (z axis up).

    ``f_d = -k_x e_x - k_v e_v + m g e3 + m acc_d``.  Thrust is ``f_d`` projected
    on the current body axis ``R e3`` (or ``|f_d|`` when ``R`` is not given).
    The default gains place a critically damped double pole at 1 rad/s.

    ``Omega_d`` and its derivative come from differentiating the feedforward
    attitude ``reference_attitude(acc_fn(t), yaw_d)`` numerically; without
    ``acc_fn`` they are zero.
    """
    if k_x is None:
        k_x = mass * 1.0
    if k_v is None:
        k_v = mass * 2.0
    e_x = np.asarray(pos) - np.asarray(pos_d)
    e_v = np.asarray(vel) - np.asarray(vel_d)
    f_d = -k_x * e_x - k_v * e_v + mass * g * E3 + mass * np.asarray(acc_d)
    R_d = desired_attitude(f_d, yaw_d)
    thrust = float(f_d @ (R @ E3)) if R is not None else float(np.linalg.norm(f_d))
    if acc_fn is None:
        Omega_d, dOmega_d = np.zeros(3), np.zeros(3)
    else:
        _, Omega_d, dOmega_d = reference_rates(
            lambda s: reference_attitude(acc_fn(s), yaw_d, mass, g), t)
    return PositionCommand(thrust, R_d, Omega_d, dOmega_d, f_d)


def reference_attitude(acc_d, yaw_d, mass, g=GRAVITY):
    """Feedforward-only desired attitude (no position feedback)."""
    return desired_attitude(mass * (g * E3 + np.asarray(acc_d)), yaw_d)


def reference_rates(R_fn, t, h=1e-3):
    """Body rate and its derivative of a rotation-valued signal.

    Five-point central differences: ``R' = R hat(Omega)`` gives
    ``Omega = vee(R^T R')`` and, because ``hat(Omega)^2`` is symmetric,
    ``dOmega = vee(skew(R^T R''))``.
    """
    Rm2, Rm1, R0, Rp1, Rp2 = (R_fn(t + k * h) for k in (-2, -1, 0, 1, 2))
    d1 = (Rm2 - 8.0 * Rm1 + 8.0 * Rp1 - Rp2) / (12.0 * h)
    d2 = (-Rm2 + 16.0 * Rm1 - 30.0 * R0 + 16.0 * Rp1 - Rp2) / (12.0 * h * h)
    A = R0.T @ d1
    B = R0.T @ d2
    A = 0.5 * (A - A.T)
    B = 0.5 * (B - B.T)
    return R0, np.array([A[2, 1], A[0, 2], A[1, 0]]), np.array([B[2, 1], B[0, 2], B[1, 0]])
