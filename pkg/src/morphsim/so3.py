"""Rotation-group primitives and the attitude-error geometry on SO(3).

Rotations are plain 3x3 ``numpy`` arrays throughout; vectors are length-3
arrays.  Nothing here keeps state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonSkewInput

SKEW_TOL = 1e-9
ORTHO_TOL = 1e-9

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class GainSet:
    """Attitude feedback gains.

    ``c`` is the cross-term constant of the Lyapunov candidate (c1 for the
    known-model case, c2 for the adaptive cases) and also the weight of
    ``e_R`` in the augmented error ``e_A``.
    """

    k_R: float
    k_Omega: float
    c: float
    G: tuple[float, float, float] = (0.9, 1.0, 1.1)

    def __post_init__(self):
        if not (self.k_R > 0 and self.k_Omega > 0 and self.c > 0):
            raise ValueError("k_R, k_Omega and c must be positive")
        g = tuple(float(x) for x in self.G)
        if len(g) != 3 or min(g) <= 0:
            raise ValueError("G needs three positive entries")
        if len(set(g)) != 3:
            raise ValueError("G entries must be distinct")
        object.__setattr__(self, "G", g)

    @property
    def G_matrix(self) -> np.ndarray:
        return np.diag(self.G)

    @property
    def trace_G(self) -> float:
        return float(sum(self.G))


@dataclass(frozen=True)
class AttitudeErrors:
    phi: float
    e_R: np.ndarray
    e_Omega: np.ndarray
    e_A: np.ndarray
    alpha_D: np.ndarray

    @property
    def z1(self) -> np.ndarray:
        """``[|e_R|, |e_Omega|]``."""
        return np.array([np.linalg.norm(self.e_R), np.linalg.norm(self.e_Omega)])


def hat(v) -> np.ndarray:
    """Skew matrix with ``hat(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m) -> np.ndarray:
    """Inverse of :func:`hat`.

    Raises
    ------
    NonSkewInput
        If ``m`` is not skew-symmetric to within ``1e-9``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise NonSkewInput(f"expected a 3x3 matrix, got shape {m.shape}")
    if np.linalg.norm(m + m.T) > SKEW_TOL:
        raise NonSkewInput("matrix is not skew-symmetric")
    return _vee(m)


def _vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def exp_so3(v) -> np.ndarray:
    """Rodrigues' formula.  Series expansion near the identity."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    theta2 = x * x + y * y + z * z
    if theta2 < 1e-16:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = 2.0 * math.sin(0.5 * theta) ** 2 / theta2
    # I + a K + b K^2 with K = hat(v), K^2 = v v' - theta2 I
    bxy, bxz, byz = b * x * y, b * x * z, b * y * z
    return np.array([
        [1.0 - b * (y * y + z * z), bxy - a * z, bxz + a * y],
        [bxy + a * z, 1.0 - b * (x * x + z * z), byz - a * x],
        [bxz - a * y, byz + a * x, 1.0 - b * (x * x + y * y)],
    ])


def dexpinv(theta, omega) -> np.ndarray:
    """Inverse differential of ``exp_so3`` truncated after the double bracket.

    ``theta' = dexpinv(theta, omega)`` is the Lie-algebra ODE whose solution
    reproduces ``R' = R hat(omega)`` through ``R = R0 exp(theta)``.  The
    truncation is exact enough for a fourth-order Munthe-Kaas scheme.
    """
    c1 = np.cross(theta, omega)
    return omega + 0.5 * c1 + np.cross(theta, c1) / 12.0


_I3 = np.eye(3)


def orthonormality_error(R) -> float:
    E = R.T @ R - _I3
    return math.sqrt(float(np.vdot(E, E)))


def is_rotation(R, tol=ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and orthonormality_error(R) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def project_to_so3(R) -> np.ndarray:
    """Nearest rotation in the Frobenius sense (polar factor via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def random_rotation(rng: np.random.Generator, max_angle=math.pi) -> np.ndarray:
    """Axis uniform on the sphere, angle uniform in ``[0, max_angle)``."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return exp_so3(rng.uniform(0.0, max_angle) * axis)


def error_function(R, R_d, G) -> float:
    """``Phi = 1/2 tr[G (I - R_d^T R)]``; ``G`` is a diagonal (vector or matrix)."""
    return _phi(_diag_of(G), R_d.T @ R)


def _phi(g, Q):
    # Below 90 deg of error Phi is evaluated from the skew part v of Q,
    # using 1 - cos(theta) = |v|^2 / (1 + cos(theta)), so that it keeps full
    # relative precision as the error goes to zero; 1 - Q_ii alone bottoms
    # out near 1e-16.
    return _phi_scalar(g[0], g[1], g[2], *Q.ravel().tolist())


def _phi_scalar(g0, g1, g2, q00, q01, q02, q10, q11, q12, q20, q21, q22):
    cos_t = 0.5 * (q00 + q11 + q22 - 1.0)
    if cos_t <= 0.0:
        return 0.5 * (g0 * (1.0 - q00) + g1 * (1.0 - q11) + g2 * (1.0 - q22))
    v0 = 0.5 * (q21 - q12)
    v1 = 0.5 * (q02 - q20)
    v2 = 0.5 * (q10 - q01)
    a, b, c = v0 * v0, v1 * v1, v2 * v2
    s2 = a + b + c
    return 0.5 * (g0 * (s2 - a) + g1 * (s2 - b) + g2 * (s2 - c)) / (1.0 + cos_t)


def rotation_error_vector(R, R_d, G) -> np.ndarray:
    """``e_R = 1/2 (G R_d^T R - R^T R_d G)^vee``."""
    Gm = np.diag(_diag_of(G))
    GQ = Gm @ (R_d.T @ R)
    return 0.5 * _vee(GQ - GQ.T)


def attitude_errors(R, Omega, R_d, Omega_d, dOmega_d, G, c) -> AttitudeErrors:
    """Tracking errors at one instant.

    ``alpha_D = R^T R_d dOmega_d - hat(Omega) R^T R_d Omega_d`` is the
    reference angular acceleration seen in the body frame, so that
    ``d/dt e_Omega = dOmega - alpha_D``.
    """
    g0, g1, g2 = _diag_of(G).tolist()
    return _attitude_errors(g0, g1, g2, R, Omega, R_d, Omega_d, dOmega_d, c)


def _attitude_errors(g0, g1, g2, R, Omega, R_d, Omega_d, dOmega_d, c):
    Q = R_d.T @ R
    q = Q.ravel().tolist()
    q00, q01, q02, q10, q11, q12, q20, q21, q22 = q
    r0, r1, r2 = 0.5 * (g2 * q21 - g1 * q12), 0.5 * (g0 * q02 - g2 * q20), 0.5 * (g1 * q10 - g0 * q01)
    phi = _phi_scalar(g0, g1, g2, *q)
    w0, w1, w2 = Omega.tolist()
    d0, d1, d2 = Omega_d.tolist()
    # Q^T Omega_d
    o0 = q00 * d0 + q10 * d1 + q20 * d2
    o1 = q01 * d0 + q11 * d1 + q21 * d2
    o2 = q02 * d0 + q12 * d1 + q22 * d2
    a0, a1, a2 = dOmega_d.tolist()
    v0, v1, v2 = w0 - o0, w1 - o1, w2 - o2
    alpha_D = np.array([
        q00 * a0 + q10 * a1 + q20 * a2 - (w1 * o2 - w2 * o1),
        q01 * a0 + q11 * a1 + q21 * a2 - (w2 * o0 - w0 * o2),
        q02 * a0 + q12 * a1 + q22 * a2 - (w0 * o1 - w1 * o0),
    ])
    return AttitudeErrors(
        phi=phi,
        e_R=np.array([r0, r1, r2]),
        e_Omega=np.array([v0, v1, v2]),
        e_A=np.array([v0 + c * r0, v1 + c * r1, v2 + c * r2]),
        alpha_D=alpha_D,
    )


def c_matrix(R_d, R, G) -> np.ndarray:
    """``C = 1/2 (tr[R^T R_d G] I - R^T R_d G)`` so that ``de_R/dt = C e_Omega``."""
    B = (R.T @ R_d) @ np.diag(_diag_of(G))
    return 0.5 * (np.trace(B) * np.eye(3) - B)


def _diag_of(G):
    G = np.asarray(G, dtype=float)
    return np.diag(G).copy() if G.ndim == 2 else G
