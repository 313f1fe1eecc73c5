"""Switched attitude dynamics, vehicle configurations and inertia regressors.

Inertia parameters are 6-vectors ``h = [xx, yy, zz, xy, xz, yz]`` (kg m^2).
The two regressors factor the inertia out of the dynamics::

    Y1(Omega) @ h == cross(J(h) @ Omega, Omega)
    Y2(alpha) @ h == J(h) @ alpha
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .errors import NonSymmetric, SingularInertia

PARAM_NAMES = ("xx", "yy", "zz", "xy", "xz", "yz")


def assemble_inertia(h) -> np.ndarray:
    xx, yy, zz, xy, xz, yz = h
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]], dtype=float)


def extract_params(J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if np.linalg.norm(J - J.T) > 1e-9:
        raise NonSymmetric("inertia matrix is not symmetric")
    return np.array([J[0, 0], J[1, 1], J[2, 2], J[0, 1], J[0, 2], J[1, 2]])


def consistency_matrix(h) -> np.ndarray:
    """``P(h) = 1/2 tr(J) I - J``.

    ``P`` is the rotational second-moment matrix; ``P > 0`` is the triangle
    inequality on the principal moments.
    """
    J = assemble_inertia(h)
    return 0.5 * np.trace(J) * np.eye(3) - J


def is_physically_consistent(h, tol=0.0) -> bool:
    J = assemble_inertia(h)
    P = 0.5 * np.trace(J) * np.eye(3) - J
    return bool(np.linalg.eigvalsh(J)[0] > tol and np.linalg.eigvalsh(P)[0] > tol)


def regressor_y1(Omega) -> np.ndarray:
    w1, w2, w3 = Omega
    return np.array([
        [0.0, w2 * w3, -w2 * w3, w1 * w3, -w1 * w2, w3 * w3 - w2 * w2],
        [-w1 * w3, 0.0, w1 * w3, -w2 * w3, w1 * w1 - w3 * w3, w1 * w2],
        [w1 * w2, -w1 * w2, 0.0, w2 * w2 - w1 * w1, w2 * w3, -w1 * w3],
    ])


def regressor_y2(alpha) -> np.ndarray:
    a1, a2, a3 = alpha
    return np.array([
        [a1, 0.0, 0.0, a2, a3, 0.0],
        [0.0, a2, 0.0, a1, 0.0, a3],
        [0.0, 0.0, a3, 0.0, a1, a2],
    ])


@dataclass(frozen=True, eq=False)
class Configuration:
    """One rigid configuration (subsystem) of the folding vehicle.

    ``lambda_min``/``lambda_max`` default to the eigenvalues of the true
    inertia; pass them explicitly to model bounds known only approximately.
    """

    index: int
    true_inertia: np.ndarray
    nominal_inertia: np.ndarray
    lambda_min: float | None = None
    lambda_max: float | None = None
    J: np.ndarray = field(init=False, repr=False)
    J_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = np.asarray(self.true_inertia, dtype=float).copy()
        h0 = np.asarray(self.nominal_inertia, dtype=float).copy()
        if h.shape != (6,) or h0.shape != (6,):
            raise ValueError("inertia parameter vectors need 6 entries")
        h.setflags(write=False)
        h0.setflags(write=False)
        J = assemble_inertia(h)
        eig = np.linalg.eigvalsh(J)
        if eig[0] <= 0:
            raise SingularInertia(f"configuration {self.index}: inertia not positive definite")
        lo = eig[0] if self.lambda_min is None else float(self.lambda_min)
        hi = eig[-1] if self.lambda_max is None else float(self.lambda_max)
        if not (0 < lo <= eig[0] * (1 + 1e-12) and eig[-1] <= hi * (1 + 1e-12)):
            raise ValueError(
                f"configuration {self.index}: eigen-bounds [{lo}, {hi}] do not "
                f"contain the inertia spectrum [{eig[0]}, {eig[-1]}]"
            )
        object.__setattr__(self, "true_inertia", h)
        object.__setattr__(self, "nominal_inertia", h0)
        object.__setattr__(self, "lambda_min", float(lo))
        object.__setattr__(self, "lambda_max", float(hi))
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "J_inv", np.linalg.inv(J))


class SwitchingSignal:
    """Piecewise-constant, right-continuous index signal.

    ``breakpoints`` is a sequence of ``(time, index)`` pairs with strictly
    increasing times; the first pair fixes the index from that time on (and
    before it).
    """

    def __init__(self, breakpoints, indices=None):
        bps = [(float(t), int(p)) for t, p in breakpoints]
        if not bps:
            raise ValueError("switching signal needs at least one breakpoint")
        times = [t for t, _ in bps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")
        if indices is not None:
            bad = [p for _, p in bps if p not in indices]
            if bad:
                raise ValueError(f"unknown configuration indices {bad}")
        self._times = times
        self._indices = [p for _, p in bps]

    @classmethod
    def constant(cls, index):
        return cls([(0.0, index)])

    @property
    def breakpoints(self):
        return list(zip(self._times, self._indices))

    def switch_times(self):
        """Times at which the index actually changes."""
        return [
            t for t, a, b in zip(self._times[1:], self._indices, self._indices[1:]) if a != b
        ]

    def __call__(self, t) -> int:
        k = bisect.bisect_right(self._times, t) - 1
        return self._indices[max(k, 0)]

    def __eq__(self, other):
        return isinstance(other, SwitchingSignal) and self.breakpoints == other.breakpoints

    def __repr__(self):
        return f"SwitchingSignal({self.breakpoints!r})"


class DisturbanceModel:
    """Body-frame torque disturbance with a known norm bound.

    kinds:
      ``zero``
      ``sinusoidal``: ``D_i(t) = amplitude_i * sin(frequency_i * t + phase_i)``
      ``table``: piecewise-linear interpolation of ``(t, dx, dy, dz)`` rows,
      held constant outside the table.
    """

    def __init__(self, kind="zero", amplitude=(0.0, 0.0, 0.0), frequency=(1.0, 1.0, 1.0),
                 phase=(0.0, 0.0, 0.0), table=None, delta_R=None):
        self.kind = kind
        if kind == "zero":
            bound = 0.0
        elif kind == "sinusoidal":
            self.amplitude = np.asarray(amplitude, dtype=float)
            self.frequency = np.asarray(frequency, dtype=float)
            self.phase = np.asarray(phase, dtype=float)
            bound = float(np.linalg.norm(self.amplitude))
        elif kind == "table":
            tab = np.asarray(table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 4 or len(tab) < 1:
                raise ValueError("disturbance table rows must be (t, dx, dy, dz)")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise ValueError("disturbance table times must increase")
            self.table = tab
            # norm is convex, so the sup over segments sits on a vertex
            bound = float(np.max(np.linalg.norm(tab[:, 1:], axis=1)))
        else:
            raise ValueError(f"unknown disturbance kind {kind!r}")
        if delta_R is None:
            delta_R = bound
        elif delta_R < bound - 1e-15:
            raise ValueError(f"delta_R={delta_R} is below the model's sup norm {bound}")
        self.delta_R = float(delta_R)

    def __call__(self, t) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(3)
        if self.kind == "sinusoidal":
            return self.amplitude * np.sin(self.frequency * t + self.phase)
        tab = self.table
        return np.array([np.interp(t, tab[:, 0], tab[:, k]) for k in (1, 2, 3)])


def attitude_dynamics(R, Omega, u, Delta, cfg: Configuration):
    """Right-hand side of ``R' = R hat(Omega)``, ``J Omega' = (J Omega) x Omega + u + Delta``."""
    J = cfg.J
    dOmega = cfg.J_inv @ (np.cross(J @ Omega, Omega) + u + Delta)
    if not np.all(np.isfinite(dOmega)):
        raise SingularInertia("non-finite angular acceleration")
    Rdot = R @ np.array([[0.0, -Omega[2], Omega[1]], [Omega[2], 0.0, -Omega[0]],
                         [-Omega[1], Omega[0], 0.0]])
    return Rdot, dOmega


def rotational_energy(Omega, J) -> float:
    return 0.5 * float(Omega @ J @ Omega)


# Nominal inertias of the two configurations (unfolded 1, folded 2), kg m^2.
NOMINAL_H1 = extract_params([[0.0023, -0.0006, 0.0010],
                             [-0.0006, 0.0172, 0.0],
                             [0.0010, 0.0, 0.0181]])
NOMINAL_H2 = extract_params([[0.0014, -0.0001, 0.0005],
                             [-0.0001, 0.0052, 0.0],
                             [0.0005, 0.0, 0.0053]])
VEHICLE_MASS = 1.4
GRAVITY = 9.81


def diag_offset(d) -> np.ndarray:
    return np.array([d[0], d[1], d[2], 0.0, 0.0, 0.0], dtype=float)


def default_configurations(offset1=(0.01, 0.01, 0.02), offset2=(0.01, 0.01, 0.02)):
    """The two-configuration vehicle: true inertia = nominal + diagonal offset."""
    return [
        Configuration(1, NOMINAL_H1 + diag_offset(offset1), NOMINAL_H1),
        Configuration(2, NOMINAL_H2 + diag_offset(offset2), NOMINAL_H2),
    ]


__all__ = [
    "PARAM_NAMES", "assemble_inertia", "extract_params", "consistency_matrix",
    "is_physically_consistent", "regressor_y1", "regressor_y2", "Configuration",
    "SwitchingSignal", "DisturbanceModel", "attitude_dynamics", "rotational_energy",
    "default_configurations", "NOMINAL_H1", "NOMINAL_H2", "VEHICLE_MASS",
    "GRAVITY", "diag_offset",
]
