"""Physically consistent online inertia estimation.

The potential is ``psi(h) = -log det P(h)`` with ``P(h) = 1/2 tr(J(h)) I - J(h)``.
``P > 0`` is exactly the triangle inequality on the principal moments, so
the log-det barrier keeps estimates physically meaningful.  The update is a
natural-gradient flow in the metric ``hess psi``.
"""
from __future__ import annotations

import numpy as np

from .errors import InfeasibleParams, SingularHessian

HESSIAN_COND_LIMIT = 1e12


def _basis():
    D = np.zeros((6, 3, 3))
    pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    for k, (i, j) in enumerate(pairs):
        E = np.zeros((3, 3))
        E[i, j] = E[j, i] = 1.0
        D[k] = 0.5 * np.trace(E) * np.eye(3) - E
    return D


# dP/dh_k, constant because P is linear in h
_DP = _basis()
# the same basis as columns of a 9x6 matrix: hess psi = D' (A kron A) D
_DMAT = _DP.reshape(6, 9).T.copy()
_DMAT_COND = float(np.linalg.cond(_DMAT.T @ _DMAT))


def _p_matrix(h):
    xx, yy, zz, xy, xz, yz = h
    s = 0.5 * (xx + yy + zz)
    return np.array([[s - xx, -xy, -xz], [-xy, s - yy, -yz], [-xz, -yz, s - zz]])


def _chol(h):
    P = _p_matrix(h)
    try:
        return P, np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise InfeasibleParams(
            f"P(h) is not positive definite for h={np.asarray(h).tolist()}"
        ) from None


def psi(h) -> float:
    _, L = _chol(h)
    return float(-2.0 * np.sum(np.log(np.diag(L))))


def psi_gradient(h) -> np.ndarray:
    P, _ = _chol(h)
    A = np.linalg.inv(P)
    return -np.einsum("ij,kji->k", A, _DP)


def psi_hessian(h) -> np.ndarray:
    """``H_ij = tr(P^-1 D_i P^-1 D_j)``, assembled as ``D' (P^-1 kron P^-1) D``."""
    A = _inv_spd(_p_matrix(h), h)
    return _hessian_from_inverse(A)


def _hessian_from_inverse(A):
    K = (A[:, None, :, None] * A[None, :, None, :]).reshape(9, 9)
    H = _DMAT.T @ K @ _DMAT
    return 0.5 * (H + H.T)


def _inv_spd(P, h=None):
    """Inverse of a symmetric 3x3 matrix that must be positive definite.

    Sylvester's criterion on the leading minors, then the adjugate.
    """
    a, b, c = P[0, 0], P[0, 1], P[0, 2]
    d, e, f = P[1, 1], P[1, 2], P[2, 2]
    A11 = d * f - e * e
    A12 = c * e - b * f
    A13 = b * e - c * d
    det = a * A11 + b * A12 + c * A13
    if not (a > 0 and a * d - b * b > 0 and det > 0):
        raise InfeasibleParams(
            f"P(h) is not positive definite for h={np.asarray(h).tolist()}"
        )
    A22 = a * f - c * c
    A23 = b * c - a * e
    A33 = a * d - b * b
    return np.array([[A11, A12, A13], [A12, A22, A23], [A13, A23, A33]]) / det


def bregman_divergence(h_true, h_hat) -> float:
    """``psi(h) - psi(h_hat) - (h - h_hat) . grad psi(h_hat)``.

    Evaluated through the generalized eigenvalues ``mu`` of ``(P(h), P(h_hat))``
    as ``sum(mu - 1 - log mu)``, which is the same quantity without the
    cancellation of the textbook form.
    """
    h_true = np.asarray(h_true, dtype=float)
    h_hat = np.asarray(h_hat, dtype=float)
    P, _ = _chol(h_true)
    _, L = _chol(h_hat)
    if np.array_equal(h_true, h_hat):
        return 0.0
    X = np.linalg.solve(L, np.linalg.solve(L, P).T)
    x = np.linalg.eigvalsh(0.5 * (X + X.T)) - 1.0
    small = np.abs(x) < 1e-4
    terms = np.where(
        small,
        x * x * (0.5 - x / 3.0 + x * x / 4.0 - x ** 3 / 5.0),
        x - np.log1p(np.where(small, 0.0, x)),
    )
    return float(np.sum(terms))


def update_rate(h_hat, Y, e_A, gain=1.0) -> np.ndarray:
    """``-gain * (hess psi(h_hat))^-1 Y^T e_A``.

    ``gain`` scales the whole flow; the matching Lyapunov term is
    ``bregman_divergence / gain``.

    Raises
    ------
    InfeasibleParams
        ``P(h_hat)`` is not positive definite.
    SingularHessian
        A conservative bound on the Hessian's condition number exceeds
        ``HESSIAN_COND_LIMIT``.
    """
    P = _p_matrix(h_hat)
    A = _inv_spd(P, h_hat)
    # cheap screen: cond(H) <= cond(P)^2 cond(D'D) and cond(P) <= |P|_F |P^-1|_F;
    # the exact spectrum is only computed when the screen fails
    bound = (float(np.sum(P * P)) * float(np.sum(A * A))) * _DMAT_COND
    H = _hessian_from_inverse(A)
    if bound > HESSIAN_COND_LIMIT:
        w = np.linalg.eigvalsh(H)
        if w[0] <= 0 or w[-1] / w[0] > HESSIAN_COND_LIMIT:
            raise SingularHessian(f"hessian condition number {w[-1] / w[0]:.3g} too large")
    return -gain * np.linalg.solve(H, np.asarray(Y).T @ np.asarray(e_A))


def min_consistency_eig(h) -> float:
    return float(np.linalg.eigvalsh(_p_matrix(h))[0])


class EstimatorState:
    """Per-configuration bank of inertia estimates.

    Inactive entries are stored untouched, so an estimate resumes exactly
    where it stopped when its configuration becomes active again.
    """

    def __init__(self, bank):
        self.bank = {int(p): np.array(h, dtype=float) for p, h in bank.items()}
        for p, h in self.bank.items():
            if min_consistency_eig(h) <= 0:
                raise InfeasibleParams(f"initial estimate for configuration {p} is infeasible")

    @classmethod
    def from_configurations(cls, cfgs):
        return cls({c.index: c.nominal_inertia for c in cfgs})

    def __getitem__(self, p):
        return self.bank[p]

    def replace(self, p, h):
        """New state with configuration ``p`` set to ``h``; other entries shared."""
        new = object.__new__(EstimatorState)
        new.bank = dict(self.bank)
        new.bank[p] = np.asarray(h, dtype=float)
        return new

    def copy(self):
        return EstimatorState({p: h.copy() for p, h in self.bank.items()})
