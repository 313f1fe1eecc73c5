"""Stability certificates for the switched attitude loop.

Everything here works on the scalar reduction ``z1 = [|e_R|, |e_Omega|]``:
quadratic bounds on each subsystem's Lyapunov function, the decay-rate
matrices, the admissible range of the cross-term constant ``c``, the
minimum dwell time, the re-entry (switch) condition and the bound on the
Lyapunov jump at a switch.

Two Lyapunov families are certified.

Known model::

    V = 1/2 e_Omega' J e_Omega + k_R Phi + c e_R . e_Omega

Adaptive (optionally robust)::

    V = 1/2 e_Omega' J e_Omega + k_R Phi + c e_R . J e_Omega + d_psi(h || h_hat) / gamma

``Phi`` is compared with ``|e_R|^2`` through constants ``b1 <= Phi/|e_R|^2 <= b2``
certified by sampling a sublevel set ``Phi < level`` (:func:`certify_phi_bounds`).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.transform import Rotation

from .errors import InadmissibleC, NonPositiveW, NotSettled
from .so3 import GainSet

SQRT2 = math.sqrt(2.0)

# --------------------------------------------------------------------------
# Phi versus |e_R|^2
# --------------------------------------------------------------------------


def default_phi_level(G) -> float:
    """Default sublevel used for the ``b1, b2`` certificate.

    ``Phi < 2`` still contains the non-identity critical points of ``Phi``
    (half-turns about a principal axis, where ``e_R = 0`` but
    ``Phi = g_i + g_j``), so ``Phi/|e_R|^2`` is unbounded there.  The default
    stays 10% below the lowest of them.
    """
    g = np.sort(np.asarray(G, dtype=float))
    return 0.9 * min(2.0, g[0] + g[1])


def phi_ratio(Q, G) -> np.ndarray:
    """``Phi / |e_R|^2`` and ``Phi`` for a batch ``Q = R_d^T R`` of shape (n, 3, 3)."""
    g = np.asarray(G, dtype=float)
    d = np.einsum("nii->ni", Q)
    # same evaluation as the simulator: via the skew part below 90 deg
    v = 0.5 * np.stack((Q[:, 2, 1] - Q[:, 1, 2], Q[:, 0, 2] - Q[:, 2, 0],
                        Q[:, 1, 0] - Q[:, 0, 1]), axis=1)
    cos_t = 0.5 * (d.sum(axis=1) - 1.0)
    v2 = v * v
    s2 = v2.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precise = 0.5 * ((s2[:, None] - v2) @ g) / (1.0 + cos_t)
    phi = np.where(cos_t > 0.0, precise, 0.5 * (1.0 - d) @ g)
    GQ = g[None, :, None] * Q
    S = GQ - np.transpose(GQ, (0, 2, 1))
    e = 0.5 * np.stack((S[:, 2, 1], S[:, 0, 2], S[:, 1, 0]), axis=1)
    return phi / np.einsum("ni,ni->n", e, e), phi


def _sample_sublevel(G, level, n, rng):
    """Attitude errors with ``Phi < level``.

    Half of the draw is Haar-uniform; the other half has log-uniform angles
    in ``[1e-6, 1]`` rad so that the small-angle limit is represented.
    """
    out = []
    have = 0
    while have < n:
        m = n - have
        haar = Rotation.random(m // 2 + 1, random_state=rng).as_matrix()
        axis = rng.normal(size=(m - m // 2, 3))
        axis /= np.linalg.norm(axis, axis=1)[:, None]
        ang = 10.0 ** rng.uniform(-6.0, 0.0, size=m - m // 2)
        small = Rotation.from_rotvec(axis * ang[:, None]).as_matrix()
        Q = np.concatenate((haar, small))
        ratio, phi = phi_ratio(Q, G)
        keep = (phi < level) & np.isfinite(ratio)
        out.append(ratio[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n]


@functools.lru_cache(maxsize=32)
def _phi_bounds_cached(G, level, n_samples, seed, margin):
    rng = np.random.default_rng(seed)
    r = _sample_sublevel(G, level, n_samples, rng)
    b1 = float(r.min()) * (1.0 - margin)
    b2 = float(r.max()) * (1.0 + margin)
    check = _sample_sublevel(G, level, n_samples, np.random.default_rng(seed + 1))
    bad = int(np.count_nonzero((check < b1) | (check > b2)))
    if bad:
        raise ArithmeticError(f"Phi bounds failed re-verification on {bad} samples")
    return b1, b2


def certify_phi_bounds(G, level=None, n_samples=10**6, seed=0, margin=0.01):
    """Constants with ``b1 |e_R|^2 <= Phi <= b2 |e_R|^2`` on ``Phi < level``.

    The extreme sampled ratios are widened by ``margin`` (b1 shrunk, b2
    grown), then re-checked on an independent draw of the same size.

    Returns
    -------
    (b1, b2) : tuple of float
    """
    g = tuple(float(x) for x in (np.diag(G) if np.ndim(G) == 2 else G))
    if level is None:
        level = default_phi_level(g)
    return _phi_bounds_cached(g, float(level), int(n_samples), int(seed), float(margin))


def small_angle_ratio(G, axis) -> float:
    """Limit of ``Phi/|e_R|^2`` for rotations about ``axis`` as the angle goes to 0."""
    g = np.asarray(G, dtype=float)
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    M = np.sum(g) * np.eye(3) - np.diag(g)
    Ma = M @ a
    return float(a @ Ma / (Ma @ Ma))


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------


def sym_eig(W) -> np.ndarray:
    return np.linalg.eigvalsh(0.5 * (W + W.T))


def _lmin(W):
    return float(sym_eig(W)[0])


def _lmax(W):
    return float(sym_eig(W)[-1])


@dataclass
class SubsystemCertificate:
    index: int
    lambda_min: float
    lambda_max: float
    c_max: float
    branches: dict
    matrices: dict = field(default_factory=dict)
    beta: float | None = None
    switch_ratio: float | None = None

    def eig(self, name):
        return sym_eig(self.matrices[name])


@dataclass
class StabilityCertificate:
    """Certificate for a family of configurations under one gain set.

    ``case`` is ``"known"`` or ``"adaptive"``.  ``subsystems`` maps the
    configuration index to its :class:`SubsystemCertificate`.
    """

    case: str
    gains: GainSet
    b1: float
    b2: float
    phi_level: float
    subsystems: dict
    tau_d: float | None = None
    layout: str = "printed"

    def __getitem__(self, p):
        return self.subsystems[p]

    @property
    def c_max(self) -> float:
        return min(s.c_max for s in self.subsystems.values())

    def tau_d_pair(self, i, j) -> float:
        return dwell_time([self.subsystems[i], self.subsystems[j]])

    def to_dict(self) -> dict:
        subs = {}
        for p, s in sorted(self.subsystems.items()):
            subs[str(p)] = {
                "lambda_min": s.lambda_min,
                "lambda_max": s.lambda_max,
                "c_max": s.c_max,
                "c_branches": s.branches,
                "beta": s.beta,
                "switch_ratio": s.switch_ratio,
                "matrices": {k: np.asarray(v).tolist() for k, v in s.matrices.items()},
                "eigenvalues": {k: sym_eig(v).tolist() for k, v in s.matrices.items()},
            }
        pairs = {}
        idx = sorted(self.subsystems)
        if self.case == "known":
            for a in range(len(idx)):
                for b in range(a + 1, len(idx)):
                    pairs[f"{idx[a]}-{idx[b]}"] = self.tau_d_pair(idx[a], idx[b])
        return {
            "case": self.case,
            "layout": self.layout,
            "gains": {"k_R": self.gains.k_R, "k_Omega": self.gains.k_Omega,
                      "c": self.gains.c, "G": list(self.gains.G)},
            "b1": self.b1,
            "b2": self.b2,
            "phi_level": self.phi_level,
            "c_max": self.c_max,
            "tau_d": self.tau_d,
            "tau_d_pairwise": pairs,
            "subsystems": subs,
        }


def _phi_constants(gains, phi_bounds, phi_level):
    if phi_bounds is None:
        level = default_phi_level(gains.G) if phi_level is None else phi_level
        b1, b2 = certify_phi_bounds(gains.G, level)
    else:
        b1, b2 = phi_bounds
        level = float("nan") if phi_level is None else phi_level
    if not 0 < b1 <= b2:
        raise ValueError("need 0 < b1 <= b2")
    return float(b1), float(b2), float(level)


def case1_branches(k_R, k_Omega, trG, lmin, lmax, b1, b2) -> dict:
    """Upper bounds on ``c`` for the known-model certificate, by branch name."""
    return {
        "damping": SQRT2 * k_Omega / trG,
        "decay": 4 * SQRT2 * k_R * k_Omega * lmin ** 2
        / (SQRT2 * k_Omega ** 2 * lmax + 4 * k_R * lmin ** 2 * trG),
        "lower_bound": math.sqrt(b1 * k_R * lmin),
        "upper_bound": math.sqrt(b2 * k_R * lmax),
    }


def case2_branches(k_R, k_Omega, trG, lmin, lmax, b1) -> dict:
    """Upper bounds on ``c`` for the adaptive certificate, by branch name."""
    return {
        "lower_bound": math.sqrt(2 * b1 * k_R * lmin / lmax ** 2),
        "damping": SQRT2 * k_Omega / (lmax * trG),
        "decay": 4 * k_R * k_Omega / (k_Omega ** 2 + 4 / SQRT2 * k_R * lmax * trG),
    }


def _check_c(c, p, branches):
    name, bound = min(branches.items(), key=lambda kv: kv[1])
    if not c < bound:
        raise InadmissibleC(
            f"c={c:.6g} violates the {name!r} bound c < {bound:.6g} for configuration {p}",
            branch=name, c=c, c_max=bound,
        )
    return bound


def _require_pd(W, name, p):
    lo = _lmin(W)
    if not lo > 0:
        raise NonPositiveW(f"{name} of configuration {p} is not positive definite (min eig {lo:.3g})")


def known_model_matrices(k_R, k_Omega, c, trG, lmin, lmax, b1, b2):
    """``W1, W2, W3`` for the known-model Lyapunov function.

    ``z1' W1 z1 <= V <= z1' W2 z1`` and ``dV/dt <= -z1' W3 z1``.  The
    ``J^-1`` in ``de_Omega/dt`` enters the cross term, hence the
    ``1/lambda`` factors in ``W3``.
    """
    W1 = 0.5 * np.array([[b1 * k_R, -c], [-c, lmin]])
    W2 = np.array([[b2 * k_R, 0.5 * c], [0.5 * c, 0.5 * lmax]])
    W3 = np.array([
        [c * k_R / lmax, -c * k_Omega / (2 * lmin)],
        [-c * k_Omega / (2 * lmin), k_Omega - c * trG / SQRT2],
    ])
    return W1, W2, W3


def certify_case1(cfgs, gains: GainSet, phi_bounds=None, phi_level=None) -> StabilityCertificate:
    """Known-model certificate: ``W1, W2, W3``, decay rates and the dwell time.

    Raises
    ------
    InadmissibleC
        ``gains.c`` is not below every admissibility branch; the violated
        (tightest) branch is reported.
    NonPositiveW
        ``W1`` or ``W3`` fails to be positive definite.
    """
    b1, b2, level = _phi_constants(gains, phi_bounds, phi_level)
    k_R, k_W, c, trG = gains.k_R, gains.k_Omega, gains.c, gains.trace_G
    subs = {}
    for cfg in cfgs:
        lmin, lmax = cfg.lambda_min, cfg.lambda_max
        br = case1_branches(k_R, k_W, trG, lmin, lmax, b1, b2)
        c_max = _check_c(c, cfg.index, br)
        W1, W2, W3 = known_model_matrices(k_R, k_W, c, trG, lmin, lmax, b1, b2)
        for name, W in (("W1", W1), ("W2", W2), ("W3", W3)):
            _require_pd(W, name, cfg.index)
        s = SubsystemCertificate(cfg.index, lmin, lmax, c_max, br,
                                 {"W1": W1, "W2": W2, "W3": W3})
        s.beta = _lmin(W3) / (2.0 * _lmax(W2))
        subs[cfg.index] = s
    cert = StabilityCertificate("known", gains, b1, b2, level, subs)
    cert.tau_d = dwell_time(list(subs.values()))
    return cert


def dwell_time(subs) -> float:
    """``1/(2 sum beta) * log(prod lmax(W2) / prod lmin(W1))`` over ``subs``.

    For two subsystems this is exactly the residence time after which the
    Lyapunov value at consecutive same-index entries must decrease.  Never
    negative.
    """
    num = sum(math.log(_lmax(s.matrices["W2"])) for s in subs)
    den = sum(math.log(_lmin(s.matrices["W1"])) for s in subs)
    beta = sum(s.beta for s in subs)
    return max(0.0, (num - den) / (2.0 * beta))


def adaptive_matrices(k_R, k_Omega, c, trG, lmin, lmax, b1, b2, layout="printed"):
    """``W11, W13, W23, W31, W21`` for the adaptive Lyapunov function.

    ``layout="printed"`` uses the published entries of the lower and upper
    bounds.  ``layout="consistent"`` instead uses the upper bound that
    follows from ``|c e_R . J e_Omega| <= c lmax |e_R| |e_Omega|``, i.e.
    ``[[b2 k_R, c lmax/2], [c lmax/2, lmax/2]]``; the printed ``W23`` is
    smaller than that and is not a valid upper bound in general.
    """
    W13 = np.array([[b1 * k_R, 0.5 * c * lmax], [0.5 * c * lmax, 0.5 * lmin]])
    if layout == "printed":
        W23 = 0.5 * np.array([[b2 * k_R, 0.5 * c * lmin], [0.5 * c * lmin, 0.5 * lmax]])
        up = np.array([[b2 * k_R, 0.5 * c * lmin], [0.5 * c * lmin, 0.5 * lmax]])
    elif layout == "consistent":
        W23 = np.array([[b2 * k_R, 0.5 * c * lmax], [0.5 * c * lmax, 0.5 * lmax]])
        up = W23
    else:
        raise ValueError(f"unknown layout {layout!r}")
    W11 = np.zeros((3, 3))
    W11[:2, :2] = W13
    W11[2, 2] = 1.0
    W21 = np.zeros((3, 3))
    W21[:2, :2] = up
    W21[2, 2] = 1.0
    W31 = np.array([
        [c * k_R, -0.5 * c * k_Omega],
        [-0.5 * c * k_Omega, k_Omega - c / SQRT2 * lmax * trG],
    ])
    return W11, W13, W23, W31, W21


def certify_case2(cfgs, gains: GainSet, phi_bounds=None, phi_level=None,
                  layout="printed") -> StabilityCertificate:
    """Adaptive certificate: bound matrices, ``W31`` and re-entry ratios.

    Raises
    ------
    InadmissibleC
        ``gains.c`` violates a branch of the adaptive admissibility bound.
    NonPositiveW
        ``W13`` or ``W31`` fails to be positive definite.
    """
    b1, b2, level = _phi_constants(gains, phi_bounds, phi_level)
    k_R, k_W, c, trG = gains.k_R, gains.k_Omega, gains.c, gains.trace_G
    subs = {}
    for cfg in cfgs:
        lmin, lmax = cfg.lambda_min, cfg.lambda_max
        br = case2_branches(k_R, k_W, trG, lmin, lmax, b1)
        c_max = _check_c(c, cfg.index, br)
        W11, W13, W23, W31, W21 = adaptive_matrices(k_R, k_W, c, trG, lmin, lmax, b1, b2, layout)
        for name, W in (("W13", W13), ("W31", W31)):
            _require_pd(W, name, cfg.index)
        s = SubsystemCertificate(cfg.index, lmin, lmax, c_max, br,
                                 {"W11": W11, "W13": W13, "W23": W23, "W31": W31, "W21": W21})
        s.switch_ratio = _lmin(W13) / _lmax(W23)
        subs[cfg.index] = s
    return StabilityCertificate("adaptive", gains, b1, b2, level, subs, layout=layout)


def best_c(cfgs, gains: GainSet, case="known", phi_bounds=None, phi_level=None,
           fraction=0.999) -> float:
    """Cross-term constant that minimises the dwell time (known model) or
    maximises the smallest ``lmin(W31)`` (adaptive), searched on
    ``(0, fraction * c_max)``.
    """
    b1, b2, _ = _phi_constants(gains, phi_bounds, phi_level)
    trG = gains.trace_G
    if case == "known":
        c_max = min(min(case1_branches(gains.k_R, gains.k_Omega, trG, cfg.lambda_min,
                                       cfg.lambda_max, b1, b2).values()) for cfg in cfgs)
    else:
        c_max = min(min(case2_branches(gains.k_R, gains.k_Omega, trG, cfg.lambda_min,
                                       cfg.lambda_max, b1).values()) for cfg in cfgs)
    hi = fraction * c_max

    def cost(c):
        g = GainSet(gains.k_R, gains.k_Omega, c, gains.G)
        try:
            if case == "known":
                return certify_case1(cfgs, g, (b1, b2)).tau_d
            cert = certify_case2(cfgs, g, (b1, b2))
            return -min(_lmin(s.matrices["W31"]) for s in cert.subsystems.values())
        except (InadmissibleC, NonPositiveW):
            return math.inf

    res = minimize_scalar(cost, bounds=(1e-6 * hi, hi), method="bounded",
                          options={"xatol": 1e-9 * hi})
    return float(res.x)


# --------------------------------------------------------------------------
# switching
# --------------------------------------------------------------------------


def check_switch_condition(z1_at_ti, z1_at_tj, cert: StabilityCertificate, p) -> bool:
    """Re-entry condition ``|z1(t_j)|^2 <= ratio_p |z1(t_i)|^2``.

    ``z1_at_ti``/``z1_at_tj`` are the norms of ``z1`` at the previous and
    the current entry into configuration ``p``.
    """
    ratio = cert.subsystems[p].switch_ratio
    return bool(z1_at_tj ** 2 <= ratio * z1_at_ti ** 2)


@dataclass
class SwitchPlan:
    """Settling data used to time a switch.

    ``z2_bound`` maps a configuration index to the cap on its estimation
    term of the Lyapunov function (the scaled Bregman divergence).
    """

    tau_s: float
    rho: float
    z2_bound: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.tau_s >= 0 and self.rho > 0):
            raise ValueError("tau_s must be non-negative and rho positive")


def jump_bound(cert: StabilityCertificate, plan: SwitchPlan, i, j) -> float:
    """Bound on ``|V_i - V_j|`` at a switch performed with ``|z1| <= rho``.

    ``(L_i + L_j) rho + L_i z2_i + L_j z2_j`` with ``L_p = lmax(W21_p)``.
    ``W21`` carries a unit estimation-weight, so ``L_p >= 1``; together with
    ``rho <= 1`` this keeps the linear-in-``rho`` form a valid bound.
    """
    Li = _lmax(cert.subsystems[i].matrices["W21"])
    Lj = _lmax(cert.subsystems[j].matrices["W21"])
    zi = plan.z2_bound.get(i, 0.0)
    zj = plan.z2_bound.get(j, 0.0)
    return (Li + Lj) * plan.rho + Li * zi + Lj * zj


def settling_time(t, z1_norm, rho) -> float:
    """First ``t*`` with ``|z1(t)| <= rho`` for every logged ``t >= t*``.

    Raises
    ------
    NotSettled
        The last logged sample is still outside the ball.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z1_norm, dtype=float)
    outside = np.nonzero(z > rho)[0]
    if outside.size == 0:
        return float(t[0])
    k = outside[-1]
    if k == len(t) - 1:
        raise NotSettled(f"|z1| still above rho={rho} at the end of the horizon t={t[-1]:.3f}")
    return float(t[k + 1])


def estimate_settling_time(scenario, rho) -> float:
    """Simulate ``scenario`` and return its settling time into ``|z1| <= rho``.

    The time is measured from the start of the run.
    """
    from .simulator import run

    log = run(scenario)
    return settling_time(log.t, log.z1_norm, rho)
