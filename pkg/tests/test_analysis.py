import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from morphsim import analysis as an
from morphsim import so3
from morphsim.errors import InadmissibleC, NonPositiveW, NotSettled

G = (0.9, 1.0, 1.1)


def eig2(W):
    """Closed-form eigenvalues of a symmetric 2x2 matrix."""
    a, b, d = W[0][0], W[0][1], W[1][1]
    m, r = 0.5 * (a + d), math.hypot(0.5 * (a - d), b)
    return m - r, m + r


def _sample_states(n, level, seed):
    rng = np.random.default_rng(seed)
    Q = Rotation.random(4 * n, random_state=seed).as_matrix()
    keep = [q for q in Q if so3.error_function(q, np.eye(3), G) < level][:n]
    W = rng.normal(size=(len(keep), 3)) * rng.uniform(0.01, 3, size=(len(keep), 1))
    return keep, W


# Phi bounds -----------------------------------------------------------------


def test_default_level():
    assert an.default_phi_level(G) == pytest.approx(0.9 * 1.9)
    assert an.default_phi_level((1.5, 1.6, 1.7)) == pytest.approx(1.8)


def test_phi_bounds_frozen_values():
    b1, b2 = an.certify_phi_bounds(G)
    # the infimum is the small-angle limit about x: 1/(g_y + g_z), widened by 1%
    assert b1 == pytest.approx(0.99 / 2.1, rel=1e-6)
    assert b2 == pytest.approx(5.3044, rel=2e-3)


def test_small_angle_ratio():
    for i in range(3):
        axis = np.eye(3)[i]
        others = sum(G) - G[i]
        assert an.small_angle_ratio(G, axis) == pytest.approx(1.0 / others)
        R = so3.exp_so3(1e-5 * axis)
        e = so3.rotation_error_vector(R, np.eye(3), G)
        assert so3.error_function(R, np.eye(3), G) / (e @ e) == pytest.approx(1 / others, rel=1e-6)


def test_phi_ratio_unbounded_near_half_turns():
    # near a half-turn about x, e_R vanishes while Phi stays near g_y + g_z
    R = so3.exp_so3([math.pi - 1e-4, 0, 0])[None]
    ratio, phi = an.phi_ratio(R, G)
    assert phi[0] == pytest.approx(2.1, rel=1e-6)
    assert ratio[0] > 1e6


# known-model certificate ----------------------------------------------------


def test_known_model_beta_oracle(configs):
    gains = so3.GainSet(0.0424, 0.0296, 0.004, G)
    cert = an.certify_case1(configs, gains)
    b1, b2 = cert.b1, cert.b2
    trG = sum(G)
    for cfg in configs:
        lo, hi = cfg.lambda_min, cfg.lambda_max
        c, kR, kW = 0.004, 0.0424, 0.0296
        W2 = [[b2 * kR, c / 2], [c / 2, hi / 2]]
        W3 = [[c * kR / hi, -c * kW / (2 * lo)], [-c * kW / (2 * lo), kW - c * trG / math.sqrt(2)]]
        beta = eig2(W3)[0] / (2 * eig2(W2)[1])
        assert cert[cfg.index].beta == pytest.approx(beta, rel=1e-12)
    # dwell time: log(prod lmax W2 / prod lmin W1) / (2 sum beta)
    num = sum(math.log(eig2(cert[p].matrices["W2"])[1]) for p in (1, 2))
    den = sum(math.log(eig2(cert[p].matrices["W1"])[0]) for p in (1, 2))
    assert cert.tau_d == pytest.approx((num - den) / (2 * (cert[1].beta + cert[2].beta)))


def test_known_model_quadratic_bounds(configs):
    gains = so3.GainSet(0.0424, 0.0296, 0.004, G)
    cert = an.certify_case1(configs, gains)
    Qs, Ws = _sample_states(3000, cert.phi_level, 7)
    for cfg in configs:
        W1, W2 = cert[cfg.index].matrices["W1"], cert[cfg.index].matrices["W2"]
        for Q, w in zip(Qs, Ws):
            e = so3.attitude_errors(Q, w, np.eye(3), np.zeros(3), np.zeros(3), G, gains.c)
            V = 0.5 * w @ cfg.J @ w + gains.k_R * e.phi + gains.c * e.e_R @ e.e_Omega
            z = e.z1
            assert z @ W1 @ z <= V * (1 + 1e-12)
            assert V <= z @ W2 @ z * (1 + 1e-12)


def test_known_model_inadmissible_c(configs):
    with pytest.raises(InadmissibleC) as info:
        an.certify_case1(configs, so3.GainSet(0.0424, 0.0296, 0.5, G))
    assert info.value.branch is not None
    assert info.value.c_max < 0.5


def test_best_c_is_admissible_and_optimal(configs):
    probe = so3.GainSet(0.0424, 0.0296, 1.0, G)
    c = an.best_c(configs, probe, "known")
    cert = an.certify_case1(configs, so3.GainSet(0.0424, 0.0296, c, G))
    assert 0 < c < cert.c_max
    for f in (0.8, 1.2):
        try:
            other = an.certify_case1(configs, so3.GainSet(0.0424, 0.0296, f * c, G))
        except (InadmissibleC, NonPositiveW):
            continue
        assert other.tau_d >= cert.tau_d


# adaptive certificate -------------------------------------------------------


def test_adaptive_bounds_consistent_layout(configs):
    gains = so3.GainSet(0.0424, 0.0296, 0.2, G)
    cert = an.certify_case2(configs, gains, layout="consistent")
    Qs, Ws = _sample_states(3000, cert.phi_level, 11)
    for cfg in configs:
        s = cert[cfg.index]
        lo, hi = eig2(s.matrices["W13"])[0], eig2(s.matrices["W23"])[1]
        for Q, w in zip(Qs, Ws):
            e = so3.attitude_errors(Q, w, np.eye(3), np.zeros(3), np.zeros(3), G, gains.c)
            V = 0.5 * w @ cfg.J @ w + gains.k_R * e.phi + gains.c * e.e_R @ cfg.J @ w
            zz = e.z1 @ e.z1
            assert lo * zz <= V * (1 + 1e-12)
            assert V <= hi * zz * (1 + 1e-12)
        assert s.switch_ratio == pytest.approx(lo / hi)
        assert 0 < s.switch_ratio < 1


def test_printed_layout_upper_bound_can_fail(configs):
    # the printed upper matrix halves the entries, so as a quadratic form in z1
    # it undercuts V for a pure rate error
    gains = so3.GainSet(0.0424, 0.0296, 0.2, G)
    cert = an.certify_case2(configs, gains, layout="printed")
    cfg = configs[0]
    w = np.linalg.eigh(cfg.J)[1][:, -1]
    V = 0.5 * w @ cfg.J @ w
    z = np.array([0.0, 1.0])
    assert V > z @ cert[1].matrices["W23"] @ z
    consistent = an.certify_case2(configs, gains, layout="consistent")
    assert V <= z @ consistent[1].matrices["W23"] @ z


def test_jump_bound_formula(configs):
    gains = so3.GainSet(0.0424, 0.0296, 0.2, G)
    cert = an.certify_case2(configs, gains)
    plan = an.SwitchPlan(8.0, 0.05, {1: 0.01, 2: 0.02})
    L1 = eig2(cert[1].matrices["W21"][:2, :2])[1]
    L2 = eig2(cert[2].matrices["W21"][:2, :2])[1]
    L1, L2 = max(L1, 1.0), max(L2, 1.0)
    expected = (L1 + L2) * 0.05 + L1 * 0.01 + L2 * 0.02
    assert an.jump_bound(cert, plan, 1, 2) == pytest.approx(expected)


def test_switch_condition(configs):
    cert = an.certify_case2(configs, so3.GainSet(0.0424, 0.0296, 0.2, G))
    r = cert[1].switch_ratio
    assert an.check_switch_condition(1.0, math.sqrt(r) * 0.999, cert, 1)
    assert not an.check_switch_condition(1.0, math.sqrt(r) * 1.001, cert, 1)


def test_adaptive_inadmissible_c(configs):
    with pytest.raises(InadmissibleC):
        an.certify_case2(configs, so3.GainSet(0.0424, 0.0296, 5.0, G))
    with pytest.raises(ValueError):
        an.adaptive_matrices(1, 1, 0.1, 3, 1, 2, 0.5, 5, layout="other")


def test_certificate_serialises(configs):
    cert = an.certify_case1(configs, so3.GainSet(0.0424, 0.0296, 0.004, G))
    d = cert.to_dict()
    assert d["case"] == "known" and set(d["subsystems"]) == {"1", "2"}
    assert d["tau_d_pairwise"]["1-2"] == pytest.approx(cert.tau_d)


# settling -------------------------------------------------------------------


def test_settling_time():
    t = np.arange(6.0)
    assert an.settling_time(t, [1, 0.5, 0.01, 0.2, 0.01, 0.0], 0.05) == 4.0
    assert an.settling_time(t, np.zeros(6), 0.05) == 0.0
    with pytest.raises(NotSettled):
        an.settling_time(t, [0, 0, 0, 0, 0, 1], 0.05)
    with pytest.raises(ValueError):
        an.SwitchPlan(-1.0, 0.1)
