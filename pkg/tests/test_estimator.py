import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphsim import estimator as est
from morphsim import rigid_body as rb
from morphsim.errors import InfeasibleParams, SingularHessian

from conftest import random_spd_params

seeds = st.integers(0, 2**32 - 1)


def _psi_oracle(h):
    return -math.log(np.linalg.det(rb.consistency_matrix(h)))


def _bregman_oracle(h, hh):
    return est.psi(h) - est.psi(hh) - (h - hh) @ est.psi_gradient(hh)


@given(seeds)
@settings(max_examples=50)
def test_psi_is_minus_logdet(seed):
    h = random_spd_params(np.random.default_rng(seed))
    assert est.psi(h) == pytest.approx(_psi_oracle(h), rel=1e-12)


@given(seeds)
@settings(max_examples=50)
def test_hessian_is_positive_definite(seed):
    h = random_spd_params(np.random.default_rng(seed))
    H = est.psi_hessian(h)
    assert np.allclose(H, H.T)
    assert np.linalg.eigvalsh(H)[0] > 0


@given(seeds, seeds)
@settings(max_examples=50)
def test_bregman_matches_definition(s1, s2):
    h = random_spd_params(np.random.default_rng(s1))
    hh = random_spd_params(np.random.default_rng(s2))
    d = est.bregman_divergence(h, hh)
    assert d >= 0
    assert d == pytest.approx(_bregman_oracle(h, hh), rel=1e-8, abs=1e-12)


def test_bregman_small_perturbation_is_quadratic(rng):
    h = random_spd_params(rng)
    dh = rng.normal(size=6) * 1e-7
    q = 0.5 * dh @ est.psi_hessian(h) @ dh
    assert est.bregman_divergence(h + dh, h) == pytest.approx(q, rel=1e-5)


def test_infeasible_points_raise():
    bad = np.array([1.0, 0.1, 0.1, 0, 0, 0])  # violates the triangle inequality
    for fn in (est.psi, est.psi_gradient, est.psi_hessian):
        with pytest.raises(InfeasibleParams):
            fn(bad)
    with pytest.raises(InfeasibleParams):
        est.update_rate(bad, np.zeros((3, 6)), np.zeros(3))
    with pytest.raises(InfeasibleParams):
        est.EstimatorState({1: bad})


def test_update_rate_is_natural_gradient(rng):
    h = random_spd_params(rng)
    Y = rng.normal(size=(3, 6))
    e = rng.normal(size=3)
    dh = est.update_rate(h, Y, e, gain=3.0)
    assert np.allclose(est.psi_hessian(h) @ dh, -3.0 * Y.T @ e)


def test_update_rate_rejects_ill_conditioned_metric():
    # nearly degenerate P: one principal moment almost the sum of the others
    h = np.array([1.0, 1.0, 2.0 - 1e-9, 0, 0, 0])
    with pytest.raises(SingularHessian):
        est.update_rate(h, np.ones((3, 6)), np.ones(3))


def test_lyapunov_term_rate_matches_update(rng):
    # d/dt [d(h, h_hat)/gain] = (h_hat - h)' H(h_hat) dh_hat / gain = -(h_hat - h)' Y' e_A
    h, hh = random_spd_params(rng), random_spd_params(rng)
    Y, e = rng.normal(size=(3, 6)), rng.normal(size=3)
    gain = 7.0
    dh = est.update_rate(hh, Y, e, gain)
    s = 1e-7
    fd = (est.bregman_divergence(h, hh + s * dh) - est.bregman_divergence(h, hh - s * dh)) / (2 * s)
    assert fd / gain == pytest.approx(-(hh - h) @ Y.T @ e, rel=1e-5)


def test_estimator_bank_is_persistent():
    cfgs = rb.default_configurations()
    bank = est.EstimatorState.from_configurations(cfgs)
    new = bank.replace(1, bank[1] * 1.1)
    assert np.array_equal(bank[1], cfgs[0].nominal_inertia)
    assert new[2] is bank[2]
    cp = new.copy()
    cp.bank[2][0] = 9.0
    assert new[2][0] != 9.0
