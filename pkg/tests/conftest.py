import os

import numpy as np
import pytest

# single-threaded BLAS keeps timings stable and results bitwise repeatable
os.environ.setdefault("OMP_NUM_THREADS", "1")

from morphsim import rigid_body as rb  # noqa: E402
from morphsim.so3 import GainSet  # noqa: E402

REFERENCE_GAINS = dict(k_R=0.0424, k_Omega=0.0296)
G_DEFAULT = (0.9, 1.0, 1.1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def configs():
    return rb.default_configurations()


@pytest.fixture
def gains():
    return GainSet(0.0424, 0.0296, 0.004, G_DEFAULT)


def random_spd_params(rng, scale=0.02):
    """Inertia parameters of a random physically consistent body."""
    while True:
        Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        d = rng.uniform(0.2, 1.0, size=3) * scale
        J = Q @ np.diag(d) @ Q.T
        h = rb.extract_params(J)
        if rb.is_physically_consistent(h, tol=1e-6 * scale):
            return h
