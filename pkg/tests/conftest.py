import numpy as np
import pytest

from dpm_latent import linear_schedule, make_rng
from dpm_latent.models import GaussianMixture


def directional_fd(f, x, v, h=1e-5):
    """Central difference of scalar f along direction v."""
    return (f(x + h * v) - f(x - h * v)) / (2 * h)


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradient(f, grad, x, rng, n_probes=20, h=1e-5, tol=1e-4):
    """Compare <grad(x), v> against central differences for random unit v; returns worst error."""
    worst = 0.0
    g = grad(x)
    for _ in range(n_probes):
        v = rng.standard_normal(np.shape(x))
        v /= np.linalg.norm(v)
        worst = max(worst, rel_err(float(np.sum(g * v)), directional_fd(f, x, v, h)))
    assert worst < tol, worst
    return worst


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def sched100():
    """100-step schedule with the 1000-step betas rescaled (abar_T ~ 2e-5)."""
    return linear_schedule(1e-3, 0.2, 100)


@pytest.fixture
def sym_gm():
    return GaussianMixture([0.5, 0.5], [[-2.0], [2.0]], [[0.25], [0.25]], labels=[0, 1])


@pytest.fixture
def gm2d():
    return GaussianMixture([0.3, 0.7], [[-1.0, 1.0], [2.0, 0.0]], [[0.3, 0.2], [0.4, 0.6]])
