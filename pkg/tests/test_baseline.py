import logging

import numpy as np
import pytest

from bbb.anisotropy import TensorDecomposition, lh_matrix
from bbb.baseline import (
    BaselineDivergence,
    cfl_bound,
    theta_first_step,
    theta_scheme,
    theta_step,
)
from bbb.grid import GridSpec


def _L(N, d=1):
    return lh_matrix(TensorDecomposition.isotropic(d, N), 1 / (2 * N))


def spikes(N=128):
    """Three narrow spikes of heights 0.3, 1 and 0.7 around the middle of the grid."""
    u = np.zeros(N)
    c = N // 2
    u[c - 2:c + 4] = [0.3, 1.0, 0.0, 0.0, 0.0, 0.7]
    return u


def test_cfl_bound():
    assert cfl_bound(np.array([0.2, 1.0]), 0.01) == pytest.approx(1e-4)
    assert cfl_bound(np.array([-1.0, 0.0]), 0.01) == np.inf
    u = np.array([0.5, 2.0])
    assert cfl_bound(u, 0.02) == pytest.approx(4 * cfl_bound(u, 0.01))


def test_explicit_hand_step():
    # N_h = 4, h = 1/8: (L f)_j = (2 f_j - f_{j-1} - f_{j+1}) / (4 h^2)
    L = _L(4)
    u = np.array([0.0, 1.0, 0.0, 0.0])
    tau = 1e-3
    out = theta_step(u, 1.0, tau, L)
    np.testing.assert_allclose(out, [16 * tau, 1 - 32 * tau, 16 * tau, 0.0], atol=1e-15)


@pytest.mark.parametrize("theta", [0.0, 0.5, 1.0])
def test_constant_fixed_point(theta):
    L = _L(8)
    u = np.full(8, 0.7)
    np.testing.assert_allclose(theta_first_step(u, theta, 1e-2, L), u, atol=1e-14)
    np.testing.assert_allclose(theta_step(u, theta, 1e-2, L), u, atol=1e-14)


def test_first_step_identity_and_residual():
    L = _L(16)
    rng = np.random.default_rng(0)
    u0 = rng.uniform(0, 1, 16)
    np.testing.assert_array_equal(theta_first_step(u0, 1.0, 1e-3, L), u0)
    tau = 1e-3
    v = theta_first_step(u0, 0.0, tau, L)
    assert np.max(np.abs(v + tau * (L @ v ** 2) - u0)) <= 1e-10


def test_implicit_step_residual():
    L = _L(16)
    rng = np.random.default_rng(1)
    p = rng.uniform(0, 1, 16)
    tau, theta = 5e-3, 0.5
    v = theta_step(p, theta, tau, L)
    res = v - p + tau * (theta * (L @ p ** 2) + (1 - theta) * (L @ v ** 2))
    assert np.max(np.abs(res)) <= 1e-10


def test_theta_validation():
    s = GridSpec(0.0, 1.0, 1, 2, 4)
    with pytest.raises(ValueError):
        theta_scheme(s, np.ones(4), 1.5)


def test_explicit_nonnegative_under_cfl():
    N = 64
    h = 1 / (2 * N)
    u0 = np.maximum(0, 1 - 8 * np.abs(np.arange(N) * 2 * h - 0.5))
    tau = 0.5 * cfl_bound(u0, h)
    s = GridSpec(0.0, 2 * 200 * tau, 1, 200, N)
    u = theta_scheme(s, u0, 1.0)
    assert u.min() >= 0


def _stability_run(theta, factor, N_tau, N=128):
    u0 = spikes(N)
    tau = factor * cfl_bound(u0, 1 / (2 * N))
    return theta_scheme(GridSpec(0.0, 2 * N_tau * tau, 1, N_tau, N), u0, theta)


def test_explicit_beyond_cfl_blows_up(caplog):
    with caplog.at_level(logging.WARNING), pytest.raises(BaselineDivergence):
        _stability_run(1.0, 4.0, 200)
    assert "exceeds the explicit stability bound" in caplog.text


def test_explicit_within_cfl_stable():
    u = _stability_run(1.0, 0.5, 1600)
    assert np.all(np.isfinite(u)) and np.max(np.abs(u)) <= 1.0 + 1e-12


def test_implicit_unconditionally_stable():
    u = _stability_run(0.0, 100.0, 8)
    assert np.all(np.isfinite(u)) and np.max(np.abs(u)) <= 1.0 + 1e-9
    # mass is conserved by the divergence form
    assert u[-1].sum() == pytest.approx(spikes().sum(), rel=1e-10)
