import numpy as np
import pytest

from bbb.perspective import (
    cubic_velocity,
    persp,
    persp2,
    persp_expand,
    prox_persp,
    prox_persp2,
    prox_rotation,
)
from oracles import grid_prox_persp, cvx_prox_persp, cvx_prox_persp2, cvx_prox_rotation


def test_persp_values():
    assert persp(1, 2) == 0.25
    assert persp(0, 0) == 0
    assert persp(1, 0) == np.inf
    assert persp(1, -1) == np.inf
    assert persp2([3, 4], 5) == 2.5
    assert persp2([0, 0], 0) == 0
    assert persp2([1, 0], 2) == 0.25


def test_persp_midpoint_convexity():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((500, 2))
    r = rng.uniform(0.01, 3, (500, 2))
    mid = persp(m.mean(1), r.mean(1))
    assert np.all(mid <= 0.5 * (persp(m[:, 0], r[:, 0]) + persp(m[:, 1], r[:, 1])) + 1e-12)


def test_prox_examples():
    assert prox_persp(1.0, 0.0, 2.0) == (0.0, 2.0)
    assert prox_persp(1.0, 0.0, -3.0) == (0.0, 0.0)
    m, r = prox_persp(1.0, 1.0, 1.0)
    assert m == pytest.approx(0.5265341922708737, abs=1e-12)
    assert r == pytest.approx(1.112084935544297, abs=1e-12)
    u = cubic_velocity(1.0, 1.0, 1.0)
    assert 0.5 * u ** 3 + 2 * u - 1 == pytest.approx(0, abs=1e-14)
    mo, ro = prox_persp2(1.0, np.array([1.0, 0.0]), 1.0)
    np.testing.assert_allclose(mo, [m, 0.0], atol=1e-14)
    assert ro == pytest.approx(r)
    mo, ro = prox_persp2(1.0, np.zeros(2), 2.0)
    np.testing.assert_array_equal(mo, 0)
    assert ro == 2.0


def test_prox_rejects_bad_step():
    with pytest.raises(ValueError):
        prox_persp(0.0, 1.0, 1.0)


def test_cubic_extremes():
    lam = np.array([1e-8, 1.0, 1e8, 1.0, 1.0])
    r = np.array([1.0, 1e12, 1.0, 1e-300, 3.0])
    rho = np.array([1.0, -1.0, 1e5, 1.0, -0.5])
    u = cubic_velocity(lam, r, rho)
    f = 0.5 * lam * u ** 3 + (rho + lam) * u - r
    assert np.all(np.abs(f) <= 1e-12 * (1 + r))


def test_prox_against_grid_oracle():
    rng = np.random.default_rng(1)
    worst = 0.0
    for lam in (0.1, 1.0, 10.0):
        for _ in range(34):
            m, rho = rng.uniform(-2, 2), rng.uniform(-2, 2)
            got = np.array(prox_persp(lam, m, rho))
            worst = max(worst, np.max(np.abs(got - grid_prox_persp(lam, m, rho))))
    assert worst <= 2e-3


def test_prox_against_cvx_oracle():
    rng = np.random.default_rng(2)
    for _ in range(25):
        lam = float(rng.choice([0.1, 1.0, 10.0]))
        m, rho = rng.uniform(-2, 2), rng.uniform(-2, 2)
        np.testing.assert_allclose(prox_persp(lam, m, rho), cvx_prox_persp(lam, m, rho), atol=1e-6)
        m2 = rng.uniform(-2, 2, 2)
        mo, ro = prox_persp2(lam, m2, rho)
        cm, cr = cvx_prox_persp2(lam, m2, rho)
        np.testing.assert_allclose(np.append(mo, ro), np.append(cm, cr), atol=1e-6)


def test_rotation_against_cvx_oracle():
    rng = np.random.default_rng(3)
    for _ in range(25):
        lam = float(rng.choice([0.1, 1.0, 10.0]))
        m, a, rho = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2), rng.uniform(-2, 2)
        got = prox_rotation(lam, m, rho, a)
        ref = cvx_prox_rotation(lam, m, rho, a)
        for g, r in zip(got, ref):
            np.testing.assert_allclose(g, r, atol=1e-6)


def test_rotation_fixed_point():
    m = np.array([0.3, -1.2])
    mo, ro, ao = prox_rotation(1.0, m, 2.0, -m)
    np.testing.assert_allclose(mo, m, atol=1e-15)
    np.testing.assert_allclose(ao, -m, atol=1e-15)
    assert ro == 2.0


def test_rotation_homogeneity():
    rng = np.random.default_rng(4)
    m, a, rho = rng.standard_normal(2), rng.standard_normal(2), 1.3
    lo = prox_rotation(0.7, m, rho, a)
    hi = prox_rotation(1.4, 2 * m, 2 * rho, 2 * a)
    for x, y in zip(lo, hi):
        np.testing.assert_allclose(2 * np.asarray(x), y, rtol=1e-12, atol=1e-14)


def test_prox2_rotation_equivariance():
    rng = np.random.default_rng(5)
    m = rng.standard_normal(2)
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    a, ra = prox_persp2(0.9, R @ m, 0.4)
    b, rb = prox_persp2(0.9, m, 0.4)
    np.testing.assert_allclose(a, R @ b, atol=1e-14)
    assert ra == pytest.approx(rb)


def _firm(prox, x, y):
    px, py = prox(x), prox(y)
    d = px - py
    return d @ d <= d @ (x - y) + 1e-12


def test_firm_nonexpansive():
    rng = np.random.default_rng(6)
    for _ in range(100):
        lam = rng.uniform(0.1, 10)
        x, y = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2)
        assert _firm(lambda z: np.array(prox_persp(lam, z[0], z[1])), x, y)
        x3, y3 = rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3)

        def p2(z):
            mo, ro = prox_persp2(lam, z[:2], z[2])
            return np.append(mo, ro)
        assert _firm(p2, x3, y3)


def test_prox_feasible_outputs():
    rng = np.random.default_rng(7)
    m = rng.uniform(-5, 5, 10000)
    r = rng.uniform(-5, 5, 10000)
    mo, ro = prox_persp(rng.uniform(0.01, 10), m, r)
    assert np.all(ro >= 0)
    assert np.all(mo[ro == 0] == 0)


def test_expand_example():
    base, lin, rem = persp_expand(1.0, 2.0, 1.0, 1.0)
    assert base == 0.25
    assert lin == pytest.approx(0.375)
    assert rem == pytest.approx(1 / 24)
    assert base + lin + rem == pytest.approx(persp(2.0, 3.0))
    _, lin0, rem0 = persp_expand(1.0, 2.0, 0.0, 0.0)
    assert lin0 == 0 and rem0 == 0


def test_expand_identity_random():
    rng = np.random.default_rng(8)
    m = rng.standard_normal(1000)
    rho = rng.uniform(0.05, 3, 1000)
    dm = rng.standard_normal(1000)
    drho = rng.uniform(-0.04, 3, 1000)
    base, lin, rem = persp_expand(m, rho, dm, drho)
    total = persp(m + dm, rho + drho)
    np.testing.assert_allclose(base + lin + rem, total, rtol=1e-12, atol=1e-12)
