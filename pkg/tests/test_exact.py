import mpmath
import numpy as np
import pytest

from bbb.exact import (
    barenblatt_dual,
    barenblatt_exponents,
    barenblatt_radius,
    barenblatt_u,
    distortion_ratio,
    hopf_cole,
    hopf_cole_mass,
    mapped_anisotropic,
    mapped_tensor,
    no_gap_sides,
    psi_map,
)


def test_barenblatt_values():
    assert barenblatt_u(1.0, 0.0, 1) == pytest.approx(2.0)
    R = barenblatt_radius(1.0, 1)
    assert R == pytest.approx(2 * np.sqrt(3))
    assert barenblatt_u(1.0, R, 1) == pytest.approx(0.0, abs=1e-14)
    assert barenblatt_u(1.0, 1.1 * R, 1) == 0
    # 2D: x given as points
    R2 = barenblatt_radius(0.5, 2, 2.0)
    assert barenblatt_u(0.5, np.array([R2, 0.0]), 2, 2.0) == pytest.approx(0.0, abs=1e-13)
    assert barenblatt_exponents(2) == (0.5, 0.25)


def test_barenblatt_mass_conserved():
    # in 1D with gamma = 1 the mass is 16 sqrt(3) / 3 at every time
    x, w = np.polynomial.legendre.leggauss(200)
    for t in (1e-4, 1e-3, 1.0):
        R = float(barenblatt_radius(t, 1))
        mass = R * np.sum(w * barenblatt_u(t, R * x, 1))
        assert mass == pytest.approx(16 * np.sqrt(3) / 3, rel=1e-12)


def test_dual_terminal_and_m_equals_rho_u():
    T = 1e-3
    x = np.linspace(-0.5, 0.5, 101)
    phi, m, rho = barenblatt_dual(T, x, 1, T)
    np.testing.assert_allclose(phi, 0, atol=1e-15)
    np.testing.assert_allclose(rho, 1, atol=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(20):
        t = rng.uniform(1e-5, T)
        xs = rng.uniform(-0.3, 0.3, 50)
        _, m, rho = barenblatt_dual(t, xs, 1, T)
        np.testing.assert_allclose(m, rho * barenblatt_u(t, xs, 1), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("d", [1, 2])
def test_dual_phi_continuous(d):
    T = 1e-3
    rng = np.random.default_rng(d)
    for _ in range(10):
        t = rng.uniform(1e-4, T)
        for R in (barenblatt_radius(t, d), barenblatt_radius(T, d)):
            e = np.zeros(d)
            e[0] = 1.0
            lo = barenblatt_dual(t, (R * (1 - 1e-13)) * e, d, T)[0]
            hi = barenblatt_dual(t, (R * (1 + 1e-13)) * e, d, T)[0]
            assert abs(lo - hi) <= 1e-12


def test_dual_continuity_weak_form():
    # d_t rho + Delta m = 0 against a smooth test function vanishing at both ends in time
    T0, T = 1e-4, 1e-3
    sigma = 0.05

    def residual(n):
        tg, tw = np.polynomial.legendre.leggauss(n)
        ts = T0 + 0.5 * (T - T0) * (tg + 1)
        wt = 0.5 * (T - T0) * tw
        xs = np.linspace(-0.4, 0.4, 8 * n + 1)
        dx = xs[1] - xs[0]
        g = np.exp(-(xs - 0.02) ** 2 / (2 * sigma ** 2))
        gxx = g * (((xs - 0.02) / sigma ** 2) ** 2 - 1 / sigma ** 2)
        total = scale = 0.0
        for t, w in zip(ts, wt):
            a = np.pi * (t - T0) / (T - T0)
            chi_t = np.pi / (T - T0) * np.sin(2 * a)
            chi = np.sin(a) ** 2
            _, m, rho = barenblatt_dual(t, xs, 1, T)
            f = -rho * chi_t * g + m * chi * gxx
            total += w * dx * np.sum(f)
            scale += w * dx * np.sum(np.abs(rho * chi_t * g))
        return abs(total) / scale

    coarse, fine = residual(40), residual(160)
    assert fine < coarse and fine < 1e-3


def test_barenblatt_weak_solution():
    # u_t = Delta(u^2)/2 tested against the same kind of test function
    T0, T = 1e-4, 1e-3
    sigma = 0.05

    def residual(n):
        tg, tw = np.polynomial.legendre.leggauss(n)
        ts = T0 + 0.5 * (T - T0) * (tg + 1)
        wt = 0.5 * (T - T0) * tw
        xs = np.linspace(-0.4, 0.4, 8 * n + 1)
        dx = xs[1] - xs[0]
        g = np.exp(-(xs - 0.02) ** 2 / (2 * sigma ** 2))
        gxx = g * (((xs - 0.02) / sigma ** 2) ** 2 - 1 / sigma ** 2)
        total = scale = 0.0
        for t, w in zip(ts, wt):
            a = np.pi * (t - T0) / (T - T0)
            chi_t = np.pi / (T - T0) * np.sin(2 * a)
            u = barenblatt_u(t, xs, 1)
            total += w * dx * np.sum(u * chi_t * g + 0.5 * u * u * np.sin(a) ** 2 * gxx)
            scale += w * dx * np.sum(np.abs(u * chi_t * g))
        return abs(total) / scale

    coarse, fine = residual(40), residual(160)
    assert fine < coarse and fine < 1e-3


def test_hopf_cole_tail_and_mass():
    nu, Re = 1e-2, 5.0
    assert hopf_cole(0.5, np.array([50.0]), nu, Re)[0] == pytest.approx(0, abs=1e-300)
    x, w = np.polynomial.legendre.leggauss(4000)
    a, b = -3.0, 4.0
    xs = 0.5 * (b - a) * x + 0.5 * (a + b)
    mass = 0.5 * (b - a) * np.sum(w * hopf_cole(0.3, xs, nu, Re))
    assert mass == pytest.approx(hopf_cole_mass(nu, Re), rel=1e-6)


def test_hopf_cole_high_precision():
    mpmath.mp.dps = 50
    for t, x, nu, Re in ((0.1, 0.0, 1e-2, 5.0), (0.7, 0.31, 1e-2, 5.0), (0.5, -0.2, 1e-3, 50.0),
                         (0.5, 0.4, 1e-3, 50.0)):
        z = mpmath.mpf(x) / mpmath.sqrt(4 * mpmath.mpf(nu) * t)
        delta = mpmath.expm1(Re)
        ref = mpmath.sqrt(mpmath.mpf(nu) / (mpmath.pi * t)) * delta * mpmath.exp(-z * z) \
            / (1 + delta * mpmath.erfc(z) / 2)
        got = hopf_cole(t, np.array([x]), nu, Re)[0]
        assert np.isfinite(got) and got > 0
        assert got == pytest.approx(float(ref), rel=1e-12)


def test_hopf_cole_pde_residual():
    nu, Re, t = 1e-2, 5.0, 0.5
    xs = np.linspace(-0.3, 0.6, 31)

    def res(dlt):
        u = lambda tt, xx: hopf_cole(tt, xx, nu, Re)
        ut = (u(t + dlt, xs) - u(t - dlt, xs)) / (2 * dlt)
        ux = (u(t, xs + dlt) - u(t, xs - dlt)) / (2 * dlt)
        uxx = (u(t, xs + dlt) - 2 * u(t, xs) + u(t, xs - dlt)) / dlt ** 2
        return np.max(np.abs(ut + u(t, xs) * ux - nu * uxx))

    r1, r2 = res(2e-3), res(1e-3)
    assert r2 < r1 / 3


def test_psi_measure_preserving_and_distortion():
    rng = np.random.default_rng(3)
    x = rng.random((1000, 2))
    _, J = psi_map(x, 0.035)
    np.testing.assert_allclose(np.linalg.det(J), 1, atol=1e-12)
    g = (np.arange(200) + 0.5) / 200
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1)
    ratio = distortion_ratio(psi_map(pts, 0.035)[1]).max()
    assert 3.3 <= ratio <= 3.8
    y, J0 = psi_map(x, 0.0)
    np.testing.assert_array_equal(y, x)
    np.testing.assert_allclose(J0, np.broadcast_to(np.eye(2), J0.shape))
    np.testing.assert_allclose(mapped_tensor(x, 0.0), np.broadcast_to(np.eye(2), J0.shape))


def test_psi_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = rng.random((20, 2))
    _, J = psi_map(x, 0.035)
    eps = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        col = (psi_map(x + e, 0.035)[0] - psi_map(x - e, 0.035)[0]) / (2 * eps)
        np.testing.assert_allclose(J[..., k], col, atol=1e-8)


def test_mapped_profile():
    rng = np.random.default_rng(5)
    x = rng.random((100, 2))
    u, D = mapped_anisotropic(1e-4, x, 0.035)
    y, _ = psi_map(x, 0.035)
    rel = y - 0.5
    rel -= np.round(rel)
    np.testing.assert_allclose(u, barenblatt_u(1e-4, rel, 2))
    assert np.all(np.linalg.eigvalsh(D) > 0)


def test_no_gap_identity():
    p, d = no_gap_sides(1e-4, 1e-3, 1.0, 1000)
    assert p == pytest.approx(d, rel=1e-2)
    p2, d2 = no_gap_sides(1e-4, 1e-3, 2.0, 1000)
    assert p2 == pytest.approx(d2, rel=1e-2)
    assert p2 / p == pytest.approx(d2 / d, rel=2e-2)
    pz, dz = no_gap_sides(1e-4, 1e-4 * (1 + 1e-9), 1.0, 50)
    assert abs(pz) < 1e-9 and abs(dz) < 1e-9
