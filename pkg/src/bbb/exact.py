"""Closed-form reference solutions.

Barenblatt profile of u_t = Delta(u^2)/2 in dimension d, together with the
optimal dual potential phi on [0, T] and its momentum and density; the
Hopf-Cole solution of viscous Burgers started from a Dirac mass; and a
measure preserving map of the torus that turns the Barenblatt profile into a
solution of the anisotropic equation with D = (Dpsi^T Dpsi)^-1.
"""

from __future__ import annotations

import numpy as np
from scipy import special


def barenblatt_exponents(d: int) -> tuple[float, float]:
    """(alpha, beta) = (d / (d + 2), 1 / (d + 2))."""
    return d / (d + 2), 1.0 / (d + 2)


def barenblatt_radius(t, d: int, gamma: float = 1.0):
    """Support radius nu_B t^beta with nu_B = 2 sqrt((d + 2) gamma)."""
    _, beta = barenblatt_exponents(d)
    return 2 * np.sqrt((d + 2) * gamma) * np.asarray(t, dtype=float) ** beta


def _r2(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x * x
    return np.sum(x * x, axis=-1)


def barenblatt_u(t: float, x, d: int, gamma: float = 1.0) -> np.ndarray:
    """u = (2 / t^alpha) max(0, gamma - beta |x|^2 / (4 t^(2 beta))); x relative to the center."""
    alpha, beta = barenblatt_exponents(d)
    return 2.0 / t ** alpha * np.maximum(0.0, gamma - beta * _r2(x, d) / (4 * t ** (2 * beta)))


def barenblatt_dual(t: float, x, d: int, T: float, gamma: float = 1.0):
    """Optimal (phi, m, rho) at time t in [0, T] for Barenblatt data started at 0."""
    alpha, beta = barenblatt_exponents(d)
    r2 = _r2(x, d)
    r = np.sqrt(r2)
    R_t = barenblatt_radius(t, d, gamma)
    R_T = barenblatt_radius(T, d, gamma)
    inner = r < R_t
    middle = (r >= R_t) & (r < R_T)
    phi_in = 2 / T ** alpha * gamma * (t - T) + r2 / (2 * d) * (1 - (t / T) ** alpha)
    phi_mid = (-2 * gamma * T ** (1 - alpha) + r2 / (2 * d)
               - r ** (d + 2) / (d * (d + 2) * R_T ** d))
    phi = np.where(inner, phi_in, np.where(middle, phi_mid, 0.0))
    if t > 0:
        m = 2 / T ** alpha * np.maximum(0.0, gamma - beta * r2 / (4 * t ** (2 * beta)))
    else:
        m = np.full_like(r, 2 * gamma / T ** alpha)
    rho = np.where(inner, (t / T) ** alpha, np.where(middle, 2 * (r / R_T) ** d, 1.0))
    return phi, m, rho


def hopf_cole(t: float, x, nu: float, Re: float) -> np.ndarray:
    """Viscous Burgers from the mass 2 nu Re delta_0.

    u = sqrt(nu/(pi t)) delta e^{-z^2} / (1 + delta erfc(z) / 2), z = x / sqrt(4 nu t),
    delta = e^Re - 1.  Evaluated through the scaled complementary error function
    so that neither tail overflows.
    """
    x = np.asarray(x, dtype=np.float64)
    z = x / np.sqrt(4 * nu * t)
    log_delta = np.log(np.expm1(Re)) if Re < 700 else Re
    pref = np.sqrt(nu / (np.pi * t))
    out = np.empty_like(z)
    pos = z >= 0
    # z >= 0: erfc(z) = e^{-z^2} erfcx(z)
    zp = z[pos]
    with np.errstate(over="ignore"):
        out[pos] = pref / (np.exp(zp * zp - log_delta) + 0.5 * special.erfcx(zp))
    zn = z[~pos]
    out[~pos] = pref * np.exp(log_delta - zn * zn) / (1 + np.exp(log_delta) * 0.5 * special.erfc(zn))
    return out


def hopf_cole_mass(nu: float, Re: float) -> float:
    return 2 * nu * Re


# ---------------------------------------------------------------------------
# mapped anisotropic Barenblatt

def psi_map(x, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Composition of four periodic shears; returns (psi(x), Dpsi(x)).

    x has shape (..., 2).  Each shear has unit Jacobian, so det Dpsi = 1.
    """
    x = np.asarray(x, dtype=np.float64)
    x0, y0 = x[..., 0], x[..., 1]

    def shear_x(a, b, k, c):  # a += eps sin(k pi b + c)
        return a + eps * np.sin(k * np.pi * b + c), eps * k * np.pi * np.cos(k * np.pi * b + c)

    x1, g1 = shear_x(x0, y0, 2, 1.0)
    y1, g2 = shear_x(y0, x1, 4, 5.0)
    x2, g3 = shear_x(x1, y1, 4, 3.0)
    y2, g4 = shear_x(y1, x2, 2, 2.0)

    def mat(a, b, c, d):
        return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)

    one, zero = np.ones_like(x0), np.zeros_like(x0)
    J1 = mat(one, g1, zero, one)
    J2 = mat(one, zero, g2, one)
    J3 = mat(one, g3, zero, one)
    J4 = mat(one, zero, g4, one)
    J = J4 @ J3 @ J2 @ J1
    return np.stack([x2, y2], -1), J


def mapped_tensor(x, eps: float) -> np.ndarray:
    """D(x) = (Dpsi^T Dpsi)^-1."""
    _, J = psi_map(x, eps)
    return np.linalg.inv(np.swapaxes(J, -1, -2) @ J)


def mapped_anisotropic(t: float, x, eps: float, gamma: float = 1.0,
                       center=(0.5, 0.5)) -> tuple[np.ndarray, np.ndarray]:
    """Barenblatt profile composed with psi on the unit torus, and the tensor field D."""
    y, J = psi_map(x, eps)
    rel = y - np.asarray(center)
    rel = rel - np.round(rel)
    u = barenblatt_u(t, rel, 2, gamma)
    D = np.linalg.inv(np.swapaxes(J, -1, -2) @ J)
    return u, D


def distortion_ratio(J: np.ndarray) -> np.ndarray:
    """Ratio of the extreme singular values of Dpsi."""
    s = np.linalg.svd(J, compute_uv=False)
    return s[..., 0] / s[..., -1]


# ---------------------------------------------------------------------------
# duality check

def no_gap_sides(T0: float, T: float, gamma: float = 1.0, n: int = 1000) -> tuple[float, float]:
    """Both sides of int u^2/2 = int (-m^2/(2 rho) + m u0) over [T0, T] x R, d = 1.

    u is the Barenblatt profile, u0 = u(T0) and (m, rho) the closed-form
    optimal dual pair.  Tensor Gauss-Legendre quadrature with n nodes per
    axis, the space integral split at the kinks +-R(T0) and +-R(t).
    """
    d = 1
    tg, tw = np.polynomial.legendre.leggauss(n)
    ts = T0 + 0.5 * (T - T0) * (tg + 1)
    wt = 0.5 * (T - T0) * tw
    R0 = float(barenblatt_radius(T0, d, gamma))
    primal = dual = 0.0
    for t, w in zip(ts, wt):
        Rt = float(barenblatt_radius(t, d, gamma))
        xs = Rt * tg
        primal += w * Rt * np.sum(tw * 0.5 * barenblatt_u(t, xs, d, gamma) ** 2)
        for a, b in ((-Rt, -R0), (-R0, R0), (R0, Rt)):
            xs = 0.5 * (b - a) * tg + 0.5 * (a + b)
            _, m, rho = barenblatt_dual(t, xs, d, T, gamma)
            f = -m * m / (2 * rho) + m * barenblatt_u(T0, xs, d, gamma)
            dual += w * 0.5 * (b - a) * np.sum(tw * f)
    return float(primal), float(dual)
