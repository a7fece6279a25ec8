"""The perspective function P(m, rho) = |m|^2 / (2 rho) and its proximal maps.

P is convex, lower semicontinuous and 2-homogeneous in m.  Its proximal
operator reduces to the positive root of a cubic: away from the apex region
rho + |m|^2 / (2 lam) <= 0, the minimizer of

    0.5 |m' - m|^2 + 0.5 (rho' - rho)^2 + lam P(m', rho')

is (m - lam u, rho + lam u^2 / 2) with u the velocity m' / rho', solving
(lam / 2) u^3 + (rho + lam) u - |m| = 0.
"""

from __future__ import annotations

import numpy as np

_ROOT_TOL = 1e-14
_MAX_NEWTON = 200


def persp(m, rho):
    """P(m, rho) elementwise: m^2/(2 rho), 0 at the origin, +inf elsewhere."""
    m = np.asarray(m, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(rho > 0, m * m / (2 * np.where(rho > 0, rho, 1.0)), np.inf)
    val = np.where((rho == 0) & (m == 0), 0.0, val)
    return val[()] if val.ndim == 0 else val


def persp2(m, rho):
    """Perspective with vector argument; m has its components on the last axis."""
    m = np.asarray(m, dtype=np.float64)
    return persp(np.sqrt(np.sum(m * m, axis=-1)), rho)


def cubic_velocity(lam, r, rho):
    """Positive root u of (lam/2) u^3 + (rho + lam) u - r = 0 for r >= 0.

    On u >= 0 the cubic is convex with a negative value at 0, so Newton's
    method started above the root decreases monotonically onto it.  Entries
    where a Newton step leaves the bracket fall back to bisection.
    """
    lam = np.asarray(lam, dtype=np.float64)
    r, rho = np.broadcast_arrays(np.asarray(r, dtype=np.float64), np.asarray(rho, dtype=np.float64))
    lam = np.broadcast_to(lam, r.shape)
    c = rho + lam
    cube = np.cbrt(2 * r / lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.where(c > 0, r / np.where(c > 0, c, 1.0), np.inf)
    hi = np.where(c >= 0, np.minimum(cube, lin), cube + np.sqrt(np.maximum(-2 * c / lam, 0.0)))
    lo = np.zeros_like(hi)
    u = hi.copy()
    tol = _ROOT_TOL * (1 + r)
    for _ in range(_MAX_NEWTON):
        f = 0.5 * lam * u ** 3 + c * u - r
        todo = np.abs(f) > tol
        if not todo.any():
            break
        hi = np.where(f > 0, np.minimum(hi, u), hi)
        lo = np.where(f < 0, np.maximum(lo, u), lo)
        fp = 1.5 * lam * u ** 2 + c
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(fp > 0, u - f / fp, np.nan)
        ok = np.isfinite(step) & (step >= lo) & (step <= hi)
        new = np.where(ok, step, 0.5 * (lo + hi))
        # Stop once the bracket cannot shrink further in floating point.
        stuck = (new == u) | (hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1e-300))
        u = np.where(todo, new, u)
        if np.all(~todo | stuck):
            break
    return u


def prox_persp(lam, m, rho):
    """Proximal map of lam * P at (m, rho); returns (m', rho')."""
    if np.any(np.asarray(lam) <= 0):
        raise ValueError("prox step must be positive")
    m = np.asarray(m, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    r = np.abs(m)
    apex = rho + r * r / (2 * lam) <= 0
    u = cubic_velocity(lam, np.where(apex, 0.0, r), np.where(apex, 1.0, rho))
    u = np.where(apex, 0.0, u) * np.sign(m)
    mo = np.where(apex, 0.0, m - lam * u)
    ro = np.where(apex, 0.0, rho + 0.5 * lam * u * u)
    if mo.ndim == 0:
        return float(mo), float(ro)
    return mo, ro


def prox_persp2(lam, m, rho):
    """Proximal map of lam * P with vector m (components on the last axis)."""
    if np.any(np.asarray(lam) <= 0):
        raise ValueError("prox step must be positive")
    m = np.asarray(m, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    r = np.sqrt(np.sum(m * m, axis=-1))
    apex = rho + r * r / (2 * lam) <= 0
    u = cubic_velocity(lam, np.where(apex, 0.0, r), np.where(apex, 1.0, rho))
    u = np.where(apex, 0.0, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0, 1 - lam * u / np.where(r > 0, r, 1.0), 1.0)
    scale = np.where(apex, 0.0, scale)
    mo = scale[..., None] * m
    ro = np.where(apex, 0.0, rho + 0.5 * lam * u * u)
    return mo, (float(ro) if np.ndim(ro) == 0 else ro)


def prox_rotation(lam, m, rho, a, prox2=prox_persp2):
    """Proximal map of lam * F where F(m, rho, a) = f(m + a, rho).

    f must be 2-homogeneous in its first argument.  In the rotated variables
    p = (m + a)/sqrt(2), q = (m - a)/sqrt(2) the function is 2 f(p, rho) and
    does not depend on q.
    """
    m = np.asarray(m, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    s = np.sqrt(0.5)
    p, rho_new = prox2(2 * lam, s * (m + a), rho)
    q = s * (m - a)
    return s * (p + q), rho_new, s * (p - q)


def persp_expand(m, rho, dm, drho):
    """Split P(m + dm, rho + drho) into value, first order term and remainder.

    Returns (P(m, rho), u dm - u^2 drho / 2, P(dm - drho u, rho + drho)) with
    u = m / rho (u = 0 when m = rho = 0); the three terms sum to
    P(m + dm, rho + drho) exactly.
    """
    m, rho, dm, drho = (np.asarray(v, dtype=np.float64) for v in (m, rho, dm, drho))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(rho > 0, m / np.where(rho > 0, rho, 1.0), 0.0)
    if np.any((rho <= 0) & ~((rho == 0) & (m == 0))):
        raise ValueError("base point outside the domain of the perspective function")
    return persp(m, rho), u * dm - 0.5 * u * u * drho, persp(dm - drho * u, rho + drho)
