"""Classical theta time stepping for the QPME, used as a reference method.

u lives on the staggered times T0 + tau, T0 + 3 tau, ...  The first half step
solves u(tau) + tau (1 - theta) L_h u(tau)^2 = u0 and then

    u(t + tau) = u(t - tau) - tau [theta L_h u(t - tau)^2 + (1 - theta) L_h u(t + tau)^2].

theta = 1 is explicit (stable when max(u) tau <= h^2), theta = 0 implicit and
theta = 1/2 the midpoint rule.  Implicit steps are solved by Newton's method.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .anisotropy import TensorDecomposition, lh_matrix
from .grid import GridSpec

logger = logging.getLogger(__name__)

BLOWUP = 1e10


class BaselineDivergence(RuntimeError):
    pass


class BaselineNewtonFailure(RuntimeError):
    pass


def cfl_bound(u: np.ndarray, h: float) -> float:
    """Largest stable half timestep h^2 / max(u) of the explicit scheme."""
    top = float(np.max(u))
    return np.inf if top <= 0 else h * h / top


def _implicit_solve(rhs: np.ndarray, coef: float, L: sp.csr_matrix, guess: np.ndarray,
                    tol: float = 1e-12, max_iter: int = 1000) -> np.ndarray:
    """Solve v + coef L v^2 = rhs for v >= 0.

    Newton's method with iterates clipped at zero (the solution is nonnegative
    for nonnegative data) and backtracking on the residual norm.  Far beyond
    the CFL bound the support grows by a few cells per iteration, so the
    iteration cap is generous.
    """
    v = np.maximum(guess, 0.0)
    I = sp.identity(v.size, format="csr")
    scale = 1.0 + np.max(np.abs(rhs))

    def resid(z):
        return z + coef * (L @ (z * z)) - rhs

    r = resid(v)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= tol * scale:
            return v
        rn = np.linalg.norm(r)
        J = I + 2 * coef * (L @ sp.diags(v))
        dv = spla.spsolve(J.tocsc(), -r)
        step = 1.0
        while step > 1e-12:
            vn = np.maximum(v + step * dv, 0.0)
            rn_new = resid(vn)
            if np.linalg.norm(rn_new) < (1 - 1e-4 * step) * rn:
                break
            step *= 0.5
        else:
            break
        v, r = vn, rn_new
    raise BaselineNewtonFailure("implicit step did not converge")


def theta_first_step(u0: np.ndarray, theta: float, tau: float, L: sp.csr_matrix) -> np.ndarray:
    """u(T0 + tau) from u(tau) + tau (1 - theta) L_h u(tau)^2 = u0."""
    u0 = np.asarray(u0, dtype=np.float64)
    if theta >= 1:
        return u0.copy()
    return _implicit_solve(u0.ravel(), tau * (1 - theta), L, u0.ravel()).reshape(u0.shape)


def theta_step(prev: np.ndarray, theta: float, tau: float, L: sp.csr_matrix) -> np.ndarray:
    """u(t + tau) from u(t - tau)."""
    p = prev.ravel()
    rhs = p - tau * theta * (L @ (p * p))
    if not np.all(np.isfinite(rhs)) or np.max(np.abs(rhs)) > BLOWUP:
        raise BaselineDivergence("solution blew up")
    if theta >= 1:
        v = rhs
    else:
        v = _implicit_solve(rhs, tau * (1 - theta), L, np.maximum(p, 0.0))
    if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > BLOWUP:
        raise BaselineDivergence("solution blew up")
    return v.reshape(prev.shape)


def theta_scheme(spec: GridSpec, u0: np.ndarray, theta: float,
                 dec: TensorDecomposition | None = None) -> np.ndarray:
    """Run the scheme; returns u on the staggered times, shape (N_tau,) + space."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    if dec is None:
        dec = TensorDecomposition.isotropic(spec.d, spec.N_h)
    tau, h = spec.tau, spec.h
    u0 = np.asarray(u0, dtype=np.float64).reshape(spec.space_shape)
    L = lh_matrix(dec, h)
    if theta > 0 and tau * theta > cfl_bound(u0, h):
        logger.warning("tau = %.3e exceeds the explicit stability bound %.3e", tau, cfl_bound(u0, h))
    out = np.empty((spec.N_tau,) + spec.space_shape)
    out[0] = theta_first_step(u0, theta, tau, L)
    for k in range(1, spec.N_tau):
        try:
            out[k] = theta_step(out[k - 1], theta, tau, L)
        except BaselineDivergence as exc:
            raise BaselineDivergence(f"solution blew up at step {k}") from exc
    return out
