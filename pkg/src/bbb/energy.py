"""Discrete dual energies, periodization and the separable proximal maps.

QPME.  For a potential phi on the centered times with phi(T) = 0 set
m = d_tau phi and rho = 1 + L_h phi.  The energy is

    E(m, rho) = 2 tau (2h)^d sum_{t staggered, x} ( 1/2 sum_s m^2 / (2 rho(t + s tau))
                                                    - m u0 ).

Burgers.  m = d_tau phi on the centered space grid, rho = 1 - d_h phi on the
staggered space grid, and each staggered cell contributes the average of four
perspective terms (m - nu d_h rho(t +- tau))^2 / (2 rho(t +- tau, x +- h)).

Periodization reflects time about T0: momenta become odd and densities even
on a circle of length 2 (T - T0).  The periodized energies then split into
independent small blocks, and their value is the physical energy divided by
tau (2h)^d (QPME) or tau h (Burgers).
"""

from __future__ import annotations

import numpy as np

from .anisotropy import TensorDecomposition, apply_Lh
from .grid import GridSpec, shift_index
from .perspective import persp, persp2, prox_persp, prox_persp2, prox_rotation
from .variables import BurgersVars, QpmeVars

CONSTRAINT_TOL = 1e-9


class ConstraintViolation(ValueError):
    pass


# ---------------------------------------------------------------------------
# potential <-> (m, rho)

def _check_phi(phi: np.ndarray, spec: GridSpec) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    want = (spec.N_tau + 1,) + spec.space_shape
    if phi.shape != want:
        raise ValueError(f"potential shape {phi.shape} != {want}")
    if np.any(phi[-1] != 0):
        raise ConstraintViolation("potential must vanish at the final time")
    return phi


def aux_fields(m: np.ndarray, dec: TensorDecomposition, h: float):
    """me[n](x + h e) = (m(x + 2 h e) - m(x)) / (2h) and ne[n] = lambda_e me[n]."""
    lead = m.ndim - dec.d
    me = np.stack([(shift_index(m, e, lead) - m) / (2 * h) for e in dec.offsets])
    w = dec.weights.reshape((len(dec.offsets),) + (1,) * lead + dec.weights.shape[1:])
    return me, w * me


def phi_to_mrho_qpme(phi, spec: GridSpec, dec: TensorDecomposition | None = None,
                     aux: bool = False) -> QpmeVars:
    phi = _check_phi(phi, spec)
    if dec is None:
        dec = TensorDecomposition.isotropic(spec.d, spec.N_h)
    m = (phi[1:] - phi[:-1]) / (2 * spec.tau)
    rho = 1.0 + apply_Lh(dec, phi, spec.h)
    if aux:
        me, ne = aux_fields(m, dec, spec.h)
        return QpmeVars(m, rho, me, ne)
    return QpmeVars(m, rho)


def _integrate_back(m: np.ndarray, tau: float) -> np.ndarray:
    """phi with phi(T) = 0 and d_tau phi = m."""
    n = m.shape[0]
    phi = np.zeros((n + 1,) + m.shape[1:])
    phi[:-1] = -2 * tau * np.cumsum(m[::-1], axis=0)[::-1]
    return phi


def mrho_to_phi_qpme(v: QpmeVars, spec: GridSpec, dec: TensorDecomposition | None = None,
                     tol: float = CONSTRAINT_TOL) -> np.ndarray:
    """Invert phi -> (m, rho); raises when the pair is not in the range."""
    if dec is None:
        dec = TensorDecomposition.isotropic(spec.d, spec.N_h)
    scale = 1.0 + np.max(np.abs(v.rho))
    res = (v.rho[1:] - v.rho[:-1]) / (2 * spec.tau) - apply_Lh(dec, v.m, spec.h)
    if np.max(np.abs(v.rho[-1] - 1)) > tol * scale or \
            np.max(np.abs(res)) * 2 * spec.tau > tol * scale:
        raise ConstraintViolation("(m, rho) violates the continuity or terminal constraint")
    return _integrate_back(v.m, spec.tau)


def phi_to_mrho_burgers(phi, spec: GridSpec) -> BurgersVars:
    phi = _check_phi(phi, spec)
    m = (phi[1:] - phi[:-1]) / (2 * spec.tau)
    rho = 1.0 - (np.roll(phi, -1, axis=1) - phi) / (2 * spec.h)
    return BurgersVars(m, m, rho)


def mrho_to_phi_burgers(v: BurgersVars, spec: GridSpec, tol: float = CONSTRAINT_TOL) -> np.ndarray:
    m = v.m_plus
    scale = 1.0 + np.max(np.abs(v.rho))
    res = (v.rho[1:] - v.rho[:-1]) / (2 * spec.tau) + (np.roll(m, -1, axis=1) - m) / (2 * spec.h)
    if np.max(np.abs(v.rho[-1] - 1)) > tol * scale or \
            np.max(np.abs(res)) * 2 * spec.tau > tol * scale:
        raise ConstraintViolation("(m, rho) violates the continuity or terminal constraint")
    return _integrate_back(m, spec.tau)


def burgers_a(rho: np.ndarray, nu: float, h: float) -> np.ndarray:
    """a = -nu d_h rho, from the staggered to the centered space grid."""
    return -nu * (rho - np.roll(rho, 1, axis=-1)) / (2 * h)


# ---------------------------------------------------------------------------
# physical energies

def energy_qpme(v: QpmeVars, u0: np.ndarray, spec: GridSpec) -> float:
    m, rho = v.m, v.rho
    terms = 0.5 * (persp(m, rho[1:]) + persp(m, rho[:-1])) - m * u0
    return float(spec.cell_volume * np.sum(terms))


def energy_burgers(v: BurgersVars, u0: np.ndarray, spec: GridSpec, nu: float) -> float:
    m, rho = v.m_plus, v.rho
    a = burgers_a(rho, nu, spec.h)
    total = 0.0
    for tslice in (slice(1, None), slice(None, -1)):
        q = m + a[tslice]
        r = rho[tslice]
        total = total + persp(q, r) + persp(q, np.roll(r, 1, axis=-1))
    terms = 0.25 * total - m * u0
    return float(4 * spec.tau * spec.h * np.sum(terms))


def energy_from_phi(problem, phi: np.ndarray) -> float:
    from .variables import BurgersProblem
    if isinstance(problem, BurgersProblem):
        return energy_burgers(phi_to_mrho_burgers(phi, problem.spec), problem.u0,
                              problem.spec, problem.nu)
    return energy_qpme(phi_to_mrho_qpme(phi, problem.spec, problem.dec), problem.u0, problem.spec)


# ---------------------------------------------------------------------------
# periodization

def _odd(f: np.ndarray, axis: int = 0) -> np.ndarray:
    return np.concatenate([f, -np.flip(f, axis=axis)], axis=axis)


def _even(f: np.ndarray, axis: int = 0) -> np.ndarray:
    n = f.shape[axis] - 1
    tail = np.flip(np.take(f, np.arange(1, n), axis=axis), axis=axis)
    return np.concatenate([f, tail], axis=axis)


def periodize(v, nu: float = 0.0):
    """Extend physical variables to the reflected time circle."""
    if isinstance(v, QpmeVars):
        me = None if v.me is None else _odd(v.me, 1)
        ne = None if v.ne is None else _odd(v.ne, 1)
        return QpmeVars(_odd(v.m), _even(v.rho), me, ne, periodic=True)
    if isinstance(v, BurgersVars):
        m = _odd(v.m_plus)
        rho = _even(v.rho)
        if nu > 0:
            a = _even(burgers_a(v.rho, nu, 1.0 / (2 * v.rho.shape[-1])))
            return BurgersVars(m, m.copy(), rho, a, a.copy(), periodic=True)
        return BurgersVars(m, m.copy(), rho, periodic=True)
    raise TypeError(type(v).__name__)


def deperiodize(v):
    """Restrict periodized variables to the physical times."""
    if isinstance(v, QpmeVars):
        n = v.m.shape[0] // 2
        me = None if v.me is None else v.me[:, :n]
        ne = None if v.ne is None else v.ne[:, :n]
        return QpmeVars(v.m[:n], v.rho[:n + 1], me, ne)
    if isinstance(v, BurgersVars):
        n = v.m_plus.shape[0] // 2
        m = 0.5 * (v.m_plus[:n] + v.m_minus[:n])
        return BurgersVars(m, m, v.rho[:n + 1])
    raise TypeError(type(v).__name__)


def time_signs(n_tau: int) -> np.ndarray:
    """+1 on the physical staggered times, -1 on their reflections."""
    return np.concatenate([np.ones(n_tau), -np.ones(n_tau)])


# ---------------------------------------------------------------------------
# periodized energies and their proximal maps

def _bshape(x: np.ndarray, ndim: int) -> np.ndarray:
    return x.reshape(x.shape + (1,) * (ndim - x.ndim))


def energy_per_qpme(v: QpmeVars, u0: np.ndarray, spec: GridSpec,
                    dec: TensorDecomposition | None = None, tol: float = 1e-12) -> float:
    n = spec.N_tau
    eps = _bshape(time_signs(n), v.m.ndim)
    if np.max(np.abs(v.rho[n] - 1)) > tol:
        return np.inf
    if v.me is not None:
        w = dec.weights[:, None]
        if np.max(np.abs(v.ne - w * v.me)) > tol * (1 + np.max(np.abs(v.ne))):
            return np.inf
    rho_next = np.roll(v.rho, -1, axis=0)
    return float(np.sum(persp(v.m, rho_next)) - np.sum(eps * v.m * u0))


def prox_energy_qpme(lam: float, v: QpmeVars, u0: np.ndarray, spec: GridSpec,
                     dec: TensorDecomposition | None = None) -> QpmeVars:
    """Proximal map of lam * energy_per_qpme; blocks are (m(t), rho(t + tau))."""
    n = spec.N_tau
    eps = _bshape(time_signs(n), v.m.ndim)
    rho_next = np.roll(v.rho, -1, axis=0)
    m_new, r_new = prox_persp(lam, v.m + lam * eps * u0, rho_next)
    # Terminal block: rho(T) is pinned to 1 and the cost is quadratic in m.
    m_new[n - 1] = (v.m[n - 1] + lam * u0) / (1 + lam)
    r_new[n - 1] = 1.0
    out = QpmeVars(m_new, np.roll(r_new, 1, axis=0), periodic=True)
    if v.me is not None:
        w = dec.weights[:, None]
        s = (v.me + w * v.ne) / (1 + w * w)
        out.me, out.ne = s, w * s
    return out


def _burgers_blocks(v: BurgersVars, u0: np.ndarray):
    """Gather the 5-tuples (rho(t+tau, x+h), m+(t,x), a+(t+tau,x), m-(t,x+2h), a-(t+tau,x+2h))."""
    R = np.roll(v.rho, -1, axis=0)
    Mp = v.m_plus
    Mm = np.roll(v.m_minus, -1, axis=1)
    U = np.stack([np.broadcast_to(u0, Mp.shape), np.broadcast_to(np.roll(u0, -1), Mp.shape)], -1)
    if v.a_plus is None:
        return R, np.stack([Mp, Mm], -1), None, U
    Ap = np.roll(v.a_plus, -1, axis=0)
    Am = np.roll(np.roll(v.a_minus, -1, axis=0), -1, axis=1)
    return R, np.stack([Mp, Mm], -1), np.stack([Ap, Am], -1), U


def energy_per_burgers(v: BurgersVars, u0: np.ndarray, spec: GridSpec, tol: float = 1e-12) -> float:
    n = spec.N_tau
    if np.max(np.abs(v.rho[n] - 1)) > tol:
        return np.inf
    R, M, A, U = _burgers_blocks(v, u0)
    eps = _bshape(time_signs(n), M.ndim)
    q = eps * M + (0 if A is None else A)
    return float(np.sum(persp2(q, R)) - np.sum(eps * M * U))


def prox_energy_burgers(lam: float, v: BurgersVars, u0: np.ndarray, spec: GridSpec) -> BurgersVars:
    """Proximal map of lam * energy_per_burgers, one 5-tuple (or 3-tuple if nu = 0) at a time."""
    n = spec.N_tau
    R, M, A, U = _burgers_blocks(v, u0)
    eps = _bshape(time_signs(n), M.ndim)
    mt = eps * M + lam * U
    if A is None:
        mt_new, r_new = prox_persp2(lam, mt, R)
        mt_new[n - 1] = mt[n - 1] / (1 + lam)
        a_new = None
    else:
        mt_new, r_new, a_new = prox_rotation(lam, mt, R, A)
        # Terminal tuple: rho(T) = 1 and the cost 0.5 |m + a|^2 - m u0 is quadratic.
        s = (mt[n - 1] + A[n - 1]) / (1 + 2 * lam)
        mt_new[n - 1] = mt[n - 1] - lam * s
        a_new[n - 1] = A[n - 1] - lam * s
    r_new[n - 1] = 1.0
    m_new = eps * mt_new
    rho = np.roll(r_new, 1, axis=0)
    mp = m_new[..., 0]
    mm = np.roll(m_new[..., 1], 1, axis=1)
    if a_new is None:
        return BurgersVars(mp, mm, rho, periodic=True)
    ap = np.roll(a_new[..., 0], 1, axis=0)
    am = np.roll(np.roll(a_new[..., 1], 1, axis=0), 1, axis=1)
    return BurgersVars(mp, mm, rho, ap, am, periodic=True)
