"""Orthogonal projection onto the periodized linear constraints via the FFT.

Periodized fields hold 2 N_tau time samples on a circle of length 2 (T - T0).
The transform used here attaches each sample to its physical position, so a
sample at time 2 tau k + tau (staggered) or at space position 2 h j + h o
picks up a half-step phase.  With that convention every centered difference
becomes multiplication by a purely imaginary sine symbol

    d_t(zeta) = (i / tau) sin(pi zeta / N_time),
    d_e(xi)   = (i / h) sin(pi <xi, e> / N_h),

and the isotropic L_h becomes multiplication by (1/h^2) sum_i sin^2(pi xi_i / N_h).
The constraints decouple frequency by frequency, where they are projections
onto a line or a hyperplane of C^n.  Time parity (odd momenta, even
densities) is imposed first; it commutes with the Fourier projection.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .grid import GridSpec
from .variables import BurgersVars, QpmeVars


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("BBB_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class FrequencySymbols:
    """Sine tables for one periodized grid; arrays broadcast against (N_time,) + (N_h,)*d."""

    spec: GridSpec
    st: np.ndarray  # sin(pi zeta / N_time)
    sx: list[np.ndarray]  # per axis, integer frequencies xi

    @property
    def d_t(self) -> np.ndarray:
        return 1j / self.spec.tau * self.st

    def d_e(self, e: Sequence[int]) -> np.ndarray:
        arg = sum(int(c) * xi for c, xi in zip(e, self.sx))
        return 1j / self.spec.h * np.sin(np.pi * arg / self.spec.N_h)

    @property
    def lap(self) -> np.ndarray:
        """Symbol of the isotropic L_h (nonnegative)."""
        N = self.spec.N_h
        return sum(np.sin(np.pi * xi / N) ** 2 for xi in self.sx) / self.spec.h ** 2


def symbols(spec: GridSpec) -> FrequencySymbols:
    nt = 2 * spec.N_tau
    d = spec.d
    shape_t = (nt,) + (1,) * d
    st = np.sin(np.pi * np.arange(nt) / nt).reshape(shape_t)
    sx = []
    for i in range(d):
        shp = [1] * (d + 1)
        shp[i + 1] = spec.N_h
        sx.append(np.arange(spec.N_h).reshape(shp))
    return FrequencySymbols(spec, st, sx)


def _phase(shape, t_off: int, x_off: Sequence[int]) -> np.ndarray | float:
    nt = shape[0]
    ph = 1.0 + 0j
    if t_off:
        ph = ph * np.exp(-1j * np.pi * t_off * np.arange(nt) / nt).reshape((nt,) + (1,) * (len(shape) - 1))
    for i, o in enumerate(x_off):
        if o:
            n = shape[i + 1]
            shp = [1] * len(shape)
            shp[i + 1] = n
            ph = ph * np.exp(-1j * np.pi * o * np.arange(n) / n).reshape(shp)
    return ph


def fft_spacetime(f: np.ndarray, t_off: int = 0, x_off: Sequence[int] | None = None) -> np.ndarray:
    """Position-aware DFT of a periodized field over all axes.

    t_off = 1 for staggered times; x_off[i] is the half-step offset of axis i.
    """
    if x_off is None:
        x_off = (0,) * (f.ndim - 1)
    return sfft.fftn(f, workers=_workers()) * _phase(f.shape, t_off, x_off)


def ifft_spacetime(F: np.ndarray, t_off: int = 0, x_off: Sequence[int] | None = None) -> np.ndarray:
    if x_off is None:
        x_off = (0,) * (F.ndim - 1)
    return sfft.ifftn(F * np.conj(_phase(F.shape, t_off, x_off)), workers=_workers()).real


def project_line(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of x onto C v, vectorized over leading axes (last axis = C^n).

    Where v = 0 the line degenerates to {0}.
    """
    nv = np.sum(np.abs(v) ** 2, axis=-1, keepdims=True)
    coef = np.sum(np.conj(v) * x, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(nv > 0, coef / np.where(nv > 0, nv, 1.0) * v, 0.0)
    return out


def project_hyperplane(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of x onto {y : v^* y = 0}; identity where v = 0."""
    return x - project_line(x, v)


# ---------------------------------------------------------------------------
# time parity on periodized arrays (time on axis `axis`)

def reflect_time(f: np.ndarray, staggered: bool, axis: int = 0) -> np.ndarray:
    """Values at the mirrored times -t of a periodized field."""
    n = f.shape[axis]
    if staggered:
        idx = n - 1 - np.arange(n)
    else:
        idx = (-np.arange(n)) % n
    return np.take(f, idx, axis=axis)


def project_parity(f: np.ndarray, odd: bool, staggered: bool, axis: int = 0) -> np.ndarray:
    r = reflect_time(f, staggered, axis)
    return 0.5 * (f - r) if odd else 0.5 * (f + r)


# ---------------------------------------------------------------------------
# constraint projections

def project_continuity_qpme(m: np.ndarray, rho: np.ndarray, sym: FrequencySymbols):
    """Isotropic continuity d_tau rho = L_h m, after parity."""
    d = sym.spec.d
    m = project_parity(m, odd=True, staggered=True)
    rho = project_parity(rho, odd=False, staggered=False)
    M = fft_spacetime(m, 1)
    P = fft_spacetime(rho, 0)
    v = np.stack(np.broadcast_arrays(-sym.lap + 0j, np.conj(sym.d_t)), axis=-1)
    x = project_hyperplane(np.stack([M, P], axis=-1), v)
    return ifft_spacetime(x[..., 0], 1), ifft_spacetime(x[..., 1], 0)


def project_constraints_qpme_aniso(m, me, ne, rho, offsets, sym: FrequencySymbols):
    """me[n] = d_h^{e_n} m (a line per frequency) and d_tau rho = -sum_n d_h^{e_n} ne[n]
    (a hyperplane per frequency), after parity."""
    m = project_parity(m, True, True)
    me = project_parity(me, True, True, axis=1)
    ne = project_parity(ne, True, True, axis=1)
    rho = project_parity(rho, False, False)
    offsets = [tuple(int(c) for c in e) for e in offsets]
    M = fft_spacetime(m, 1)
    Me = [fft_spacetime(me[n], 1, e) for n, e in enumerate(offsets)]
    Ne = [fft_spacetime(ne[n], 1, e) for n, e in enumerate(offsets)]
    P = fft_spacetime(rho, 0)
    de = [np.broadcast_to(sym.d_e(e), M.shape) for e in offsets]
    one = np.ones(M.shape, dtype=complex)
    line = project_line(np.stack([M] + Me, -1), np.stack([one] + de, -1))
    dt = np.broadcast_to(sym.d_t, M.shape)
    hyp = project_hyperplane(np.stack(Ne + [P], -1), np.conj(np.stack(de + [dt], -1)))
    k = len(offsets)
    m2 = ifft_spacetime(line[..., 0], 1)
    me2 = np.stack([ifft_spacetime(line[..., n + 1], 1, e) for n, e in enumerate(offsets)])
    ne2 = np.stack([ifft_spacetime(hyp[..., n], 1, e) for n, e in enumerate(offsets)])
    rho2 = ifft_spacetime(hyp[..., k], 0)
    return m2, me2, ne2, rho2


def project_constraints_burgers(m_plus, m_minus, rho, a_plus, a_minus, nu: float,
                                sym: FrequencySymbols):
    """Duplicate equality, d_tau rho + d_h m = 0 and a = -nu d_h rho, after parity.

    The admissible set is a single line per frequency, spanned by
    (d_t, d_t, nu d_x^2, nu d_x^2, -d_x) in (M+, M-, A+, A-, P); at the zero
    frequency it is {M+ = M-, A = 0}.
    """
    with_a = a_plus is not None
    mp = 0.5 * (m_plus + m_minus)
    mp = project_parity(mp, True, True)
    rho = project_parity(rho, False, False)
    M = fft_spacetime(mp, 1, (0,))
    P = fft_spacetime(rho, 0, (1,))
    dt = np.broadcast_to(sym.d_t, M.shape)
    dx = np.broadcast_to(sym.d_e((1,)), M.shape)
    if with_a:
        ap = project_parity(0.5 * (a_plus + a_minus), False, False)
        A = fft_spacetime(ap, 0, (0,))
        # Duplicated coordinates enter the projection with weight 2.
        x = np.stack([M, A, P], -1)
        w = np.stack([dt, nu * dx * dx, -dx], -1)
        wts = np.array([2.0, 2.0, 1.0])
    else:
        x = np.stack([M, P], -1)
        w = np.stack([dt, -dx], -1)
        wts = np.array([2.0, 1.0])
    nw = np.sum(wts * np.abs(w) ** 2, -1, keepdims=True)
    coef = np.sum(wts * np.conj(w) * x, -1, keepdims=True)
    zero = nw[..., 0] == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        y = coef / np.where(nw > 0, nw, 1.0) * w
    if with_a:
        # zero frequency: keep M and P, force A = 0
        y[zero] = x[zero] * np.array([1.0, 0.0, 1.0])
    else:
        y[zero] = x[zero]
    m2 = ifft_spacetime(y[..., 0], 1, (0,))
    if with_a:
        a2 = ifft_spacetime(y[..., 1], 0, (0,))
        rho2 = ifft_spacetime(y[..., 2], 0, (1,))
        return m2, m2.copy(), rho2, a2, a2.copy()
    rho2 = ifft_spacetime(y[..., 1], 0, (1,))
    return m2, m2.copy(), rho2, None, None


def project_feasible(v, sym: FrequencySymbols, offsets=None, nu: float = 0.0):
    """Project periodized variables onto the parity and linear constraints."""
    if isinstance(v, QpmeVars):
        if v.me is None:
            m, rho = project_continuity_qpme(v.m, v.rho, sym)
            return QpmeVars(m, rho, periodic=True)
        m, me, ne, rho = project_constraints_qpme_aniso(v.m, v.me, v.ne, v.rho, offsets, sym)
        return QpmeVars(m, rho, me, ne, periodic=True)
    if isinstance(v, BurgersVars):
        mp, mm, rho, ap, am = project_constraints_burgers(
            v.m_plus, v.m_minus, v.rho, v.a_plus, v.a_minus, nu, sym)
        return BurgersVars(mp, mm, rho, ap, am, periodic=True)
    raise TypeError(f"unsupported variables {type(v).__name__}")
