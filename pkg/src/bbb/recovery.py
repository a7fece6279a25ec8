"""Recovering the solution u from the dual variables, and convergence bookkeeping.

QPME: u = m / H rho where H rho(t) is the harmonic mean of rho(t - tau) and
rho(t + tau), so u is the average of the two velocities m / rho(t +- tau).
Burgers: u = (m - nu d_h rbar) / rbar with rbar the harmonic mean of the four
densities rho(t +- tau, x +- h) that appear in the energy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .anisotropy import TensorDecomposition, apply_Lh
from .grid import GridSpec

logger = logging.getLogger(__name__)


def _velocity(m: np.ndarray, rho: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(rho > 0, m / np.where(rho > 0, rho, 1.0), np.nan)
    return np.where(m == 0, 0.0, u)


def recover_u_qpme(m: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """u = m / H rho on the staggered times; NaN where rho <= 0 and m != 0."""
    u = 0.5 * (_velocity(m, rho[1:]) + _velocity(m, rho[:-1]))
    bad = int(np.count_nonzero(~np.isfinite(u)))
    if bad:
        logger.warning("recovered u undefined at %d samples (nonpositive density)", bad)
    return u


def recover_u_burgers(m: np.ndarray, rho: np.ndarray, nu: float, h: float) -> np.ndarray:
    """u = (m - nu d_h rbar) / rbar.

    rbar is the harmonic mean of the four densities rho(t +- tau, x +- h); the
    difference d_h acts on the time-harmonic means at x +- h.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(rho > 0, 1.0 / np.where(rho > 0, rho, 1.0), np.nan)
    hm_inv = 0.5 * (inv[1:] + inv[:-1])  # 1 / time-harmonic mean, staggered space
    hm = 1.0 / hm_inv
    rbar = 2.0 / (hm_inv + np.roll(hm_inv, 1, axis=-1))
    q = m - nu * (hm - np.roll(hm, 1, axis=-1)) / (2 * h)
    u = _velocity(q, rbar)
    bad = int(np.count_nonzero(~np.isfinite(u)))
    if bad:
        logger.warning("recovered u undefined at %d samples (nonpositive density)", bad)
    return u


def bump_kernel(spec: GridSpec, eps: float) -> np.ndarray:
    """Discrete normalized bump c exp(-1 / (1 - |y/eps|^2)) centered at index 0."""
    axes = []
    for _ in range(spec.d):
        x = 2 * spec.h * np.arange(spec.N_h)
        axes.append(np.minimum(x, 1 - x))
    grids = np.meshgrid(*axes, indexing="ij")
    r2 = sum(g * g for g in grids) / eps ** 2
    with np.errstate(divide="ignore", over="ignore"):
        k = np.where(r2 < 1, np.exp(-1.0 / np.where(r2 < 1, 1 - r2, 1.0)), 0.0)
    if k.sum() == 0:
        k.flat[0] = 1.0
    return k / k.sum()


def mollify(f: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Periodic convolution over the trailing axes matching the kernel."""
    d = kernel.ndim
    axes = tuple(range(f.ndim - d, f.ndim))
    K = np.fft.fftn(kernel)
    return np.fft.ifftn(np.fft.fftn(f, axes=axes) * K, axes=axes).real


def mollified_recover(phi: np.ndarray, spec: GridSpec, eps: float | None = None,
                      dec: TensorDecomposition | None = None, nu: float | None = None):
    """Recover u from a space-mollified potential.

    eps defaults to h^(1/(2+d)).  With nu given the Burgers formula is used,
    otherwise the QPME one with operator dec (isotropic when None).
    """
    if eps is None:
        eps = spec.h ** (1.0 / (2 + spec.d))
    phi_s = mollify(phi, bump_kernel(spec, eps))
    m = (phi_s[1:] - phi_s[:-1]) / (2 * spec.tau)
    if nu is not None:
        rho = 1.0 - (np.roll(phi_s, -1, axis=-1) - phi_s) / (2 * spec.h)
        return recover_u_burgers(m, rho, nu, spec.h)
    if dec is None:
        dec = TensorDecomposition.isotropic(spec.d, spec.N_h)
    rho = 1.0 + apply_Lh(dec, phi_s, spec.h)
    return recover_u_qpme(m, rho)


# ---------------------------------------------------------------------------
# convergence tables

def convergence_slope(levels: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares rate p in err ~ C N^-p."""
    x = np.log(np.asarray(levels, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if len(x) < 2:
        return float("nan")
    return float(-np.polyfit(x, y, 1)[0])


@dataclass
class ErrorTable:
    levels: list[int]
    columns: dict[str, list[float]]
    extra: dict[str, list[float]] = field(default_factory=dict)

    @property
    def slopes(self) -> dict[str, float]:
        return {k: convergence_slope(self.levels, v) for k, v in self.columns.items()}

    def to_text(self, delimiter: str = "\t") -> str:
        names = ["N_tau"] + list(self.extra) + list(self.columns)
        lines = [delimiter.join(names)]
        for i, n in enumerate(self.levels):
            vals = [str(n)] + [f"{self.extra[k][i]:.10g}" for k in self.extra]
            vals += [f"{self.columns[k][i]:.10e}" for k in self.columns]
            lines.append(delimiter.join(vals))
        for k, s in self.slopes.items():
            lines.append(f"# slope {k} {s:.6f}")
        return "\n".join(lines) + "\n"


def error_table(levels: Sequence[int], errors: dict[str, Sequence[float]],
                extra: dict[str, Sequence[float]] | None = None) -> ErrorTable:
    levels = [int(n) for n in levels]
    cols = {k: [float(x) for x in v] for k, v in errors.items()}
    for k, v in cols.items():
        if len(v) != len(levels):
            raise ValueError(f"column {k} has {len(v)} entries for {len(levels)} levels")
    ext = {k: [float(x) for x in v] for k, v in (extra or {}).items()}
    return ErrorTable(levels, cols, ext)


def rho_floor_estimate(u0: np.ndarray, nu: float, duration: float) -> tuple[float, float]:
    """Heuristic lower bound on the Burgers density: T* = 8 nu / osc(u0)^2, floor exp(-duration / T*)."""
    osc = float(np.max(u0) - np.min(u0))
    if osc == 0:
        return np.inf, 1.0
    t_star = 8 * nu / osc ** 2
    return t_star, float(np.exp(-duration / t_star))
