"""Refinement studies against closed-form solutions.

Each ladder solves one problem per level with N_h = nx_ratio * N_tau and
compares the recovered u (staggered times) and the potential phi (centered
times) with the exact solution sampled at the grid points.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .anisotropy import decompose_field
from .exact import barenblatt_dual, barenblatt_u, hopf_cole, mapped_anisotropic, mapped_tensor
from .grid import GridSpec, spatial_l1
from .newton_solver import NewtonConfig, solve_newton
from .pd_solver import PdConfig, solve_pd
from .recovery import ErrorTable, error_table, mollified_recover
from .variables import BurgersProblem, QpmeProblem, SolveResult

logger = logging.getLogger(__name__)

BURGERS_WINDOW = (-0.6, 0.9)


def _solve(problem, solver: str, newton: NewtonConfig | None, pd: PdConfig | None) -> SolveResult:
    if solver == "newton":
        return solve_newton(problem, newton)
    if solver == "pd":
        return solve_pd(problem, pd)
    raise ValueError(f"unknown solver {solver!r}")


def _u_errors(u: np.ndarray, exact: np.ndarray, h: float, d: int) -> dict[str, float]:
    diff = u - exact
    l1 = spatial_l1(diff, h, d)
    linf = np.max(np.abs(diff.reshape(diff.shape[0], -1)), axis=1)
    return {"u_l1_max": float(l1.max()), "u_l1_final": float(l1[-1]),
            "u_linf_max": float(linf.max()), "u_linf_final": float(linf[-1])}


def qpme_barenblatt_problem(N_tau: int, N_h: int, T0: float = 1e-4, T: float = 1e-3,
                            d: int = 1, gamma: float = 1.0) -> QpmeProblem:
    """Barenblatt data at T0 centered in the unit torus."""
    s = GridSpec(T0, T, d, N_tau, N_h)
    rel = s.points() - 0.5
    return QpmeProblem(s, barenblatt_u(T0, rel if d > 1 else rel[..., 0], d, gamma))


def qpme_barenblatt_errors(problem: QpmeProblem, res: SolveResult, gamma: float = 1.0,
                           mollify: bool = False) -> dict[str, float]:
    s = problem.spec
    rel = s.points() - 0.5
    if s.d == 1:
        rel = rel[..., 0]
    exact_u = np.stack([barenblatt_u(t, rel, s.d, gamma) for t in s.times(True)])
    u = res.u
    if mollify:
        u = mollified_recover(res.phi, s)
    out = _u_errors(u, exact_u, s.h, s.d)
    exact_phi = np.stack([barenblatt_dual(t, rel, s.d, s.T, gamma)[0] for t in s.times()])
    out["phi_l1_max"] = float(spatial_l1(res.phi - exact_phi, s.h, s.d).max())
    return out


def qpme_barenblatt_ladder(levels: Sequence[int] = (4, 8, 16, 32, 64), nx_ratio: int = 5,
                           T0: float = 1e-4, T: float = 1e-3, d: int = 1, gamma: float = 1.0,
                           solver: str = "newton", newton: NewtonConfig | None = None,
                           pd: PdConfig | None = None, mollify: bool = False) -> ErrorTable:
    cols: dict[str, list[float]] = {}
    extra: dict[str, list[float]] = {"N_h": [], "iterations": [], "runtime": []}
    for n in levels:
        problem = qpme_barenblatt_problem(n, nx_ratio * n, T0, T, d, gamma)
        t0 = time.perf_counter()
        res = _solve(problem, solver, newton, pd)
        el = time.perf_counter() - t0
        errs = qpme_barenblatt_errors(problem, res, gamma, mollify)
        for k, v in errs.items():
            cols.setdefault(k, []).append(v)
        extra["N_h"].append(nx_ratio * n)
        extra["iterations"].append(res.iterations)
        extra["runtime"].append(el)
        logger.info("qpme N_tau=%d: %s (%.1fs)", n, errs, el)
    return error_table(levels, cols, extra)


def burgers_problem(N_tau: int, N_h: int, nu: float = 1e-2, Re: float = 5.0, T0: float = 0.1,
                    T: float = 1.0, window: tuple[float, float] = BURGERS_WINDOW):
    """Hopf-Cole data on the window [a, b] rescaled to the unit torus.

    With x = a + L p the equation keeps its form for u' = u / L and
    nu' = nu / L^2, so the solver works on p in [0, 1) and u = L u'.
    Returns the problem and the physical sample positions.
    """
    a, b = window
    L = b - a
    s = GridSpec(T0, T, 1, N_tau, N_h)
    xs = a + L * s.axis()
    return BurgersProblem(s, hopf_cole(T0, xs, nu, Re) / L, nu / L ** 2), xs


def burgers_ladder(levels: Sequence[int] = (4, 8, 16, 32, 64), nx_ratio: int = 5,
                   nu: float = 1e-2, Re: float = 5.0, T0: float = 0.1, T: float = 1.0,
                   window: tuple[float, float] = BURGERS_WINDOW, solver: str = "newton",
                   newton: NewtonConfig | None = None, pd: PdConfig | None = None) -> ErrorTable:
    L = window[1] - window[0]
    cols: dict[str, list[float]] = {}
    extra: dict[str, list[float]] = {"N_h": [], "iterations": [], "runtime": []}
    for n in levels:
        problem, xs = burgers_problem(n, nx_ratio * n, nu, Re, T0, T, window)
        s = problem.spec
        t0 = time.perf_counter()
        res = _solve(problem, solver, newton, pd)
        el = time.perf_counter() - t0
        exact = np.stack([hopf_cole(t, xs, nu, Re) for t in s.times(True)])
        # the L1 norm is taken in physical length units
        errs = _u_errors(L * res.u, exact, s.h * L, 1)
        for k, v in errs.items():
            cols.setdefault(k, []).append(v)
        extra["N_h"].append(nx_ratio * n)
        extra["iterations"].append(res.iterations)
        extra["runtime"].append(el)
        logger.info("burgers N_tau=%d: %s (%.1fs)", n, errs, el)
    return error_table(levels, cols, extra)


@dataclass
class MappedRun:
    aniso_l1: float
    iso_l1: float
    det_error: float
    offsets: list[tuple[int, int]]
    results: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.aniso_l1 / self.iso_l1


def mapped_experiment(N_tau: int = 12, N_h: int = 48, eps: float = 0.035, T0: float = 1e-5,
                      T: float = 1e-4, gamma: float = 1.0,
                      newton: NewtonConfig | None = None) -> MappedRun:
    """Mapped Barenblatt with the anisotropic operator, and the isotropic run
    on the same grid for comparison.  Errors are L1, max over staggered times."""
    from .exact import psi_map

    s = GridSpec(T0, T, 2, N_tau, N_h)
    pts = s.points()
    _, J = psi_map(pts, eps)
    det_err = float(np.max(np.abs(np.linalg.det(J) - 1)))
    dec = decompose_field(s, lambda x: mapped_tensor(x, eps))
    u0, _ = mapped_anisotropic(T0, pts, eps, gamma)
    res_a = solve_newton(QpmeProblem(s, u0, dec), newton)
    exact_a = np.stack([mapped_anisotropic(t, pts, eps, gamma)[0] for t in s.times(True)])
    err_a = float(spatial_l1(res_a.u - exact_a, s.h, 2).max())

    rel = pts - 0.5
    res_i = solve_newton(QpmeProblem(s, barenblatt_u(T0, rel, 2, gamma)), newton)
    exact_i = np.stack([barenblatt_u(t, rel, 2, gamma) for t in s.times(True)])
    err_i = float(spatial_l1(res_i.u - exact_i, s.h, 2).max())
    offsets = [tuple(int(c) for c in e) for e in dec.offsets]
    return MappedRun(err_a, err_i, det_err, offsets, {"aniso": res_a, "iso": res_i})
