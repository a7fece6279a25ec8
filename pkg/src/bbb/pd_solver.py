"""Chambolle-Pock iterations on the periodized formulation.

The problem is min F(z) + G(z) with F the periodized energy (separable, with
closed-form proximal map) and G the indicator of the linear constraints
(parity and the discrete continuity equation), whose proximal map is the
FFT projection.  The coupling operator is the identity, so the step sizes
only need sigma * tau_step <= 1.

    y <- y + sigma zbar - sigma prox_{F/sigma}(y/sigma + zbar)
    z <- P(z - tau_step y)
    zbar <- z + theta (z - z_prev)

Progress is reported through the potential phi obtained by integrating the
feasible momentum backward from phi(T) = 0; its energy is the physical
discrete energy.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .energy import (
    _integrate_back,
    energy_from_phi,
    energy_per_burgers,
    energy_per_qpme,
    prox_energy_burgers,
    prox_energy_qpme,
)
from .newton_solver import finish
from .spectral import FrequencySymbols, project_feasible, symbols
from .variables import BurgersProblem, BurgersVars, Layout, QpmeProblem, QpmeVars, SolveResult

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass
class PdConfig:
    sigma: float = 0.99
    tau_step: float = 0.99
    theta: float = 1.0
    gamma: float = 0.0  # acceleration parameter, off by default
    max_iters: int = 20000
    tol_energy: float = 1e-12  # relative energy change between checks
    tol_residual: float = 1e-9  # sup norm of the primal gap |z - prox point|
    check_every: int = 50
    warmup: int = 2000
    divergence_checks: int = 40  # consecutive infinite-energy checks after warmup
    trace_file: str | None = None


@dataclass
class PrimalDualState:
    z: np.ndarray
    z_bar: np.ndarray
    y: np.ndarray
    iteration: int = 0


class _Periodized:
    """Flat-vector view of the periodized problem for the iteration."""

    def __init__(self, problem):
        self.problem = problem
        s = problem.spec
        self.spec = s
        self.sym: FrequencySymbols = symbols(s)
        nt = 2 * s.N_tau
        sh = (nt,) + s.space_shape
        self.burgers = isinstance(problem, BurgersProblem)
        if self.burgers:
            shapes = {"m_plus": sh, "m_minus": sh, "rho": sh}
            if problem.nu > 0:
                shapes.update(a_plus=sh, a_minus=sh)
            self.offsets = None
        else:
            shapes = {"m": sh, "rho": sh}
            if problem.anisotropic:
                k = len(problem.dec.offsets)
                shapes.update(me=(k,) + sh, ne=(k,) + sh)
                self.offsets = problem.dec.offsets
            else:
                self.offsets = None
        self.layout = Layout(shapes)

    def vars(self, z):
        p = self.layout.unpack(z)
        if self.burgers:
            return BurgersVars(p["m_plus"], p["m_minus"], p["rho"], p.get("a_plus"),
                               p.get("a_minus"), periodic=True)
        return QpmeVars(p["m"], p["rho"], p.get("me"), p.get("ne"), periodic=True)

    def flat(self, v) -> np.ndarray:
        d = {k: getattr(v, k) for k in self.layout.shapes}
        return self.layout.pack(d)

    def initial(self) -> np.ndarray:
        z = np.zeros(self.layout.size)
        self.layout.unpack(z)["rho"][...] = 1.0
        return z

    def prox(self, lam: float, z: np.ndarray) -> np.ndarray:
        p = self.problem
        if self.burgers:
            return self.flat(prox_energy_burgers(lam, self.vars(z), p.u0, self.spec))
        return self.flat(prox_energy_qpme(lam, self.vars(z), p.u0, self.spec, p.dec))

    def project(self, z: np.ndarray) -> np.ndarray:
        nu = self.problem.nu if self.burgers else 0.0
        return self.flat(project_feasible(self.vars(z), self.sym, self.offsets, nu))

    def energy_per(self, z: np.ndarray) -> float:
        p = self.problem
        if self.burgers:
            return energy_per_burgers(self.vars(z), p.u0, self.spec)
        return energy_per_qpme(self.vars(z), p.u0, self.spec, p.dec)

    def phi(self, z: np.ndarray) -> np.ndarray:
        v = self.vars(z)
        n = self.spec.N_tau
        m = 0.5 * (v.m_plus[:n] + v.m_minus[:n]) if self.burgers else v.m[:n]
        return _integrate_back(m, self.spec.tau)


def residuals(problem, v) -> dict[str, float]:
    """Constraint residuals of physical or periodized variables."""
    s = problem.spec
    if isinstance(v, BurgersVars):
        m, rho = v.m_plus, v.rho
        cont = (np.roll(rho, -1, 0)[: m.shape[0]] - rho[: m.shape[0]]) / (2 * s.tau) \
            + (np.roll(m, -1, -1) - m) / (2 * s.h)
        if not v.periodic:
            cont = cont[: s.N_tau]
    else:
        from .anisotropy import apply_Lh
        m, rho = v.m, v.rho
        cont = (np.roll(rho, -1, 0)[: m.shape[0]] - rho[: m.shape[0]]) / (2 * s.tau) \
            - apply_Lh(problem.decomposition, m, s.h)
    return {"continuity": float(np.max(np.abs(cont))),
            "terminal": float(np.max(np.abs(rho[s.N_tau] - 1)))}


def solve_pd(problem, config: PdConfig | None = None, callback=None) -> SolveResult:
    cfg = config or PdConfig()
    if cfg.sigma * cfg.tau_step > 1 + 1e-12:
        raise ValueError("step sizes must satisfy sigma * tau_step <= 1")
    model = _Periodized(problem)
    z = model.initial()
    state = PrimalDualState(z.copy(), z.copy(), np.zeros_like(z))
    sigma, tau_step, theta = cfg.sigma, cfg.tau_step, cfg.theta
    trace = []
    fh = open(cfg.trace_file, "w") if cfg.trace_file else None
    if fh:
        fh.write("iteration\tenergy\tmax_residual\tmin_rho\n")
    last_energy = np.inf
    inf_run = 0
    converged = False
    gap = np.inf
    t0 = time.perf_counter()
    try:
        for it in range(1, cfg.max_iters + 1):
            w = state.y / sigma + state.z_bar
            x = model.prox(1.0 / sigma, w)
            state.y = state.y + sigma * (state.z_bar - x)
            z_prev = state.z
            state.z = model.project(z_prev - tau_step * state.y)
            if cfg.gamma > 0:
                theta = 1.0 / np.sqrt(1 + 2 * cfg.gamma * tau_step)
                tau_step *= theta
                sigma /= theta
            state.z_bar = state.z + theta * (state.z - z_prev)
            state.iteration = it
            if it % cfg.check_every and it != cfg.max_iters:
                continue
            if not np.all(np.isfinite(state.z)) or not np.all(np.isfinite(state.y)):
                raise DivergenceError(f"non-finite iterate at iteration {it}")
            gap = float(np.max(np.abs(state.z - x)))
            phi = model.phi(state.z)
            energy = energy_from_phi(problem, phi)
            rho_min = float(np.min(model.vars(state.z).rho))
            rec = {"iteration": it, "energy": energy, "max_residual": gap, "min_rho": rho_min}
            trace.append(rec)
            if fh:
                fh.write(f"{it}\t{energy:.16e}\t{gap:.6e}\t{rho_min:.6e}\n")
            if callback is not None:
                callback(rec)
            if not np.isfinite(energy):
                inf_run = inf_run + 1 if it > cfg.warmup else 0
                if inf_run >= cfg.divergence_checks:
                    raise DivergenceError("energy stayed infinite after the warm-up window")
                continue
            inf_run = 0
            change = abs(energy - last_energy)
            last_energy = energy
            if change <= cfg.tol_energy * max(1.0, abs(energy)) and gap <= cfg.tol_residual:
                converged = True
                break
    finally:
        if fh:
            fh.close()
    phi = model.phi(state.z)
    info = {"seconds": time.perf_counter() - t0, "sigma": sigma, "tau_step": tau_step,
            "energy_per": model.energy_per(x)}
    logger.info("pd: %d iterations, gap %.3e", state.iteration, gap)
    return finish(problem, phi, "pd", state.iteration, converged, trace, info, max_residual=gap)
