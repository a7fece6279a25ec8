"""Damped Newton method with a log barrier on the density, in the potential variable.

Both discrete energies are sums of perspective terms composed with affine
maps of the interior potential (all centered times except T, where phi = 0):

    E(phi) = sum_k w_k P(q_k, r_k) + c . phi,   q = Q phi + q0,  r = R phi + r0,

plus a barrier -mu |cell| sum_k log r_k.  The Hessian of each term is the
2x2 matrix [[1/r, -q/r^2], [-q/r^2, q^2/r^3]], so the full Hessian is a
sparse matrix assembled from Q and R.  The barrier weight mu is decreased
geometrically, warm starting each stage.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .anisotropy import lh_matrix
from .energy import energy_from_phi, phi_to_mrho_burgers, phi_to_mrho_qpme
from .recovery import recover_u_burgers, recover_u_qpme
from .variables import BurgersProblem, QpmeProblem, SolveResult

logger = logging.getLogger(__name__)


class NewtonError(RuntimeError):
    pass


class LineSearchFailure(NewtonError):
    pass


class ProblemTooLarge(ValueError):
    pass


try:  # CHOLMOD through cvxopt is much faster than SuperLU on the 2D Hessians
    import cvxopt
    import cvxopt.cholmod as _cholmod
except ImportError:  # pragma: no cover - optional dependency
    cvxopt = None

PCG_MIN_SIZE = 5000  # below this, factor every Hessian
TRACE_COLUMNS = ("mu", "iteration", "energy", "grad_norm", "decrement", "step", "min_rho")


def _factorize(H: sp.spmatrix):
    """Return a solver for the symmetric positive definite system H x = b."""
    if cvxopt is not None:
        low = sp.tril(H).tocoo()
        A = cvxopt.spmatrix(low.data, low.row.astype(int), low.col.astype(int), size=H.shape)
        try:
            F = _cholmod.symbolic(A)
            _cholmod.numeric(A, F)

            def solve(b):
                x = cvxopt.matrix(np.asarray(b, dtype=np.float64))
                _cholmod.solve(F, x)
                return np.array(x).ravel()
            return solve
        except ArithmeticError:
            logger.debug("cholmod factorization failed, falling back to splu")
    return spla.splu(H.tocsc()).solve


class _HessianSolver:
    """Newton systems for large problems: conjugate gradients preconditioned by
    the Cholesky factor of an earlier Hessian, refactoring when CG stalls.

    Successive Newton Hessians differ little, so a stale factor is an excellent
    preconditioner and most iterations cost a few triangular solves instead of
    a factorization.  Small problems are factored every time.
    """

    def __init__(self, rtol: float = 1e-10, max_cg: int = 40):
        self.rtol = rtol
        self.max_cg = max_cg
        self.factor = None
        self.factorizations = 0
        self.cg_iterations = 0

    def _refactor(self, H):
        self.factor = _factorize(H)
        self.factorizations += 1
        return self.factor

    def solve(self, H: sp.spmatrix, b: np.ndarray) -> np.ndarray:
        if H.shape[0] < PCG_MIN_SIZE:
            self.factorizations += 1
            return _factorize(H)(b)
        if self.factor is not None:
            count = [0]

            def cb(_):
                count[0] += 1
            M = spla.LinearOperator(H.shape, matvec=self.factor, dtype=np.float64)
            x, info = spla.cg(H, b, x0=self.factor(b), rtol=self.rtol, maxiter=self.max_cg,
                              M=M, callback=cb)
            self.cg_iterations += count[0]
            if info == 0:
                return x
        return self._refactor(H)(b)


@dataclass
class NewtonConfig:
    mu_init: float = 1e4
    mu_factor: float = 0.1
    mu_min: float = 1e-10
    stage_tol: float = 1e-7  # relative Newton decrement for intermediate stages
    final_tol: float = 1e-13  # relative Newton decrement at mu_min
    armijo_factor: float = 0.5
    armijo_c: float = 1e-4
    min_step: float = 1e-14
    max_iters: int = 500
    max_unknowns: int = 400_000
    trace_file: str | None = None


@dataclass
class PerspectiveSum:
    Q: sp.csr_matrix
    q0: np.ndarray
    R: sp.csr_matrix
    r0: np.ndarray
    w: np.ndarray
    c: np.ndarray
    barrier_w: float

    @property
    def n(self) -> int:
        return self.Q.shape[1]

    def qr(self, x):
        return self.Q @ x + self.q0, self.R @ x + self.r0

    def value(self, x, mu: float = 0.0) -> float:
        q, r = self.qr(x)
        if np.any(r <= 0):
            return np.inf
        return float(np.sum(self.w * q * q / (2 * r)) + self.c @ x
                     - mu * self.barrier_w * np.sum(np.log(r)))

    def derivatives(self, x, mu: float, hessian: bool = True):
        q, r = self.qr(x)
        w = self.w
        v = q / r
        val = float(np.sum(w * q * v / 2) + self.c @ x - mu * self.barrier_w * np.sum(np.log(r)))
        gq = w * v
        gr = -w * v * v / 2 - mu * self.barrier_w / r
        g = self.Q.T @ gq + self.R.T @ gr + self.c
        if not hessian:
            return val, g, None
        hqq = w / r
        hqr = -w * v / r
        hrr = w * v * v / r + mu * self.barrier_w / r ** 2
        QT, RT = self.Q.T, self.R.T
        H = (QT @ sp.diags(hqq) @ self.Q + QT @ sp.diags(hqr) @ self.R
             + RT @ sp.diags(hqr) @ self.Q + RT @ sp.diags(hrr) @ self.R)
        return val, g, H

    def scale(self, x) -> float:
        """Sum of absolute term magnitudes, used for round-off slack."""
        q, r = self.qr(x)
        return float(np.sum(np.abs(self.w * q * q / (2 * r))) + np.abs(self.c * x).sum())


def _time_ops(N: int, tau: float):
    """Interior-to-full time maps: D (m from phi), S_plus (phi at k+1), S_minus (phi at k)."""
    e = np.ones(N)
    D = sp.diags([-e, e[:-1]], [0, 1], shape=(N, N)) / (2 * tau)
    Sp = sp.diags([e[:-1]], [1], shape=(N, N))
    Sm = sp.identity(N)
    return D, Sp, Sm


def build_qpme_model(problem: QpmeProblem) -> PerspectiveSum:
    s = problem.spec
    N, nx = s.N_tau, s.N_h ** s.d
    L = lh_matrix(problem.decomposition, s.h)
    D, Sp, Sm = _time_ops(N, s.tau)
    I = sp.identity(nx)
    Dt = sp.kron(D, I).tocsr()
    Rp = sp.kron(Sp, L).tocsr()
    Rm = sp.kron(Sm, L).tocsr()
    K = N * nx
    vol = s.cell_volume
    Q = sp.vstack([Dt, Dt]).tocsr()
    R = sp.vstack([Rp, Rm]).tocsr()
    u0 = np.tile(problem.u0.ravel(), N)
    return PerspectiveSum(Q, np.zeros(2 * K), R, np.ones(2 * K), np.full(2 * K, vol / 2),
                          -vol * (Dt.T @ u0), vol)


def build_burgers_model(problem: BurgersProblem) -> PerspectiveSum:
    s = problem.spec
    N, nx, h, nu = s.N_tau, s.N_h, s.h, problem.nu
    D, Sp, Sm = _time_ops(N, s.tau)
    I = sp.identity(nx)
    fwd = sp.diags([np.ones(1), np.ones(nx - 1)], [-(nx - 1), 1], shape=(nx, nx))  # (f)[j+1]
    bwd = fwd.T  # (f)[j-1]
    G = -(fwd - I) / (2 * h)  # rho - 1 on the staggered grid
    lap = (fwd - 2 * I + bwd) / (4 * h * h)
    Dt = sp.kron(D, I).tocsr()
    Qs, Rs = [], []
    for St in (Sp, Sm):
        Q = (Dt + nu * sp.kron(St, lap)).tocsr()
        for Gx in (G, bwd @ G):
            Qs.append(Q)
            Rs.append(sp.kron(St, Gx).tocsr())
    K = N * nx
    vol = s.cell_volume  # 4 tau h
    u0 = np.tile(problem.u0.ravel(), N)
    return PerspectiveSum(sp.vstack(Qs).tocsr(), np.zeros(4 * K), sp.vstack(Rs).tocsr(),
                          np.ones(4 * K), np.full(4 * K, vol / 4), -vol * (Dt.T @ u0), vol)


def build_model(problem) -> PerspectiveSum:
    if isinstance(problem, BurgersProblem):
        return build_burgers_model(problem)
    if isinstance(problem, QpmeProblem):
        return build_qpme_model(problem)
    raise TypeError(type(problem).__name__)


def _full_phi(x: np.ndarray, problem) -> np.ndarray:
    s = problem.spec
    phi = np.zeros((s.N_tau + 1,) + s.space_shape)
    phi[:-1] = x.reshape((s.N_tau,) + s.space_shape)
    return phi


def barrier_energy(phi: np.ndarray, mu: float, problem, model: PerspectiveSum | None = None):
    """Barrier energy and its gradient with respect to the interior potential."""
    if model is None:
        model = build_model(problem)
    x = np.asarray(phi)[:-1].ravel()
    q, r = model.qr(x)
    if np.any(r <= 0):
        return np.inf, np.full(x.shape, np.nan)
    val, g, _ = model.derivatives(x, mu, hessian=False)
    return val, g.reshape(np.asarray(phi)[:-1].shape)


def finish(problem, phi: np.ndarray, solver: str, iterations: int, converged: bool,
           trace=None, info=None, max_residual: float = 0.0) -> SolveResult:
    s = problem.spec
    if isinstance(problem, BurgersProblem):
        v = phi_to_mrho_burgers(phi, s)
        m, rho = v.m_plus, v.rho
        u = recover_u_burgers(m, rho, problem.nu, s.h)
    else:
        v = phi_to_mrho_qpme(phi, s, problem.dec)
        m, rho = v.m, v.rho
        u = recover_u_qpme(m, rho)
    energy = energy_from_phi(problem, phi)
    return SolveResult(solver, phi, m, rho, u, energy, iterations, converged, max_residual,
                       trace or [], info or {})


def _newton_stages(model: PerspectiveSum, x: np.ndarray, cfg: NewtonConfig, trace: list,
                   emit) -> tuple[np.ndarray, float, int]:
    """Barrier continuation with damped Newton inner loops; returns (x, mu, iterations)."""
    mu = cfg.mu_init
    iters = 0
    last_step = 0.0
    linear = _HessianSolver()
    while True:
        final = mu <= cfg.mu_min * (1 + 1e-12)
        tol = cfg.final_tol if final else cfg.stage_tol
        while True:
            val, g, H = model.derivatives(x, mu)
            scale = max(abs(val), model.scale(x), np.finfo(float).tiny)
            dx = linear.solve(H, -g)
            dec2 = float(-g @ dx)
            rec = {"iteration": iters, "mu": mu, "energy": val, "decrement": dec2,
                   "grad_norm": float(np.max(np.abs(g))) if g.size else 0.0,
                   "step": last_step, "min_rho": float(np.min(model.qr(x)[1]))}
            trace.append(rec)
            emit(rec)
            if dec2 / 2 <= tol * scale or dec2 <= 0:
                break
            if iters >= cfg.max_iters:
                raise NewtonError(f"no convergence within {cfg.max_iters} Newton iterations")
            step = 1.0
            slack = 1e-15 * scale
            gdx = float(g @ dx)
            while True:
                xn = x + step * dx
                vn = model.value(xn, mu)  # +inf when a density leaves (0, inf)
                if np.isfinite(vn) and vn <= val + cfg.armijo_c * step * gdx + slack:
                    break
                step *= cfg.armijo_factor
                if step < cfg.min_step:
                    if dec2 / 2 <= 1e-10 * scale:
                        step = 0.0
                        break
                    raise LineSearchFailure(
                        f"line search step fell below {cfg.min_step:g} at mu={mu:.1e}, "
                        f"iteration {iters}, decrement {dec2:.3e}")
            iters += 1
            last_step = step
            if step == 0.0:
                break
            x = xn
        if final:
            logger.info("newton: %d factorizations, %d CG iterations",
                        linear.factorizations, linear.cg_iterations)
            return x, mu, iters
        mu = max(mu * cfg.mu_factor, cfg.mu_min)


def solve_newton(problem, config: NewtonConfig | None = None, phi0: np.ndarray | None = None,
                 callback=None) -> SolveResult:
    cfg = config or NewtonConfig()
    model = build_model(problem)
    if model.n > cfg.max_unknowns:
        raise ProblemTooLarge(f"{model.n} unknowns exceeds the limit {cfg.max_unknowns}")
    x = np.zeros(model.n) if phi0 is None else np.asarray(phi0)[:-1].ravel().copy()
    if np.any(model.qr(x)[1] <= 0):
        raise NewtonError("initial potential has a nonpositive density")
    trace: list[dict] = []
    t0 = time.perf_counter()
    fh = open(cfg.trace_file, "w") if cfg.trace_file else None

    def emit(rec):
        if fh:
            fh.write("\t".join(f"{rec[k]:.10e}" if isinstance(rec[k], float) else str(rec[k])
                               for k in TRACE_COLUMNS) + "\n")
        if callback is not None:
            callback(rec)

    try:
        if fh:
            fh.write("\t".join(TRACE_COLUMNS) + "\n")
        x, mu, iters = _newton_stages(model, x, cfg, trace, emit)
    finally:
        if fh:
            fh.close()
    phi = _full_phi(x, problem)
    info = {"mu_final": mu, "grad_norm": trace[-1]["grad_norm"], "decrement": trace[-1]["decrement"],
            "seconds": time.perf_counter() - t0, "unknowns": model.n}
    logger.info("newton: %d iterations, energy %.16g", iters, trace[-1]["energy"])
    return finish(problem, phi, "newton", iters, True, trace, info)
