"""Command line front end.

    bbb solve {qpme|burgers} ...
    bbb exact {barenblatt|barenblatt-dual|hopfcole|mapped} ...
    bbb convergence {qpme|burgers} ...
    bbb baseline {explicit|implicit|midpoint} ...
    bbb selling --matrix a b c

Exit status is 0 on success, 1 on a usage error and 2 on a numerical failure;
in the last case one line "error: kind=<name> message=<text>" goes to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import exact
from .anisotropy import NoConvergence, decompose_field, reconstruct, selling_many
from .baseline import BaselineDivergence, BaselineNewtonFailure, theta_scheme
from .convergence import BURGERS_WINDOW, burgers_ladder, burgers_problem, qpme_barenblatt_ladder
from .energy import phi_to_mrho_burgers, phi_to_mrho_qpme
from .grid import Field, GridError, GridSpec, StaggerTag, read_field, write_field
from .newton_solver import NewtonConfig, NewtonError, ProblemTooLarge, solve_newton
from .pd_solver import DivergenceError, PdConfig, residuals, solve_pd
from .recovery import rho_floor_estimate
from .variables import BurgersProblem, QpmeProblem

logger = logging.getLogger("bbb")

RHO_FLOOR_WARN = 1e-12
NUMERICAL_ERRORS = (NewtonError, DivergenceError, BaselineDivergence, BaselineNewtonFailure,
                    NoConvergence, FloatingPointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# argument helpers

def _spec_named(text: str) -> tuple[str, dict[str, float]]:
    """'name:key=val,key=val' -> (name, {key: val})."""
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        if "=" not in item:
            raise UsageError(f"malformed parameter {item!r} in {text!r}")
        k, v = item.split("=", 1)
        try:
            params[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"parameter {k!r} is not a number") from None
    return name, params


def _levels(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None
    if len(out) < 2 or any(n < 1 for n in out):
        raise argparse.ArgumentTypeError("need at least two positive levels")
    return out


def _grid_args(p, d_default: int = 1):
    p.add_argument("--d", type=int, default=d_default, choices=(1, 2))
    p.add_argument("--nt", type=int, default=8, help="N_tau")
    p.add_argument("--nx", type=int, default=40, help="N_h")
    p.add_argument("--t0", type=float, default=1e-4)
    p.add_argument("--t1", type=float, default=1e-3)


def _out_arg(p):
    p.add_argument("--out", type=Path, default=None, help="output directory")


def _make_spec(args) -> GridSpec:
    return GridSpec(args.t0, args.t1, args.d, args.nt, args.nx)


def _initial_qpme(text: str, spec: GridSpec, aniso_eps: float | None) -> np.ndarray:
    if os.path.exists(text):
        return _field_initial(text, spec)
    name, par = _spec_named(text)
    gamma = par.get("gamma", 1.0)
    pts = spec.points()
    if name == "barenblatt":
        if aniso_eps is not None:
            return exact.mapped_anisotropic(spec.T0, pts, aniso_eps, gamma)[0]
        rel = pts - par.get("center", 0.5)
        return exact.barenblatt_u(spec.T0, rel if spec.d > 1 else rel[..., 0], spec.d, gamma)
    if name == "spikes":
        if spec.d != 1:
            raise UsageError("the spike initial condition is one dimensional")
        u0 = np.zeros(spec.N_h)
        c = spec.N_h // 2
        u0[(c - 2 + np.arange(6)) % spec.N_h] = [0.3, 1.0, 0.0, 0.0, 0.0, 0.7]
        return u0
    if name == "constant":
        return np.full(spec.space_shape, par.get("value", 1.0))
    raise UsageError(f"unknown initial condition {name!r}")


def _field_initial(path: str, spec: GridSpec) -> np.ndarray:
    f = read_field(path)
    if f.spec.d != spec.d or f.spec.N_h != spec.N_h:
        raise UsageError(f"{path}: grid does not match --d/--nx")
    return f.values[0]


def _decomposition(text: str | None, spec: GridSpec):
    """Returns (decomposition or None, eps of the mapped tensor or None)."""
    if text is None:
        return None, None
    if os.path.exists(text):
        data = np.loadtxt(text, delimiter=",", ndmin=2)
        d = spec.d
        if data.shape != (spec.N_h ** d, d * d):
            raise UsageError(f"{text}: expected {spec.N_h ** d} rows of {d * d} tensor entries")
        return decompose_field(spec, data.reshape(spec.space_shape + (d, d))), None
    name, par = _spec_named(text)
    if name != "mapped":
        raise UsageError(f"unknown anisotropy {name!r}")
    if spec.d != 2:
        raise UsageError("the mapped anisotropy needs --d 2")
    eps = par.get("eps", 0.035)
    return decompose_field(spec, lambda x: exact.mapped_tensor(x, eps)), eps


# ---------------------------------------------------------------------------
# output

def _summary(pairs: dict) -> str:
    lines = []
    for k, v in pairs.items():
        if isinstance(v, float):
            v = f"{v:.16g}"
        lines.append(f"{k}: {v}")
    return "\n".join(lines) + "\n"


def _emit(args, summary: dict, fields: dict[str, Field] | None = None, extra: dict[str, str] | None = None):
    text = _summary(summary)
    sys.stdout.write(text)
    if args.out is None:
        return
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.txt").write_text(text)
    for name, f in (fields or {}).items():
        write_field(f, args.out / f"{name}.txt", name)
    for name, body in (extra or {}).items():
        (args.out / name).write_text(body)


def _grid_summary(spec: GridSpec) -> dict:
    return {"d": spec.d, "T0": spec.T0, "T": spec.T, "N_tau": spec.N_tau, "N_h": spec.N_h,
            "tau": spec.tau, "h": spec.h}


def _floor_check(u0, nu, duration, summary):
    t_star, floor = rho_floor_estimate(u0, nu, duration)
    summary["rho_floor_T_star"] = t_star
    summary["rho_floor_estimate"] = floor
    if floor < RHO_FLOOR_WARN:
        logger.warning("expected density floor %.3e is below %.0e; the recovered solution "
                       "may be unreliable before the final time", floor, RHO_FLOOR_WARN)
        summary["warning"] = "rho_floor_below_1e-12"


# ---------------------------------------------------------------------------
# subcommands

def _run_solver(args, problem):
    if args.solver == "newton":
        return solve_newton(problem, NewtonConfig(max_iters=args.max_iters or 500))
    cfg = PdConfig(max_iters=args.max_iters or 20000,
                   trace_file=str(args.out / "trace.tsv") if args.out else None)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    return solve_pd(problem, cfg)


def cmd_solve(args) -> int:
    if args.problem == "burgers":
        args.d = 1
    spec = _make_spec(args)
    summary = {"problem": args.problem}
    summary.update(_grid_summary(spec))
    scale = 1.0
    if args.problem == "qpme":
        dec, eps = _decomposition(args.aniso, spec)
        u0 = _initial_qpme(args.init, spec, eps)
        problem = QpmeProblem(spec, u0, dec)
    else:
        if os.path.exists(args.init):
            u0 = _field_initial(args.init, spec)
            problem = BurgersProblem(spec, u0, args.nu)
        else:
            name, par = _spec_named(args.init)
            if name != "hopfcole":
                raise UsageError(f"unknown Burgers initial condition {name!r}")
            window = (par.get("a", BURGERS_WINDOW[0]), par.get("b", BURGERS_WINDOW[1]))
            problem, _ = burgers_problem(spec.N_tau, spec.N_h, args.nu, par.get("re", 5.0),
                                         spec.T0, spec.T, window)
            scale = window[1] - window[0]
            summary["window"] = f"{window[0]!r},{window[1]!r}"
        summary["nu"] = args.nu
        _floor_check(problem.u0 * scale, args.nu, spec.T - spec.T0, summary)
    res = _run_solver(args, problem)
    if args.problem == "qpme":
        v = phi_to_mrho_qpme(res.phi, spec, problem.dec)
        m_tag, rho_tag = StaggerTag.of(spec.d, True), StaggerTag.of(spec.d)
    else:
        v = phi_to_mrho_burgers(res.phi, spec)
        m_tag, rho_tag = StaggerTag.of(1, True), StaggerTag.of(1, False, True)
    resid = residuals(problem, v)
    summary.update({
        "solver": res.solver, "iterations": res.iterations, "converged": res.converged,
        "energy": res.energy, "max_residual": max(resid.values()),
        "solver_residual": res.max_residual, "min_rho": res.min_rho,
    })
    # wall time goes to the log only, so that reruns give identical summaries
    logger.info("solve took %.2fs", float(res.info.get("seconds", 0.0)))
    fields = {
        "u": Field(spec, StaggerTag.of(spec.d, True), scale * res.u),
        "phi": Field(spec, StaggerTag.of(spec.d), res.phi),
        "m": Field(spec, m_tag, res.m),
        "rho": Field(spec, rho_tag, res.rho),
    }
    _emit(args, summary, fields)
    return 0


def cmd_exact(args) -> int:
    spec = GridSpec(args.t0, args.t1, args.d, args.nt, args.nx)
    pts = spec.points()
    rel = pts - 0.5
    rel1 = rel if spec.d > 1 else rel[..., 0]
    summary = {"solution": args.kind}
    summary.update(_grid_summary(spec))
    fields = {}
    if args.kind == "barenblatt":
        u = np.stack([exact.barenblatt_u(t, rel1, spec.d, args.gamma) for t in spec.times(True)])
        fields["u"] = Field(spec, StaggerTag.of(spec.d, True), u)
    elif args.kind == "barenblatt-dual":
        parts = [exact.barenblatt_dual(t, rel1, spec.d, spec.T, args.gamma) for t in spec.times()]
        fields["phi"] = Field(spec, StaggerTag.of(spec.d), np.stack([p[0] for p in parts]))
        fields["rho"] = Field(spec, StaggerTag.of(spec.d), np.stack([p[2] for p in parts]))
        mt = spec.times(True)
        fields["m"] = Field(spec, StaggerTag.of(spec.d, True),
                            np.stack([exact.barenblatt_dual(t, rel1, spec.d, spec.T, args.gamma)[1]
                                      for t in mt]))
    elif args.kind == "hopfcole":
        if spec.d != 1:
            raise UsageError("hopfcole is one dimensional")
        a, b = args.window
        xs = a + (b - a) * spec.axis()
        u = np.stack([exact.hopf_cole(t, xs, args.nu, args.re) for t in spec.times(True)])
        fields["u"] = Field(spec, StaggerTag.of(1, True), u)
        summary["window"] = f"{a!r},{b!r}"
    else:
        if spec.d != 2:
            raise UsageError("mapped needs --d 2")
        u = np.stack([exact.mapped_anisotropic(t, pts, args.eps, args.gamma)[0]
                      for t in spec.times(True)])
        fields["u"] = Field(spec, StaggerTag.of(2, True), u)
        _, J = exact.psi_map(pts, args.eps)
        summary["det_error"] = float(np.max(np.abs(np.linalg.det(J) - 1)))
        summary["distortion_max"] = float(np.max(exact.distortion_ratio(J)))
    _emit(args, summary, fields)
    return 0


def cmd_convergence(args) -> int:
    if args.problem == "qpme":
        table = qpme_barenblatt_ladder(args.levels, args.nx_ratio, args.t0, args.t1, args.d,
                                       args.gamma, args.solver, mollify=args.mollify)
    else:
        table = burgers_ladder(args.levels, args.nx_ratio, args.nu, args.re, args.t0, args.t1,
                               solver=args.solver)
    # wall times are logged rather than written, so that reruns give identical tables
    logger.info("runtimes per level: %s", table.extra.pop("runtime", []))
    text = table.to_text()
    sys.stdout.write(text)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "errors.tsv").write_text(text)
    return 0


def cmd_baseline(args) -> int:
    theta = {"explicit": 1.0, "implicit": 0.0, "midpoint": 0.5}[args.scheme]
    spec = _make_spec(args)
    u0 = _initial_qpme(args.init, spec, None)
    u = theta_scheme(spec, u0, theta)
    from .baseline import cfl_bound
    summary = {"scheme": args.scheme, "theta": theta}
    summary.update(_grid_summary(spec))
    summary["cfl_bound"] = cfl_bound(u0, spec.h)
    summary["max_u"] = float(np.max(u))
    summary["min_u"] = float(np.min(u))
    _emit(args, summary, {"u": Field(spec, StaggerTag.of(spec.d, True), u)})
    return 0


def cmd_selling(args) -> int:
    a, b, c = args.matrix
    D = np.array([[a, b], [b, c]], dtype=np.float64)
    off, w = selling_many(D[None])
    lines = [f"{int(e[0])} {int(e[1])} {wt:.17g}" for e, wt in zip(off[0], w[0])]
    err = float(np.max(np.abs(reconstruct(off[0], w[0]) - D)))
    logger.debug("reconstruction error %.3e", err)
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bbb", description="Space-time convex solvers for the porous medium and Burgers equations.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--seed", type=int, default=0, help="seed for randomized probes")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one problem instance")
    s.add_argument("problem", choices=("qpme", "burgers"))
    _grid_args(s)
    s.add_argument("--init", default="barenblatt:gamma=1",
                   help="barenblatt:gamma=G | spikes | constant:value=V | hopfcole:re=R,a=A,b=B | FILE")
    s.add_argument("--aniso", default=None, help="mapped:eps=E or a CSV file of tensors")
    s.add_argument("--nu", type=float, default=1e-2)
    s.add_argument("--solver", choices=("newton", "pd"), default="newton")
    s.add_argument("--max-iters", type=int, default=None)
    _out_arg(s)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("exact", help="sample a closed-form solution")
    e.add_argument("kind", choices=("barenblatt", "barenblatt-dual", "hopfcole", "mapped"))
    _grid_args(e)
    e.add_argument("--gamma", type=float, default=1.0)
    e.add_argument("--nu", type=float, default=1e-2)
    e.add_argument("--re", type=float, default=5.0)
    e.add_argument("--eps", type=float, default=0.035)
    e.add_argument("--window", type=float, nargs=2, default=BURGERS_WINDOW)
    _out_arg(e)
    e.set_defaults(func=cmd_exact)

    c = sub.add_parser("convergence", help="refinement study against a closed form")
    c.add_argument("problem", choices=("qpme", "burgers"))
    c.add_argument("--levels", type=_levels, default=[4, 8, 16])
    c.add_argument("--nx-ratio", type=int, default=5)
    c.add_argument("--d", type=int, default=1, choices=(1, 2))
    c.add_argument("--t0", type=float, default=None)
    c.add_argument("--t1", type=float, default=None)
    c.add_argument("--gamma", type=float, default=1.0)
    c.add_argument("--nu", type=float, default=1e-2)
    c.add_argument("--re", type=float, default=5.0)
    c.add_argument("--solver", choices=("newton", "pd"), default="newton")
    c.add_argument("--mollify", action="store_true", help="recover u from the mollified potential")
    _out_arg(c)
    c.set_defaults(func=cmd_convergence)

    b = sub.add_parser("baseline", help="classical theta time stepping")
    b.add_argument("scheme", choices=("explicit", "implicit", "midpoint"))
    _grid_args(b)
    b.add_argument("--init", default="barenblatt:gamma=1")
    _out_arg(b)
    b.set_defaults(func=cmd_baseline)

    se = sub.add_parser("selling", help="decompose a 2x2 SPD matrix [[a, b], [b, c]]")
    se.add_argument("--matrix", type=float, nargs=3, required=True, metavar=("A", "B", "C"))
    se.set_defaults(func=cmd_selling)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed)
    if args.command == "convergence":
        default_window = (0.1, 1.0) if args.problem == "burgers" else (1e-4, 1e-3)
        args.t0 = default_window[0] if args.t0 is None else args.t0
        args.t1 = default_window[1] if args.t1 is None else args.t1
    try:
        return args.func(args)
    except (UsageError, GridError, ProblemTooLarge, ValueError) as exc:
        sys.stderr.write(f"bbb: error: {exc}\n")
        return 1
    except NUMERICAL_ERRORS as exc:
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"error: kind={type(exc).__name__} message={msg}\n")
        return 2


def main() -> None:
    sys.exit(run())
