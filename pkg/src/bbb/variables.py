"""Problem descriptions, primal variables and solver results."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .anisotropy import TensorDecomposition
from .grid import GridSpec


@dataclass
class QpmeProblem:
    """Dual problem of u_t = -L u^2 / 2 with initial data u0 on the centered space grid.

    dec is None for the isotropic operator (L = minus the Laplacian).
    """

    spec: GridSpec
    u0: np.ndarray
    dec: TensorDecomposition | None = None

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=np.float64).reshape(self.spec.space_shape)
        if self.dec is not None and self.dec.N_h != self.spec.N_h:
            raise ValueError("decomposition grid does not match the problem grid")

    @property
    def decomposition(self) -> TensorDecomposition:
        if self.dec is None:
            return TensorDecomposition.isotropic(self.spec.d, self.spec.N_h)
        return self.dec

    @property
    def anisotropic(self) -> bool:
        return self.dec is not None


@dataclass
class BurgersProblem:
    """Dual problem of u_t + (u^2/2)_x = nu u_xx in one space dimension."""

    spec: GridSpec
    u0: np.ndarray
    nu: float = 0.0

    def __post_init__(self):
        if self.spec.d != 1:
            raise ValueError("Burgers problems are one dimensional")
        if self.nu < 0:
            raise ValueError("viscosity must be nonnegative")
        self.u0 = np.asarray(self.u0, dtype=np.float64).reshape(self.spec.space_shape)


@dataclass
class QpmeVars:
    """Momentum m (staggered times) and density rho (centered times).

    Anisotropic problems carry the auxiliary fields me[n] = d_h^{e_n} m and
    ne[n] = lambda_{e_n} me[n], sampled at x + h e_n.  Periodized variables
    (periodic=True) hold 2 N_tau time samples each.
    """

    m: np.ndarray
    rho: np.ndarray
    me: np.ndarray | None = None
    ne: np.ndarray | None = None
    periodic: bool = False


@dataclass
class BurgersVars:
    """Burgers variables; rho lives on the staggered space grid.

    In periodized form the momentum is duplicated into m_plus and m_minus and
    a_plus, a_minus hold copies of -nu d_h rho (None when nu = 0).
    """

    m_plus: np.ndarray
    m_minus: np.ndarray
    rho: np.ndarray
    a_plus: np.ndarray | None = None
    a_minus: np.ndarray | None = None
    periodic: bool = False


@dataclass
class SolveResult:
    """Output of a solver in physical (non-periodized) variables."""

    solver: str
    phi: np.ndarray  # centered times, phi[-1] == 0
    m: np.ndarray  # staggered times
    rho: np.ndarray  # centered times
    u: np.ndarray  # recovered solution on staggered times
    energy: float  # physical (rescaled) discrete energy
    iterations: int
    converged: bool
    max_residual: float = 0.0
    trace: list[dict[str, float]] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def min_rho(self) -> float:
        return float(np.min(self.rho))


class Layout:
    """Pack named arrays into one flat float64 vector and back."""

    def __init__(self, shapes: dict[str, tuple[int, ...]]):
        self.shapes = dict(shapes)
        self.slices = {}
        start = 0
        for name, shape in self.shapes.items():
            n = int(np.prod(shape))
            self.slices[name] = slice(start, start + n)
            start += n
        self.size = start

    def unpack(self, z: np.ndarray) -> dict[str, np.ndarray]:
        return {k: z[s].reshape(self.shapes[k]) for k, s in self.slices.items()}

    def pack(self, parts: dict[str, np.ndarray]) -> np.ndarray:
        z = np.empty(self.size)
        for k, s in self.slices.items():
            z[s] = np.asarray(parts[k]).ravel()
        return z
