"""Selling decomposition of 2x2 tensors and the divergence-form operator L_h.

A symmetric positive definite D is written D = sum_e lambda_e e e^T with
integer offsets e and nonnegative weights, using Selling's obtuse superbase
reduction.  The weights then define

    -L_h u(x) = (2h)^-2 sum_e [ lambda_e(x + h e) (u(x + 2 h e) - u(x))
                               + lambda_e(x - h e) (u(x - 2 h e) - u(x)) ],

a symmetric positive semidefinite discretization of -div(D grad u) whose
off-diagonal entries are nonpositive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid import GridSpec, shift_index

logger = logging.getLogger(__name__)

# Index triples (i, j, k): the pair (i, j) and the remaining superbase element.
_PAIRS = ((0, 1, 2), (0, 2, 1), (1, 2, 0))


class NotPositiveDefinite(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


def _canonical(e: np.ndarray) -> np.ndarray:
    """Flip the sign of each offset so its first nonzero entry is positive."""
    first = np.where(e[..., 0] != 0, e[..., 0], e[..., 1])
    return np.where((first < 0)[..., None], -e, e)


def selling_many(D: np.ndarray, max_iter: int | None = None):
    """Vectorized Selling reduction of an array of 2x2 SPD tensors.

    Returns (offsets, weights) with shapes D.shape[:-2] + (3, 2) and (3,);
    offsets are canonically signed and weights are clipped at zero.
    """
    D = np.asarray(D, dtype=np.float64)
    if D.shape[-2:] != (2, 2):
        raise ValueError("expected trailing 2x2 tensors")
    D = 0.5 * (D + np.swapaxes(D, -1, -2))
    eig = np.linalg.eigvalsh(D)
    if np.any(eig[..., 0] <= 0) or not np.all(np.isfinite(eig)):
        raise NotPositiveDefinite("tensor is not symmetric positive definite")
    if max_iter is None:
        # The exchange count grows like the square root of the condition number.
        cond = float(np.max(eig[..., 1] / eig[..., 0]))
        max_iter = 20 + int(np.ceil(2 * np.sqrt(cond)))
    shape = D.shape[:-2]
    b = np.broadcast_to(np.array([[1, 0], [0, 1], [-1, -1]]), shape + (3, 2)).copy()
    tol = 1e-14 * np.trace(D, axis1=-2, axis2=-1)

    Dx = D.astype(np.longdouble)

    def products(b):
        # Extended precision: with large offsets the three terms of b_i.D b_j
        # cancel, and the weights feed a reconstruction with |e|^2 amplification.
        bx = b.astype(np.longdouble)
        Db = np.einsum("...ij,...kj->...ki", Dx, bx)
        return np.stack([np.einsum("...i,...i->...", bx[..., i, :], Db[..., j, :])
                         for i, j, _ in _PAIRS], axis=-1)

    for _ in range(max_iter + 1):
        p = products(b)
        worst = np.argmax(p, axis=-1)
        active = np.take_along_axis(p, worst[..., None], -1)[..., 0] > tol
        if not active.any():
            break
        new = b.copy()
        for n, (i, j, k) in enumerate(_PAIRS):
            sel = active & (worst == n)
            if not sel.any():
                continue
            bi, bj = b[sel][:, i], b[sel][:, j]
            nb = np.stack([-bi, bj, bi - bj], axis=1)
            new[sel] = nb
        b = new
    else:
        raise NoConvergence("Selling reduction did not terminate within the iteration cap")

    p = products(b)
    weights = np.empty(shape + (3,))
    offsets = np.empty(shape + (3, 2), dtype=np.int64)
    for n, (i, j, k) in enumerate(_PAIRS):
        ek = b[..., k, :]
        offsets[..., n, :] = np.stack([-ek[..., 1], ek[..., 0]], axis=-1)
        weights[..., n] = np.maximum(-p[..., n], 0.0).astype(np.float64)
    return _canonical(offsets), weights


def selling_decompose(D) -> list[tuple[tuple[int, int], float]]:
    """Decompose one 2x2 SPD tensor; zero-weight offsets are dropped.

    >>> selling_decompose([[2.0, -1.0], [-1.0, 2.0]])
    [((1, 0), 1.0), ((0, 1), 1.0), ((1, -1), 1.0)]
    """
    off, w = selling_many(np.asarray(D, dtype=np.float64))
    out = [(tuple(int(c) for c in e), float(x)) for e, x in zip(off, w) if x > 0]
    return sorted(out, key=lambda p: (abs(p[0][0]) + abs(p[0][1]), -p[0][0], -p[0][1]))


def reconstruct(offsets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_e lambda_e e e^T for arrays produced by selling_many."""
    e = offsets.astype(np.float64)
    return np.einsum("...n,...ni,...nj->...ij", weights, e, e)


@dataclass
class TensorDecomposition:
    """Offsets E and weight arrays W with W[n][j] = lambda_{e_n}(x_j + h e_n)."""

    offsets: np.ndarray  # (|E|, d) int
    weights: np.ndarray  # (|E|,) + (N_h,)*d
    N_h: int

    @property
    def d(self) -> int:
        return self.offsets.shape[1]

    @classmethod
    def isotropic(cls, d: int, N_h: int, coeff: float = 1.0) -> "TensorDecomposition":
        offsets = np.eye(d, dtype=np.int64)
        weights = np.full((d,) + (N_h,) * d, float(coeff))
        return cls(offsets, weights, N_h)

    def minus_weights(self, n: int) -> np.ndarray:
        """lambda_e(x - h e) on the centered grid."""
        return shift_index(self.weights[n], -self.offsets[n], first_axis=0)


def decompose_field(spec: GridSpec, D: Callable[[np.ndarray], np.ndarray] | np.ndarray,
                    ) -> TensorDecomposition:
    """Sample a tensor field at the half-shifted points and decompose it.

    D is either a callable mapping points (..., d) to tensors (..., d, d) (or
    scalars in 1D) or an array of centered samples of shape (N_h,)*d + (d, d);
    in the latter case the value at x + h e is the average of the samples at x
    and x + 2 h e.
    """
    d, N_h, h = spec.d, spec.N_h, spec.h
    centered = spec.points()

    if callable(D):
        def tensors_at(e):
            return np.asarray(D(centered + h * np.asarray(e, dtype=np.float64)), dtype=np.float64)
    else:
        samples = np.asarray(D, dtype=np.float64)

        def tensors_at(e):
            return 0.5 * (samples + shift_index(samples, e, first_axis=0))

    if d == 1:
        w = tensors_at((1,)).reshape(N_h)
        if np.any(w <= 0):
            raise NotPositiveDefinite("diffusion coefficient must be positive")
        return TensorDecomposition(np.array([[1]]), w[None, :], N_h)

    def offsets_of(T):
        off, w = selling_many(T)
        used = off[w > 0]
        return {tuple(int(c) for c in e) for e in used.reshape(-1, 2)}

    base = tensors_at((0, 0))
    pending = sorted(offsets_of(base))
    known: dict[tuple[int, int], np.ndarray] = {}
    while pending:
        e = pending.pop(0)
        if e in known:
            continue
        T = tensors_at(e)
        off, w = selling_many(T)
        match = np.all(off == np.array(e), axis=-1)
        known[e] = np.where(match, w, 0.0).sum(axis=-1)
        for f in offsets_of(T):
            if f not in known and f not in pending:
                pending.append(f)
    keys = sorted(known, key=lambda e: (abs(e[0]) + abs(e[1]), -e[0], -e[1]))
    offsets = np.array(keys, dtype=np.int64)
    weights = np.stack([known[k] for k in keys])
    logger.debug("decomposition offsets %s", keys)
    return TensorDecomposition(offsets, weights, N_h)


def apply_Lh(dec: TensorDecomposition, u: np.ndarray, h: float) -> np.ndarray:
    """Apply L_h to u over the trailing d axes (leading axes are batched)."""
    d = dec.d
    lead = u.ndim - d
    out = np.zeros_like(u, dtype=np.float64)
    for n, e in enumerate(dec.offsets):
        wp = dec.weights[n]
        wm = dec.minus_weights(n)
        up = shift_index(u, e, first_axis=lead)
        um = shift_index(u, -e, first_axis=lead)
        out += wp * (up - u) + wm * (um - u)
    return -out / (2 * h) ** 2


def lh_matrix(dec: TensorDecomposition, h: float) -> sp.csr_matrix:
    """Sparse matrix of L_h acting on row-major flattened spatial arrays."""
    d, N = dec.d, dec.N_h
    shape = (N,) * d
    n = N ** d
    idx = np.arange(n).reshape(shape)
    rows, cols, vals = [], [], []
    for k, e in enumerate(dec.offsets):
        wp = dec.weights[k].ravel()
        wm = dec.minus_weights(k).ravel()
        jp = shift_index(idx, e, first_axis=0).ravel()
        jm = shift_index(idx, -e, first_axis=0).ravel()
        i = idx.ravel()
        rows += [i, i, i, i]
        cols += [jp, i, jm, i]
        vals += [-wp, wp, -wm, wm]
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return (A / (2 * h) ** 2).tocsr()
