"""Staggered space-time grids and the finite difference operators on them.

Time runs over [T0, T] with half timestep tau = (T - T0) / (2 N_tau).  The
centered time grid has N_tau + 1 samples T0, T0 + 2 tau, ..., T and the
staggered grid has N_tau samples T0 + tau, ..., T - tau.  Space is the unit
torus in dimension d with half gridscale h = 1 / (2 N_h); a centered axis holds
the points 2 h i and a staggered axis the points 2 h i + h, i = 0..N_h - 1.

Field values are stored as float64 arrays of shape (n_times,) + (N_h,) * d,
time slowest, row-major in space.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GridError(ValueError):
    """Invalid grid parameters or mismatched field tags."""


@dataclass(frozen=True)
class GridSpec:
    T0: float
    T: float
    d: int
    N_tau: int
    N_h: int

    def __post_init__(self):
        if not self.T > self.T0:
            raise GridError(f"need T > T0, got T0={self.T0}, T={self.T}")
        if self.d not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.d}")
        if self.N_tau < 1 or self.N_h < 1:
            raise GridError("N_tau and N_h must be positive")

    @property
    def tau(self) -> float:
        return (self.T - self.T0) / (2 * self.N_tau)

    @property
    def h(self) -> float:
        return 1.0 / (2 * self.N_h)

    @property
    def space_shape(self) -> tuple[int, ...]:
        return (self.N_h,) * self.d

    @property
    def cell_volume(self) -> float:
        """Space-time volume 2 tau (2 h)^d of one staggered cell."""
        return 2 * self.tau * (2 * self.h) ** self.d

    def times(self, staggered: bool = False) -> np.ndarray:
        k = np.arange(self.N_tau if staggered else self.N_tau + 1)
        return self.T0 + self.tau * (2 * k + (1 if staggered else 0))

    def axis(self, offset: int = 0) -> np.ndarray:
        """Positions 2 h i + offset h on one axis."""
        return 2 * self.h * np.arange(self.N_h) + offset * self.h

    def points(self, offsets: Sequence[int] | None = None) -> np.ndarray:
        """Spatial sample positions, shape (N_h,)*d + (d,)."""
        if offsets is None:
            offsets = (0,) * self.d
        axes = [self.axis(o) for o in offsets]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class StaggerTag:
    time: bool = False
    space: tuple[bool, ...] = field(default=())

    @classmethod
    def of(cls, d: int, time: bool = False, space: bool | Sequence[bool] = False):
        if isinstance(space, (bool, np.bool_)):
            space = (bool(space),) * d
        return cls(bool(time), tuple(bool(s) for s in space))


@dataclass
class Field:
    """Grid function together with the grid it lives on."""

    spec: GridSpec
    tag: StaggerTag
    values: np.ndarray

    def __post_init__(self):
        if len(self.tag.space) != self.spec.d:
            raise GridError("stagger tag dimension does not match the grid")
        self.values = np.asarray(self.values, dtype=np.float64)
        nt = self.spec.N_tau if self.tag.time else self.spec.N_tau + 1
        want = (nt,) + self.spec.space_shape
        if self.values.shape != want:
            if self.values.size == int(np.prod(want)):
                self.values = self.values.reshape(want)
            else:
                raise GridError(f"field shape {self.values.shape} != {want}")

    @property
    def times(self) -> np.ndarray:
        return self.spec.times(self.tag.time)

    def points(self) -> np.ndarray:
        return self.spec.points([int(s) for s in self.tag.space])


def _check_same(f: Field, g: Field):
    if f.spec != g.spec or f.tag != g.tag:
        raise GridError("fields live on different grids")


def dt_stagger(f: Field) -> Field:
    """Centered time difference (f(t + tau) - f(t - tau)) / (2 tau).

    Maps a centered-time field to the staggered times and vice versa
    (the latter only on the interior centered times, so the input must be
    centered in time).
    """
    if f.tag.time:
        raise GridError("dt_stagger expects a centered-time field")
    v = (f.values[1:] - f.values[:-1]) / (2 * f.spec.tau)
    return Field(f.spec, StaggerTag(True, f.tag.space), v)


def shift_index(values: np.ndarray, shift: Sequence[int], first_axis: int = 1) -> np.ndarray:
    """Return g with g[..., j] = values[..., j + shift] periodically in space."""
    axes = tuple(range(first_axis, first_axis + len(shift)))
    return np.roll(values, tuple(-int(s) for s in shift), axis=axes)


def dhe_values(values: np.ndarray, h: float, e: Sequence[int], in_offsets: Sequence[int],
               first_axis: int = 1) -> tuple[np.ndarray, tuple[int, ...]]:
    """Array form of the directional difference (f(x + h e) - f(x - h e)) / (2 h).

    Samples on an axis with offset o sit at 2 h j + o h, o in {0, 1}.  The
    output offsets are (o + e) mod 2.
    """
    e = tuple(int(c) for c in e)
    out_off = tuple((o + c) % 2 for o, c in zip(in_offsets, e))
    plus = [(so + c - si) // 2 for si, so, c in zip(in_offsets, out_off, e)]
    minus = [(so - c - si) // 2 for si, so, c in zip(in_offsets, out_off, e)]
    g = (shift_index(values, plus, first_axis) - shift_index(values, minus, first_axis)) / (2 * h)
    return g, out_off


def dhe(f: Field, e: Sequence[int]) -> Field:
    """Centered difference along offset e; flips the stagger on odd components."""
    if len(e) != f.spec.d:
        raise GridError("offset dimension does not match the grid")
    offs = [int(s) for s in f.tag.space]
    g, out = dhe_values(f.values, f.spec.h, e, offs)
    return Field(f.spec, StaggerTag(f.tag.time, tuple(bool(o) for o in out)), g)


def spatial_l1(values: np.ndarray, h: float, d: int) -> np.ndarray:
    """(2h)^d * sum |f| over the trailing d axes."""
    axes = tuple(range(values.ndim - d, values.ndim))
    return (2 * h) ** d * np.abs(values).sum(axis=axes)


def _time_slice(f: Field, t: int | None) -> np.ndarray:
    if t is None:
        if f.values.shape[0] != 1:
            raise GridError("field has several time samples, select one with t=")
        t = 0
    return f.values[t]


def l1_norm(f: Field, t: int | None = None) -> float:
    return float(spatial_l1(_time_slice(f, t), f.spec.h, f.spec.d))


def linf_norm(f: Field, t: int | None = None) -> float:
    return float(np.max(np.abs(_time_slice(f, t))))


# ---------------------------------------------------------------------------
# text serialization

def _header(f: Field) -> str:
    s = f.spec
    stag = "".join("1" if b else "0" for b in f.tag.space)
    return (f"# T0={s.T0!r} T={s.T!r} d={s.d} N_tau={s.N_tau} N_h={s.N_h} "
            f"time_staggered={int(f.tag.time)} space_staggered={stag}")


def field_to_text(f: Field, name: str = "value") -> str:
    pts = f.points().reshape(-1, f.spec.d)
    times = f.times
    nx = pts.shape[0]
    cols = [np.repeat(times, nx)]
    cols += [np.tile(pts[:, i], len(times)) for i in range(f.spec.d)]
    cols.append(f.values.reshape(-1))
    table = np.column_stack(cols)
    buf = io.StringIO()
    names = ["t"] + [f"x{i + 1}" for i in range(f.spec.d)] + [name]
    buf.write(_header(f) + "\n")
    buf.write(",".join(names) + "\n")
    np.savetxt(buf, table, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def write_field(f: Field, path: str | os.PathLike, name: str = "value") -> None:
    with open(path, "w") as fh:
        fh.write(field_to_text(f, name))


def read_field(path: str | os.PathLike) -> Field:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise GridError(f"{path}: missing grid header")
        kv = dict(item.split("=", 1) for item in first[1:].split())
        spec = GridSpec(float(kv["T0"]), float(kv["T"]), int(kv["d"]),
                        int(kv["N_tau"]), int(kv["N_h"]))
        tag = StaggerTag(kv["time_staggered"] == "1",
                         tuple(c == "1" for c in kv["space_staggered"]))
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Field(spec, tag, data[:, -1])
