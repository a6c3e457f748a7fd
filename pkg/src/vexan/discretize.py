"""Box domains, uniform cell-centred grids, grid functions and cube families.

Everything downstream computes on a :class:`GridFunction`: samples at the
cell centres of a uniform grid over ``[-L, L]^n``, extended by zero outside
the box.  Integrals use the midpoint rule.  Cubes are grid-aligned and are
addressed by the index of their lowest cell plus a side length in cells.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class BoxDomain:
    dim: int
    half_extent: float

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise GridError("only n in {1, 2} is supported")
        if not self.half_extent > 0:
            raise GridError("half_extent must be positive")

    @property
    def volume(self) -> float:
        return (2.0 * self.half_extent) ** self.dim


@dataclass(frozen=True)
class UniformGrid:
    domain: BoxDomain
    points_per_axis: int

    def __post_init__(self) -> None:
        if self.points_per_axis < 4:
            raise GridError("need at least 4 points per axis")

    @classmethod
    def make(cls, dim: int, half_extent: float, n: int) -> "UniformGrid":
        return cls(BoxDomain(dim, half_extent), n)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_axis(self) -> int:
        return self.points_per_axis

    @property
    def half_extent(self) -> float:
        return self.domain.half_extent

    @property
    def h(self) -> float:
        return 2.0 * self.domain.half_extent / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Cell-centre coordinates along one axis."""
        return -self.half_extent + (np.arange(self.points_per_axis) + 0.5) * self.h

    @cached_property
    def _points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    def points(self) -> np.ndarray:
        """All cell centres as a ``(N**n, n)`` array in row-major order."""
        return self._points

    def index_of(self, x) -> tuple[int, ...]:
        """Index of the cell whose closed region contains ``x`` (lowest if on a face)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise GridError("point has wrong dimension")
        if np.any(np.abs(x) > self.half_extent + 1e-12):
            raise GridError(f"point {x} outside the domain")
        idx = np.floor((x + self.half_extent) / self.h).astype(int)
        return tuple(int(i) for i in np.clip(idx, 0, self.points_per_axis - 1))

    def refined(self, factor: int = 2) -> "UniformGrid":
        return UniformGrid(self.domain, self.points_per_axis * factor)


class GridFunction:
    """Immutable samples of a function at the cell centres of a grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: UniformGrid, values) -> None:
        arr = np.array(values, dtype=float).reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise GridError("grid function values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    @classmethod
    def from_callable(cls, grid: UniformGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample ``fn`` (mapping ``(k, n)`` points to ``(k,)`` values) at cell centres."""
        return cls(grid, np.asarray(fn(grid.points()), dtype=float))

    @classmethod
    def constant(cls, grid: UniformGrid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.shape, float(c)))

    def _other(self, other) -> np.ndarray | float:
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values))

    def __pow__(self, s: float):
        return GridFunction(self.grid, self.values**s)

    def __repr__(self) -> str:
        return f"GridFunction(N={self.grid.n_axis}, dim={self.grid.dim}, max={np.max(np.abs(self.values)):.4g})"

    def is_zero(self) -> bool:
        return not np.any(self.values)


@dataclass(frozen=True)
class Cube:
    """Grid-aligned cube: lowest cell index ``anchor`` and side in cells."""

    anchor: tuple[int, ...]
    side_cells: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchor", tuple(int(a) for a in self.anchor))
        if self.side_cells < 1:
            raise GridError("side_cells must be >= 1")

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(a, a + self.side_cells) for a in self.anchor)

    def volume(self, grid: UniformGrid) -> float:
        return (self.side_cells * grid.h) ** grid.dim

    def side_length(self, grid: UniformGrid) -> float:
        return self.side_cells * grid.h

    def center(self, grid: UniformGrid) -> np.ndarray:
        return -grid.half_extent + (np.array(self.anchor) + 0.5 * self.side_cells) * grid.h

    def inside(self, grid: UniformGrid) -> bool:
        return all(0 <= a and a + self.side_cells <= grid.n_axis for a in self.anchor)

    def contains_index(self, idx) -> bool:
        return all(a <= i < a + self.side_cells for a, i in zip(self.anchor, idx))


@dataclass(frozen=True)
class CubeFamily:
    """Finite surrogate for "all cubes": every grid cube, or the dyadic ones.

    ``min_side_cells``/``max_side_cells`` restrict side lengths (in cells).
    """

    policy: str = "all"
    max_side_cells: int | None = None
    min_side_cells: int = 1

    def __post_init__(self) -> None:
        pol = {"all-grid-cubes": "all", "all_grid_cubes": "all"}.get(self.policy, self.policy)
        if pol not in ("all", "dyadic"):
            raise GridError(f"unknown cube policy {self.policy!r}")
        object.__setattr__(self, "policy", pol)

    def sides(self, grid: UniformGrid) -> list[int]:
        top = grid.n_axis if self.max_side_cells is None else min(self.max_side_cells, grid.n_axis)
        if self.policy == "dyadic":
            out, s = [], 1
            while s <= top:
                out.append(s)
                s *= 2
        else:
            out = list(range(1, top + 1))
        return [s for s in out if s >= self.min_side_cells]

    def anchor_step(self, s: int) -> int:
        return s if self.policy == "dyadic" else 1


ALL_CUBES = CubeFamily("all")


def integrate(f: GridFunction) -> float:
    """Midpoint rule: sum of samples times the cell volume."""
    return float(np.sum(f.values) * f.grid.cell_volume)


def cube_average(f: GridFunction, Q: Cube) -> float:
    if not Q.inside(f.grid):
        raise GridError("cube not inside the grid")
    return float(np.mean(f.values[Q.slices()]))


def restrict(f: GridFunction, Q: Cube) -> GridFunction:
    """f times the indicator of Q."""
    mask = np.zeros(f.grid.shape)
    mask[Q.slices()] = 1.0
    return GridFunction(f.grid, f.values * mask)


def indicator(grid: UniformGrid, Q: Cube) -> GridFunction:
    return restrict(GridFunction.constant(grid, 1.0), Q)


def _anchors(grid: UniformGrid, fam: CubeFamily, s: int) -> Iterator[tuple[int, ...]]:
    step = fam.anchor_step(s)
    axis = range(0, grid.n_axis - s + 1, step)
    return itertools.product(axis, repeat=grid.dim)


def enumerate_cubes(grid: UniformGrid, fam: CubeFamily = ALL_CUBES) -> list[Cube]:
    """Family members ordered by side, then anchor lexicographically."""
    return [Cube(a, s) for s in fam.sides(grid) for a in _anchors(grid, fam, s)]


def cubes_containing(grid: UniformGrid, x, fam: CubeFamily = ALL_CUBES) -> list[Cube]:
    """Family cubes whose closed region contains the point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grid.index_of(x)  # domain check
    tol = 1e-12 * max(1.0, grid.half_extent)
    pos = (x + grid.half_extent) / grid.h  # position in cell units
    out = []
    for Q in enumerate_cubes(grid, fam):
        lo = np.array(Q.anchor, dtype=float)
        if np.all(pos >= lo - tol) and np.all(pos <= lo + Q.side_cells + tol):
            out.append(Q)
    return out


# -- vectorised per-side machinery ------------------------------------------


def side_windows(arr: np.ndarray, s: int, step: int = 1) -> np.ndarray:
    """Cube windows of side ``s``: shape ``anchors + (s**n,)``, anchors strided by ``step``."""
    n = arr.ndim
    win = sliding_window_view(arr, (s,) * n)
    if step > 1:
        win = win[(slice(None, None, step),) * n]
    return win.reshape(win.shape[:n] + (s**n,))


def spread_max(values: np.ndarray, s: int, step: int, n_axis: int) -> np.ndarray:
    """For each cell, the max of ``values`` over family anchors whose cube covers it.

    ``values`` is indexed by anchor (strided by ``step``); cells covered by no
    cube get ``-inf``.
    """
    n = values.ndim
    full = np.full((n_axis - s + 1,) * n, -np.inf)
    full[(slice(None, None, step),) * n] = values
    out = full
    for ax in range(n):
        pad = [(0, 0)] * n
        pad[ax] = (s - 1, s - 1)
        padded = np.pad(out, pad, constant_values=-np.inf)
        out = sliding_window_view(padded, s, axis=ax).max(axis=-1)
    return out


def sup_over_cubes(
    grid: UniformGrid,
    fam: CubeFamily,
    per_side: Callable[[int, int], np.ndarray],
) -> tuple[np.ndarray, float, Cube | None]:
    """Pointwise sup over family cubes containing each cell, plus the global sup.

    ``per_side(s, step)`` returns the per-cube values for cubes of side ``s``
    (indexed by strided anchor).  Returns ``(pointwise, global_max, argmax_cube)``.
    """
    point = np.full(grid.shape, -np.inf)
    best, best_q = -np.inf, None
    for s in fam.sides(grid):
        step = fam.anchor_step(s)
        vals = per_side(s, step)
        if vals.size == 0:
            continue
        np.maximum(point, spread_max(vals, s, step, grid.n_axis), out=point)
        k = int(np.argmax(vals))
        if vals.flat[k] > best:
            best = float(vals.flat[k])
            idx = np.unravel_index(k, vals.shape)
            best_q = Cube(tuple(int(i) * step for i in idx), s)
    return point, best, best_q


def cube_volumes(grid: UniformGrid, s: int) -> float:
    return (s * grid.h) ** grid.dim


# -- non-aligned boxes ------------------------------------------------------


def box_weights(grid: UniformGrid, center, side: float) -> np.ndarray:
    """Fraction of each cell covered by the axis-parallel cube (center, side)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    edges_lo = grid.axis - grid.h / 2
    w = None
    for c in center:
        lo, hi = c - side / 2, c + side / 2
        frac = np.clip(np.minimum(edges_lo + grid.h, hi) - np.maximum(edges_lo, lo), 0.0, None) / grid.h
        w = frac if w is None else np.multiply.outer(w, frac)
    return w


def box_weights_many(grid: UniformGrid, centers, sides) -> np.ndarray:
    """Cell coverage fractions for many cubes at once: shape ``(k,) + grid.shape``."""
    centers = np.asarray(centers, dtype=float).reshape(-1, grid.dim)
    half = np.asarray(sides, dtype=float).reshape(-1, 1) / 2
    lo_edge = grid.axis - grid.h / 2
    w = None
    for ax in range(grid.dim):
        lo = centers[:, ax : ax + 1] - half
        hi = centers[:, ax : ax + 1] + half
        frac = np.clip(np.minimum(lo_edge + grid.h, hi) - np.maximum(lo_edge, lo), 0.0, None) / grid.h
        w = frac if w is None else w[:, :, None] * frac[:, None, :]
    return w


def box_inside(grid: UniformGrid, center, side: float) -> bool:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    return bool(np.all(np.abs(center) + side / 2 <= grid.half_extent + 1e-12))


def box_average(f: GridFunction, center, side: float) -> float:
    w = box_weights(f.grid, center, side)
    return float(np.sum(w * f.values) / np.sum(w))


# -- CSV exchange -----------------------------------------------------------


def write_grid_function(path: str | Path, f: GridFunction) -> None:
    """Three header rows (dim, N, L) followed by row-major values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dim", f.grid.dim])
        w.writerow(["N", f.grid.n_axis])
        w.writerow(["L", repr(f.grid.half_extent)])
        for v in f.values.ravel():
            w.writerow([repr(float(v))])


def read_grid_function(path: str | Path) -> GridFunction:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        header = {rows[i][0].strip(): rows[i][1].strip() for i in range(3)}
        dim, n, L = int(header["dim"]), int(header["N"]), float(header["L"])
        vals = np.array([float(r[0]) for r in rows[3:]])
    except (KeyError, IndexError, ValueError) as exc:
        raise GridError(f"malformed grid-function CSV {path}: {exc}") from exc
    grid = UniformGrid.make(dim, L, n)
    if vals.size != grid.size:
        raise GridError(f"expected {grid.size} values, found {vals.size}")
    return GridFunction(grid, vals)


def window_means(arr: np.ndarray, s: int, step: int = 1) -> np.ndarray:
    """Average of ``arr`` over every family cube of side ``s``."""
    return side_windows(arr, s, step).mean(axis=-1)


def mean_oscillation(arr: np.ndarray, s: int, step: int = 1) -> np.ndarray:
    """|Q|^-1 int_Q |f - f_Q| for every cube of side ``s``."""
    win = side_windows(arr, s, step)
    return np.abs(win - win.mean(axis=-1, keepdims=True)).mean(axis=-1)
