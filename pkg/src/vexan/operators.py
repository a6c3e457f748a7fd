"""Multilinear kernels, their certification, and operator application by
midpoint quadrature.

Both supported kernels are of convolution type and depend on the
configuration only through s = sum_j |x - y_j|, so each is described by a
scalar profile in s.  For m = 2 the operator at a target x is the bilinear
form f1^T K_x f2 with (K_x)_{ab} = profile(|x - c_a| + |x - c_b|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from vexan.discretize import GridError, GridFunction, UniformGrid

DEFAULT_SEED = 20240601
SUBDIVISION = 4


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """m-linear convolution kernel ``scale * profile(sum_j |x - y_j|)``.

    ``A`` and ``eps`` are the certified size constant and smoothness order;
    ``A_smooth`` is the certified smoothness constant.
    """

    m: int
    n: int
    kind: str
    rho: float = 0.0
    alpha: float = 0.0
    A: float = 1.0
    eps: float = 1.0
    A_smooth: float = math.inf
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.m not in (1, 2) or self.n not in (1, 2):
            raise KernelError("m and n must be 1 or 2")
        if self.kind == "mollified_cz":
            if not self.rho > 0:
                raise KernelError("mollified kernel needs rho > 0")
        elif self.kind == "fractional":
            if not 0 < self.alpha < self.m * self.n:
                raise KernelError("fractional kernel needs 0 < alpha < mn")
        else:
            raise KernelError(f"unknown kernel kind {self.kind!r}")

    @property
    def decay(self) -> float:
        """Exponent d in |K| ~ s^-d."""
        mn = self.m * self.n
        return mn if self.kind == "mollified_cz" else mn - self.alpha

    def profile(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "mollified_cz":
            return self.scale * (self.rho + s) ** (-self.decay)
        with np.errstate(divide="ignore"):
            return self.scale * s ** (-self.decay)

    def __call__(self, x, ys: Sequence) -> np.ndarray:
        """Evaluate at points ``x`` (..., n) and ``ys`` (m arrays shaped like x)."""
        if len(ys) != self.m:
            raise KernelError(f"kernel takes {self.m} y arguments")
        s = sum(np.linalg.norm(self._as_points(x) - self._as_points(y), axis=-1) for y in ys)
        return self.profile(s)

    def _as_points(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.n == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        return z

    def scaled(self, c: float) -> "KernelSpec":
        return replace(self, scale=self.scale * c, A=self.A * abs(c), A_smooth=self.A_smooth * abs(c))

    def describe(self) -> dict:
        out = {"kind": self.kind, "m": self.m, "n": self.n}
        if self.kind == "mollified_cz":
            out["rho"] = self.rho
        else:
            out["alpha"] = self.alpha
        return out


def make_mollified_cz_kernel(m: int, n: int, rho: float, certify: bool = True) -> KernelSpec:
    """(rho + s)^(-mn); size constant 1 and order-1 smoothness.

    Smoothness constant: an admissible move of x by t changes s by at most
    m t and keeps s >= s/(2m), so m * mn * (2m)^(mn+1) bounds both the x and
    the y_j estimate (for m = 1 this is n * 2^(n+1)).  It is checked by
    sampling when ``certify`` is set.
    """
    if not rho > 0:
        raise KernelError("rho must be positive")
    mn = m * n
    K = KernelSpec(m, n, "mollified_cz", rho=float(rho), A=1.0, eps=1.0, A_smooth=float(m * mn * (2 * m) ** (mn + 1)))
    if certify:
        ax, ay = kernel_smoothness_check(K, 2000, DEFAULT_SEED)
        if max(ax, ay) > K.A_smooth:
            raise KernelError(f"smoothness certification failed: {max(ax, ay):.4g} > {K.A_smooth:.4g}")
    return K


def make_fractional_kernel(m: int, n: int, alpha: float) -> KernelSpec:
    return KernelSpec(m, n, "fractional", alpha=float(alpha))


# -- certification -------------------------------------------------------------


def _random_directions(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
    u = rng.standard_normal((k, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _configurations(K: KernelSpec, samples: int, rng: np.random.Generator):
    """x in [-1,1]^n; the farthest y_j at a log-uniform distance 1e-3..10, the
    others at a uniform fraction of it (the estimates are scale-free, so this
    covers the shape of a configuration evenly)."""
    x = rng.uniform(-1.0, 1.0, (samples, K.n))
    reach = 10.0 ** rng.uniform(-3.0, 1.0, samples)
    frac = rng.uniform(0.0, 1.0, (K.m, samples))
    frac[rng.integers(0, K.m, samples), np.arange(samples)] = 1.0
    ys = [x + (reach * frac[j])[:, None] * _random_directions(rng, samples, K.n) for j in range(K.m)]
    return x, ys


def _sum_dist(x, ys) -> np.ndarray:
    return sum(np.linalg.norm(x - y, axis=-1) for y in ys)


def kernel_size_check(K: KernelSpec, samples: int = 10_000, seed: int = DEFAULT_SEED) -> float:
    """max |K(x, y)| * (sum_j |x - y_j|)^d over random configurations.

    d = mn, or mn - alpha for the fractional kernel.
    """
    if samples < 1:
        raise KernelError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x, ys = _configurations(K, samples, rng)
    s = _sum_dist(x, ys)
    ok = s > 0
    return float(np.max(np.abs(K(x[ok], [y[ok] for y in ys])) * s[ok] ** K.decay))


def kernel_smoothness_check(
    K: KernelSpec, samples: int = 10_000, seed: int = DEFAULT_SEED
) -> tuple[float, float]:
    """Largest observed constants in the x- and y_j-smoothness estimates.

    A perturbation of size t is admissible when t <= max_j |x - y_j| / 2;
    the sampler draws some inadmissible ones, which are skipped, as are
    zero perturbations.  Every other perturbation sits exactly on the edge
    of the admissible range, where the largest ratios occur.
    """
    if samples < 1:
        raise KernelError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x, ys = _configurations(K, samples, rng)
    s = _sum_dist(x, ys)
    reach = np.max([np.linalg.norm(x - y, axis=-1) for y in ys], axis=0)
    power = K.decay + K.eps
    base = K(x, ys)

    def ratio(moved_value, t):
        keep = (t > 0) & (t <= 0.5 * reach)
        if not keep.any():
            return 0.0
        diff = np.abs(base[keep] - moved_value[keep])
        return float(np.max(diff * s[keep] ** power / t[keep] ** K.eps))

    def perturbation():
        # the extremes sit on the admissibility edge t = reach/2, so half the
        # draws land exactly there; the rest also probe inadmissible moves
        t = reach * rng.uniform(0.0, 0.6, samples)
        t[::2] = 0.5 * reach[::2]
        return t, t[:, None] * _random_directions(rng, samples, K.n)

    t, dx = perturbation()
    ax = ratio(K(x + dx, ys), t)
    ay = 0.0
    for j in range(K.m):
        t, dy = perturbation()
        moved = list(ys)
        moved[j] = ys[j] + dy
        ay = max(ay, ratio(K(x, moved), t))
    return ax, ay


# -- application ------------------------------------------------------------


def _sub_offsets(grid: UniformGrid) -> np.ndarray:
    """Centres of the SUBDIVISION^n subcells of a cell, relative to its centre."""
    k = SUBDIVISION
    one = ((np.arange(k) + 0.5) / k - 0.5) * grid.h
    mesh = np.meshgrid(*([one] * grid.dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _targets(grid: UniformGrid, targets) -> tuple[np.ndarray, bool]:
    if targets is None:
        return grid.points(), True
    t = np.asarray(targets, dtype=float)
    if grid.dim == 1 and t.ndim <= 1:
        t = t.reshape(-1, 1)
    if t.ndim != 2 or t.shape[1] != grid.dim:
        raise GridError("targets must have shape (k, n)")
    return t, False


def _subcell_distances(K: KernelSpec, x: np.ndarray, cells: np.ndarray, offs: np.ndarray) -> np.ndarray:
    """Distances |x - y| from x to the subcell centres of each cell: (len(cells), n_sub)."""
    return np.linalg.norm(x[None, None, :] - (cells[:, None, :] + offs[None, :, :]), axis=-1)


def _linear_rows(K: KernelSpec, grid: UniformGrid, xs: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Kernel values K(x, c) for targets ``xs`` and cell centres ``pts``."""
    d = np.linalg.norm(xs[:, None, :] - pts[None, :, :], axis=-1)
    kv = K.profile(d)
    if K.kind == "fractional":
        offs = _sub_offsets(grid)
        near = d <= 2.0 * grid.h * (1 + 1e-9)
        for r, c in zip(*np.nonzero(near)):
            kv[r, c] = K.profile(_subcell_distances(K, xs[r], pts[c : c + 1], offs)).mean()
    return kv


def _bilinear_block(K: KernelSpec, grid: UniformGrid, x: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """K(x, c_a, c_b) over cell pairs, with subcell averaging near y1 = y2 = x."""
    d1 = np.linalg.norm(p1 - x, axis=1)
    d2 = np.linalg.norm(p2 - x, axis=1)
    kx = K.profile(d1[:, None] + d2[None, :])
    if K.kind == "fractional":
        tol = 2.0 * grid.h * (1 + 1e-9)
        n1, n2 = np.flatnonzero(d1 <= tol), np.flatnonzero(d2 <= tol)
        if n1.size and n2.size:
            offs = _sub_offsets(grid)
            sub1 = _subcell_distances(K, x, p1[n1], offs)
            sub2 = _subcell_distances(K, x, p2[n2], offs)
            pair = K.profile(sub1[:, None, :, None] + sub2[None, :, None, :]).mean(axis=(2, 3))
            kx[np.ix_(n1, n2)] = pair
    return kx


def _support(f: GridFunction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    vals = f.values.ravel()
    idx = np.flatnonzero(vals)
    return idx, f.grid.points()[idx], vals[idx]


def _apply_linear(K: KernelSpec, f: GridFunction, xs: np.ndarray) -> np.ndarray:
    _, pts, fv = _support(f)
    out = np.zeros(len(xs))
    if fv.size == 0:
        return out
    chunk = max(1, 2_000_000 // fv.size)
    for start in range(0, len(xs), chunk):
        xb = xs[start : start + chunk]
        out[start : start + len(xb)] = _linear_rows(K, f.grid, xb, pts) @ fv * f.grid.cell_volume
    return out


def _apply_bilinear(K: KernelSpec, f1: GridFunction, f2: GridFunction, xs: np.ndarray) -> np.ndarray:
    _, p1, a = _support(f1)
    _, p2, b = _support(f2)
    out = np.zeros(len(xs))
    if a.size == 0 or b.size == 0:
        return out
    h2n = f1.grid.cell_volume**2
    for i, x in enumerate(xs):
        out[i] = a @ _bilinear_block(K, f1.grid, x, p1, p2) @ b * h2n
    return out


def _check_inputs(K: KernelSpec, fs: Sequence[GridFunction]) -> UniformGrid:
    if len(fs) != K.m:
        raise KernelError(f"kernel is {K.m}-linear, got {len(fs)} functions")
    grid = fs[0].grid
    if any(f.grid != grid for f in fs):
        raise GridError("functions on different grids")
    if grid.dim != K.n:
        raise KernelError("kernel and grid dimensions differ")
    return grid


def apply_symbol_weighted(
    K: KernelSpec,
    fs: Sequence[GridFunction],
    bs: Sequence[GridFunction | None],
    mode: str = "product",
) -> GridFunction:
    """Quadrature of K f_1(y_1)...f_m(y_m) times a symbol weight, at every cell.

    The weight is prod_j (b_j(x) - b_j(y_j)) over slots with a symbol
    (``mode="product"``) or the sum of those factors (``mode="sum"``).
    """
    grid = _check_inputs(K, fs)
    if len(bs) != K.m:
        raise KernelError("one symbol (or None) per slot")
    if mode not in ("product", "sum"):
        raise KernelError(f"unknown weight mode {mode!r}")
    if any(b is not None and b.grid != grid for b in bs):
        raise GridError("symbol on a different grid")
    xs = grid.points()
    sups = [_support(f) for f in fs]
    out = np.zeros(len(xs))
    if any(v.size == 0 for _, _, v in sups):
        return GridFunction(grid, out)
    hmn = grid.cell_volume**K.m

    def factor(j: int, i: int) -> np.ndarray | None:
        b = bs[j]
        if b is None:
            return None
        flat = b.values.ravel()
        return flat[i] - flat[sups[j][0]]

    if K.m == 1:
        idx, pts, fv = sups[0]
        b = None if bs[0] is None else bs[0].values.ravel()
        chunk = max(1, 2_000_000 // fv.size)
        for start in range(0, len(xs), chunk):
            rows = _linear_rows(K, grid, xs[start : start + chunk], pts)
            if b is not None:
                rows = rows * (b[start : start + chunk, None] - b[idx][None, :])
            elif mode == "sum":
                rows = np.zeros_like(rows)
            out[start : start + len(rows)] = rows @ fv * hmn
        return GridFunction(grid, out)

    (_, p1, a), (_, p2, c) = sups
    for i, x in enumerate(xs):
        kx = _bilinear_block(K, grid, x, p1, p2)
        w1, w2 = factor(0, i), factor(1, i)
        if mode == "product":
            out[i] = (a if w1 is None else w1 * a) @ kx @ (c if w2 is None else w2 * c)
        else:
            total = 0.0
            if w1 is not None:
                total += (w1 * a) @ kx @ c
            if w2 is not None:
                total += a @ kx @ (w2 * c)
            out[i] = total
    return GridFunction(grid, out * hmn)


def apply_multilinear(K: KernelSpec, fs: Sequence[GridFunction], targets=None):
    """T(f_1, ..., f_m) by midpoint quadrature.

    Evaluated at every cell centre (returns a GridFunction) or at the given
    ``targets`` (returns an array).  For the fractional kernel, cells within
    2h of the singular configuration are integrated on a 4x finer subgrid.
    """
    grid = _check_inputs(K, fs)
    xs, on_grid = _targets(grid, targets)
    if K.m == 1:
        out = _apply_linear(K, fs[0], xs)
    else:
        out = _apply_bilinear(K, fs[0], fs[1], xs)
    return GridFunction(grid, out) if on_grid else out


def fractional_integral(alpha: float, fs: Sequence[GridFunction], targets=None):
    """Multilinear fractional integral with kernel (sum_j |x - y_j|)^(alpha - mn)."""
    if not fs:
        raise KernelError("need at least one function")
    m, n = len(fs), fs[0].grid.dim
    if not 0 < alpha < m * n:
        raise KernelError(f"alpha must lie in (0, {m * n})")
    return apply_multilinear(make_fractional_kernel(m, n, alpha), fs, targets)
