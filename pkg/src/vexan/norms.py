"""Modulars, Luxemburg norms, Orlicz cube averages and weak-type norms.

The Luxemburg norm is found by bisection on eta (in log scale): the modular
``eta -> F_p(f/eta)`` is continuous and strictly decreasing for f != 0, so the
bracket always closes.  Characteristic-function norms over whole cube
families are solved in batch with a Newton iteration that converges
monotonically from the left (the modular of an indicator is convex in
log eta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from vexan.discretize import (
    Cube,
    CubeFamily,
    GridError,
    GridFunction,
    UniformGrid,
    box_weights,
    box_weights_many,
    indicator,
    side_windows,
)
from vexan.exponent import ExponentField

DEFAULT_TOL = 1e-10


class NormError(ValueError):
    pass


class OrliczOverflowError(NormError):
    """The exp-type Young function cannot be evaluated on these samples; rescale."""


@lru_cache(maxsize=256)
def sampled(p: ExponentField, grid: UniformGrid) -> np.ndarray:
    vals = p.sample(grid)
    vals.setflags(write=False)
    return vals


@lru_cache(maxsize=64)
def sampled_conjugate(p: ExponentField, grid: UniformGrid) -> np.ndarray:
    vals = sampled(p, grid)
    if vals.min() <= 1.0:
        raise NormError("conjugate exponent needs p_minus > 1")
    out = vals / (vals - 1.0)
    out.setflags(write=False)
    return out


# -- Young functions ----------------------------------------------------------


@dataclass(frozen=True)
class YoungFunction:
    """``LlogL``: t ln(e+t)^r; ``expL``: e^t - 1; ``expLt``: e^(t^r) - 1."""

    kind: str
    r: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("LlogL", "expL", "expLt"):
            raise NormError(f"unknown Young function {self.kind!r}")
        if self.kind == "expLt" and self.r < 1:
            raise NormError("expLt needs r >= 1")
        if self.kind == "LlogL" and not self.r > 0:
            raise NormError("LlogL power must be positive")

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            if self.kind == "LlogL":
                return t * np.log(math.e + t) ** self.r
            if self.kind == "expL":
                return np.expm1(t)
            return np.expm1(t**self.r)

    @property
    def unit_level(self) -> float:
        """The t* with Phi(t*) = 1."""
        return _unit_level(self.kind, self.r)


@lru_cache(maxsize=8)
def _unit_level(kind: str, r: float) -> float:
    if kind == "expL":
        return math.log(2.0)
    if kind == "expLt":
        return math.log(2.0) ** (1.0 / r)
    return brentq(lambda t: t * math.log(math.e + t) ** r - 1.0, 1e-3, 1.0, xtol=1e-16, rtol=1e-15)


LLOGL = YoungFunction("LlogL")
EXPL = YoungFunction("expL")


# -- modular and Luxemburg norm -------------------------------------------------


@dataclass(frozen=True)
class NormResult:
    value: float
    bracket: tuple[float, float]
    modular_at_value: float

    def __float__(self) -> float:
        return self.value


def _weighted(f: GridFunction, w: GridFunction | None) -> np.ndarray:
    if w is None:
        return np.abs(f.values)
    if w.grid != f.grid:
        raise GridError("weight and function on different grids")
    if np.any(w.values <= 0):
        raise NormError("weights must be strictly positive")
    return np.abs(w.values * f.values)


def modular(f: GridFunction, p: ExponentField, w: GridFunction | None = None) -> float:
    """Integral of |w f|^p(x) (w defaults to 1)."""
    g = _weighted(f, w)
    return float(np.sum(g ** sampled(p, f.grid)) * f.grid.cell_volume)


def luxemburg_norm(
    f: GridFunction,
    p: ExponentField,
    tol: float = DEFAULT_TOL,
    w: GridFunction | None = None,
) -> NormResult:
    """inf{eta > 0 : F_p(w f / eta) <= 1} by log-scale bisection.

    The returned value is the upper end of the final bracket, so the modular
    there is <= 1; the bracket is narrowed until the modular is also
    >= 1 - tol.
    """
    if tol <= 0:
        raise NormError("tol must be positive")
    g = _weighted(f, w)
    if not np.all(np.isfinite(g)):
        raise NormError("non-finite samples")
    mask = g > 0
    if not mask.any():
        return NormResult(0.0, (0.0, 0.0), 0.0)
    a = g[mask]
    pv = np.broadcast_to(sampled(p, f.grid), g.shape)[mask]
    hn = f.grid.cell_volume

    def F(eta: float) -> float:
        return float(np.sum((a / eta) ** pv) * hn)

    eta = float(a.max()) * (f.grid.domain.volume + 1.0)
    if F(eta) <= 1.0:
        hi = eta
        lo = hi / 2.0
        while F(lo) <= 1.0:
            hi, lo = lo, lo / 2.0
    else:
        lo = eta
        hi = 2.0 * lo
        while F(hi) > 1.0:
            lo, hi = hi, hi * 2.0
    # relative eta accuracy that keeps the modular within tol/2 of 1
    rel = tol / (2.0 * max(1.0, float(pv.max())))
    while hi - lo > rel * hi:
        mid = math.sqrt(lo * hi)
        if mid <= lo or mid >= hi:
            break
        if F(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return NormResult(hi, (lo, hi), F(hi))


def char_norm(p: ExponentField, Q: Cube, grid: UniformGrid, tol: float = DEFAULT_TOL) -> float:
    """||chi_Q||_{p(.)} via the general bisection."""
    return luxemburg_norm(indicator(grid, Q), p, tol).value


# -- batched indicator norms ---------------------------------------------------


def _indicator_newton(pv: np.ndarray, wv: np.ndarray) -> np.ndarray:
    """Solve sum_c w_c exp(-p_c u) = 1 row-wise; returns eta = exp(u).

    ``pv``, ``wv``: ``(K, c)`` exponents and cell measures (zero weight = not
    covered).  Newton from u0 = min_c ln|Q|/p_c increases monotonically to
    the root because the left side is convex and decreasing in u.
    """
    vol = wv.sum(axis=1)
    covered = wv > 0
    p_max = np.where(covered, pv, -np.inf).max(axis=1)
    p_min = np.where(covered, pv, np.inf).min(axis=1)
    lv = np.log(vol)
    u = np.minimum(lv / p_max, lv / p_min)
    for _ in range(100):
        e = wv * np.exp(-pv * u[:, None])
        g = e.sum(axis=1) - 1.0
        dg = -(pv * e).sum(axis=1)
        step = g / dg
        u = u - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(u))):
            break
    return np.exp(u)


def char_norms_side(pvals: np.ndarray, grid: UniformGrid, s: int, step: int = 1) -> np.ndarray:
    """||chi_Q||_{p} for every cube of side ``s`` (anchors strided by ``step``).

    ``pvals`` are exponent samples on the grid.
    """
    win = side_windows(pvals, s, step)
    lead = win.shape[:-1]
    pw = win.reshape(-1, win.shape[-1])
    return _indicator_newton(pw, np.full(pw.shape, grid.cell_volume)).reshape(lead)


@lru_cache(maxsize=64)
def char_norm_table(p: ExponentField, grid: UniformGrid, fam: CubeFamily, conj: bool = False) -> dict[int, np.ndarray]:
    """Side -> array of indicator norms for every cube of the family.

    With ``conj`` the conjugate exponent p' is used.
    """
    pv = sampled_conjugate(p, grid) if conj else sampled(p, grid)
    table = {}
    for s in fam.sides(grid):
        arr = char_norms_side(pv, grid, s, fam.anchor_step(s))
        arr.setflags(write=False)
        table[s] = arr
    return table


def box_char_norm(p: ExponentField, grid: UniformGrid, center, side: float, conj: bool = False) -> float:
    """Indicator norm of a cube that need not be grid aligned (partial cells weighted)."""
    pv = sampled_conjugate(p, grid) if conj else sampled(p, grid)
    w = box_weights(grid, center, side) * grid.cell_volume
    mask = w > 0
    return float(_indicator_newton(pv[mask][None, :], w[mask][None, :])[0])


def box_char_norms(p: ExponentField, grid: UniformGrid, centers, sides, conj: bool = False) -> np.ndarray:
    """Batched :func:`box_char_norm` for cubes given by centres and side lengths."""
    pv = (sampled_conjugate(p, grid) if conj else sampled(p, grid)).ravel()
    w = box_weights_many(grid, centers, sides).reshape(-1, grid.size) * grid.cell_volume
    out = np.empty(w.shape[0])
    for start in range(0, w.shape[0], 512):
        blk = w[start : start + 512]
        out[start : start + 512] = _indicator_newton(np.broadcast_to(pv, blk.shape), blk)
    return out


def harmonic_mean_exponent(pvals: np.ndarray, s: int, step: int = 1) -> np.ndarray:
    """p_Q with 1/p_Q = average of 1/p over Q, for every cube of side s."""
    return 1.0 / side_windows(1.0 / pvals, s, step).mean(axis=-1)


# -- Orlicz averages -------------------------------------------------------------


def orlicz_averages(windows: np.ndarray, phi: YoungFunction, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Row-wise Luxemburg averages inf{lam : mean(Phi(|f|/lam)) <= 1}.

    ``windows``: ``(..., c)`` samples per cube.  Bracket [mean|f|, max|f|/t*]
    is valid since Phi(t) >= t and Phi(t*) = 1; bisect in log scale.
    """
    a = np.abs(np.asarray(windows, dtype=float))
    lead = a.shape[:-1]
    a = a.reshape(-1, a.shape[-1])
    if not np.all(np.isfinite(a)):
        raise OrliczOverflowError("non-finite samples")
    mean = a.mean(axis=1)
    top = a.max(axis=1)
    out = np.zeros(a.shape[0])
    live = mean > 0
    if not live.any():
        return out.reshape(lead)
    a, lo, hi = a[live], mean[live], top[live] / phi.unit_level
    hi = np.maximum(hi, lo)
    with np.errstate(over="ignore"):
        if not np.all(np.isfinite(phi(a / hi[:, None]))):
            raise OrliczOverflowError("Young function overflows at the upper bracket; rescale the input")
        width = np.log(hi / lo).max()
        iters = max(0, math.ceil(math.log2(max(width, 1e-300) / math.log1p(tol)))) + 1
        for _ in range(iters):
            mid = lo * np.sqrt(hi / lo)
            above = phi(a / mid[:, None]).mean(axis=1) > 1.0
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
    out[live] = hi
    return out.reshape(lead)


def orlicz_cube_average(f: GridFunction, Q: Cube, phi: YoungFunction, tol: float = DEFAULT_TOL) -> float:
    """||f||_{Phi,Q}: least lam with |Q|^-1 int_Q Phi(|f|/lam) <= 1."""
    if tol <= 0:
        raise NormError("tol must be positive")
    vals = f.values[Q.slices()].ravel()
    return float(orlicz_averages(vals[None, :], phi, tol)[0])


# -- weak norm ---------------------------------------------------------------


WEAK_EPS = 1e-12


def weak_lebesgue_norm(f: GridFunction, Q: Cube, q: float) -> float:
    """sup_t t |{x in Q : |f(x)| > t}|^(1/q), thresholds at sample values minus 1e-12."""
    if q <= 0:
        raise NormError("q must be positive")
    vals = np.abs(f.values[Q.slices()]).ravel()
    vals = vals[vals > WEAK_EPS]
    if vals.size == 0:
        return 0.0
    levels = np.unique(vals) - WEAK_EPS
    srt = np.sort(vals)
    counts = srt.size - np.searchsorted(srt, levels, side="right")
    meas = counts * f.grid.cell_volume
    return float(np.max(levels * meas ** (1.0 / q)))


def lp_average(f: GridFunction, Q: Cube, p: float) -> float:
    """|Q|^(-1/p) ||f||_{L^p(Q)}."""
    vals = np.abs(f.values[Q.slices()])
    return float(np.mean(vals**p) ** (1.0 / p))


__all__ = [
    "EXPL",
    "LLOGL",
    "NormError",
    "NormResult",
    "OrliczOverflowError",
    "YoungFunction",
    "box_char_norm",
    "box_char_norms",
    "char_norm",
    "char_norm_table",
    "char_norms_side",
    "harmonic_mean_exponent",
    "luxemburg_norm",
    "lp_average",
    "modular",
    "orlicz_averages",
    "orlicz_cube_average",
    "sampled",
    "sampled_conjugate",
    "weak_lebesgue_norm",
]
