"""Maximal operators: Hardy-Littlewood, M_eps, fractional LlogL, sharp
functions and the multilinear maximal functions.

Every supremum runs over the cubes of a :class:`CubeFamily` that contain
the evaluation cell, so comparisons between operators are like-for-like.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from vexan.discretize import (
    ALL_CUBES,
    CubeFamily,
    GridError,
    GridFunction,
    UniformGrid,
    cube_volumes,
    mean_oscillation,
    side_windows,
    sup_over_cubes,
    window_means,
)
from vexan.exponent import ExponentField
from vexan.norms import DEFAULT_TOL, LLOGL, char_norm_table, orlicz_averages, sampled

TAGS = ("HL", "M_eps", "M_alpha_LlogL", "multi_M", "multi_M_r", "multi_LlogL_i", "multi_LlogL")


class MaximalError(ValueError):
    pass


@dataclass(frozen=True)
class MaximalVariant:
    """Which maximal operator; ``param`` is eps, alpha, r or the slot i (1-based)."""

    tag: str
    param: float | None = None

    def __post_init__(self) -> None:
        if self.tag not in TAGS:
            raise MaximalError(f"unknown maximal variant {self.tag!r}")
        needs = {"M_eps", "M_alpha_LlogL", "multi_M_r", "multi_LlogL_i"}
        if (self.tag in needs) != (self.param is not None):
            raise MaximalError(f"{self.tag} parameter mismatch")
        if self.tag == "M_eps" and not self.param > 0:
            raise MaximalError("eps must be positive")
        if self.tag == "multi_M_r" and not self.param > 1:
            raise MaximalError("r must exceed 1")
        if self.tag == "M_alpha_LlogL" and not self.param >= 0:
            raise MaximalError("alpha must be >= 0")
        if self.tag == "multi_LlogL_i" and (int(self.param) != self.param or self.param < 1):
            raise MaximalError("slot index must be a positive integer")


def _sup(grid: UniformGrid, fam: CubeFamily, per_side: Callable[[int, int], np.ndarray]) -> GridFunction:
    point, _, _ = sup_over_cubes(grid, fam, per_side)
    return GridFunction(grid, np.where(np.isfinite(point), point, 0.0))


def hl_maximal(f: GridFunction, fam: CubeFamily = ALL_CUBES) -> GridFunction:
    a = np.abs(f.values)
    return _sup(f.grid, fam, lambda s, st: window_means(a, s, st))


def m_epsilon(f: GridFunction, eps: float, fam: CubeFamily = ALL_CUBES) -> GridFunction:
    """[M(|f|^eps)]^(1/eps)."""
    if not eps > 0:
        raise MaximalError("eps must be positive")
    inner = hl_maximal(GridFunction(f.grid, np.abs(f.values) ** eps), fam)
    return GridFunction(f.grid, inner.values ** (1.0 / eps))


def m_alpha_llogl(
    f: GridFunction, alpha: float, fam: CubeFamily = ALL_CUBES, tol: float = DEFAULT_TOL
) -> GridFunction:
    """sup_Q |Q|^(alpha/n) ||f||_{LlogL,Q}."""
    n = f.grid.dim
    if not 0 <= alpha < n:
        raise MaximalError("need 0 <= alpha < n")

    def per_side(s, st):
        return cube_volumes(f.grid, s) ** (alpha / n) * orlicz_averages(side_windows(f.values, s, st), LLOGL, tol)

    return _sup(f.grid, fam, per_side)


def sharp_maximal(f: GridFunction, delta: float = 0.0, fam: CubeFamily = ALL_CUBES) -> GridFunction:
    """sup_Q |Q|^(-1-delta/n) int_Q |f - f_Q|."""
    if not 0 <= delta < 1:
        raise MaximalError("need 0 <= delta < 1")
    n = f.grid.dim
    return _sup(
        f.grid,
        fam,
        lambda s, st: cube_volumes(f.grid, s) ** (-delta / n) * mean_oscillation(f.values, s, st),
    )


def gamma_oscillation(values: np.ndarray, s: int, step: int, gamma: float) -> np.ndarray:
    """(|Q|^-1 int_Q ||f|^g - (|f|^g)_Q|)^(1/g); gamma = 1 uses signed f."""
    if gamma == 1.0:
        return mean_oscillation(values, s, step)
    return mean_oscillation(np.abs(values) ** gamma, s, step) ** (1.0 / gamma)


def variable_prefactor(p: ExponentField, grid: UniformGrid, fam: CubeFamily, beta: float) -> dict[int, np.ndarray]:
    """a(Q) = |Q|^(1/beta - 1) ||chi_Q||_{p'} for every family cube, keyed by side."""
    table = char_norm_table(p, grid, fam, conj=True)
    return {s: cube_volumes(grid, s) ** (1.0 / beta - 1.0) * v for s, v in table.items()}


def sharp_maximal_var(
    f: GridFunction,
    p: ExponentField,
    beta: float,
    gamma: float = 1.0,
    fam: CubeFamily = ALL_CUBES,
) -> GridFunction:
    """Variable-order sharp function sup_Q a(Q)^-1 (gamma-oscillation of f on Q)."""
    p_minus = float(sampled(p, f.grid).min())
    if not 1 < beta <= p_minus + 1e-12:
        raise MaximalError(f"need 1 < beta <= p_minus ({p_minus:.4g}), got {beta}")
    if not 0 < gamma <= 1:
        raise MaximalError("need 0 < gamma <= 1")
    pref = variable_prefactor(p, f.grid, fam, beta)
    return _sup(f.grid, fam, lambda s, st: gamma_oscillation(f.values, s, st, gamma) / pref[s])


def _check_same_grid(fs: Sequence[GridFunction]) -> UniformGrid:
    if not fs:
        raise MaximalError("need at least one function")
    grid = fs[0].grid
    if any(g.grid != grid for g in fs):
        raise GridError("functions on different grids")
    return grid


def multilinear_per_side(
    fs: Sequence[GridFunction], variant: MaximalVariant, tol: float = DEFAULT_TOL
) -> Callable[[int, int], np.ndarray]:
    """Per-cube product for the multilinear variants (used by sup engines)."""
    tag, m = variant.tag, len(fs)
    if tag == "multi_LlogL_i" and int(variant.param) > m:
        raise MaximalError("slot index exceeds number of functions")

    def per_side(s, st):
        out = 1.0
        for j, f in enumerate(fs, start=1):
            a = np.abs(f.values)
            if tag == "multi_M":
                term = window_means(a, s, st)
            elif tag == "multi_M_r":
                term = window_means(a**variant.param, s, st) ** (1.0 / variant.param)
            elif tag == "multi_LlogL" or (tag == "multi_LlogL_i" and j == int(variant.param)):
                term = orlicz_averages(side_windows(a, s, st), LLOGL, tol)
            else:
                term = window_means(a, s, st)
            out = out * term
        return out

    return per_side


def multilinear_maximal(
    fs: Sequence[GridFunction],
    variant: MaximalVariant,
    fam: CubeFamily = ALL_CUBES,
    tol: float = DEFAULT_TOL,
) -> GridFunction:
    """Multilinear maximal functions: products of per-cube averages, sup over Q."""
    if not variant.tag.startswith("multi"):
        if len(fs) != 1:
            raise MaximalError(f"{variant.tag} is linear; pass one function")
        f = fs[0]
        if variant.tag == "HL":
            return hl_maximal(f, fam)
        if variant.tag == "M_eps":
            return m_epsilon(f, variant.param, fam)
        return m_alpha_llogl(f, variant.param, fam, tol)
    grid = _check_same_grid(fs)
    return _sup(grid, fam, multilinear_per_side(fs, variant, tol))


def iterated_hl(f: GridFunction, fam: CubeFamily = ALL_CUBES) -> GridFunction:
    """M^2 f = M(M f) with the same family for both layers."""
    return hl_maximal(hl_maximal(f, fam), fam)
