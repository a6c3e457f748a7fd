"""Commutators of multilinear operators with symbols, and Lipschitz-type
norms of symbols.

Each commutator has two independent evaluation routes: repeated operator
application (``b T(f) - T(.., b f_j, ..)``) and direct quadrature of the
integrand weighted by ``b_j(x) - b_j(y_j)``.  They agree to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from vexan.discretize import (
    ALL_CUBES,
    CubeFamily,
    GridError,
    GridFunction,
    cube_volumes,
    mean_oscillation,
    side_windows,
)
from vexan.exponent import ExponentField
from vexan.norms import char_norm_table, sampled
from vexan.operators import KernelSpec, apply_multilinear, apply_symbol_weighted

EXHAUSTIVE_LIMIT = 4096
RANDOM_PAIRS = 1_000_000
NEAR_RADIUS_CELLS = 8


class CommutatorError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolVector:
    """The symbols (b_1, ..., b_m); ``provenance`` holds closed-form descriptors if known."""

    bs: tuple
    provenance: tuple = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "bs", tuple(self.bs))
        if not self.bs:
            raise CommutatorError("need at least one symbol")
        grid = self.bs[0].grid
        if any(b.grid != grid for b in self.bs):
            raise GridError("symbols on different grids")

    def __len__(self) -> int:
        return len(self.bs)


def _as_symbols(bs) -> tuple:
    return bs.bs if isinstance(bs, SymbolVector) else tuple(bs)


def _check_slot(K: KernelSpec, j: int) -> None:
    if not 1 <= j <= K.m:
        raise CommutatorError(f"slot {j} out of range 1..{K.m}")


def _centred(b: GridFunction) -> GridFunction:
    """b minus one of its own values; commutators ignore constant shifts, and
    the shift makes a constant symbol give exactly zero."""
    return GridFunction(b.grid, b.values - b.values.flat[0])


def commutator_j(K: KernelSpec, b: GridFunction, j: int, fs: Sequence[GridFunction]) -> GridFunction:
    """b T(f) - T(f_1, .., b f_j, .., f_m), slot ``j`` 1-based."""
    _check_slot(K, j)
    b = _centred(b)
    moved = list(fs)
    moved[j - 1] = b * fs[j - 1]
    return b * apply_multilinear(K, fs) - apply_multilinear(K, moved)


def commutator_j_integrand(K: KernelSpec, b: GridFunction, j: int, fs: Sequence[GridFunction]) -> GridFunction:
    """Same commutator by quadrature with the (b(x) - b(y_j)) weight."""
    _check_slot(K, j)
    bs = [None] * K.m
    bs[j - 1] = b
    return apply_symbol_weighted(K, fs, bs, "product")


def _check_count(K: KernelSpec, bs: tuple) -> None:
    if len(bs) != K.m:
        raise CommutatorError(f"need {K.m} symbols, got {len(bs)}")


def sum_commutator(K: KernelSpec, bs, fs: Sequence[GridFunction]) -> GridFunction:
    bs = _as_symbols(bs)
    _check_count(K, bs)
    out = commutator_j(K, bs[0], 1, fs)
    for j in range(2, K.m + 1):
        out = out + commutator_j(K, bs[j - 1], j, fs)
    return out


def sum_commutator_integrand(K: KernelSpec, bs, fs: Sequence[GridFunction]) -> GridFunction:
    bs = _as_symbols(bs)
    _check_count(K, bs)
    return apply_symbol_weighted(K, fs, bs, "sum")


def iterated_commutator(K: KernelSpec, bs, fs: Sequence[GridFunction]) -> GridFunction:
    """Quadrature with weight prod_j (b_j(x) - b_j(y_j))."""
    bs = _as_symbols(bs)
    _check_count(K, bs)
    return apply_symbol_weighted(K, fs, bs, "product")


def nested_commutator(K: KernelSpec, bs, fs: Sequence[GridFunction]) -> GridFunction:
    """Iterated commutator by expanding the nested two-application form."""
    bs = _as_symbols(bs)
    _check_count(K, bs)
    if K.m == 1:
        return commutator_j(K, bs[0], 1, fs)
    b1, b2 = (_centred(b) for b in bs)
    f1, f2 = fs
    T = lambda g1, g2: apply_multilinear(K, [g1, g2])  # noqa: E731
    return b1 * b2 * T(f1, f2) - b1 * T(f1, b2 * f2) - b2 * T(b1 * f1, f2) + T(b1 * f1, b2 * f2)


# -- Lipschitz-type norms -------------------------------------------------------

NORM_KINDS = ("Lambda", "OscDelta", "OscAlphaP", "OscDeltaVar", "OscWeighted")


@dataclass(frozen=True)
class LipschitzNormKind:
    tag: str
    delta: float = 0.0
    alpha: float | None = None
    p: ExponentField | None = None
    beta: float | None = None
    r: ExponentField | None = None
    w: GridFunction | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.tag not in NORM_KINDS:
            raise CommutatorError(f"unknown Lipschitz norm {self.tag!r}")
        if self.tag == "Lambda" and not 0 < self.delta < 1:
            raise CommutatorError("Lambda needs 0 < delta < 1")
        if self.tag in ("OscDelta", "OscWeighted") and not 0 <= self.delta < 1:
            raise CommutatorError("need 0 <= delta < 1")
        if self.tag == "OscAlphaP" and (self.alpha is None or self.p is None):
            raise CommutatorError("OscAlphaP needs alpha and p")
        if self.tag == "OscDeltaVar" and (self.beta is None or self.r is None):
            raise CommutatorError("OscDeltaVar needs beta and r")
        if self.tag == "OscWeighted" and self.w is None:
            raise CommutatorError("OscWeighted needs a weight")


def lambda_seminorm(b: GridFunction, delta: float, seed: int = 0) -> float:
    """max |b(x) - b(y)| / |x - y|^delta over grid node pairs."""
    grid = b.grid
    pts, vals = grid.points(), b.values.ravel()
    if grid.size <= EXHAUSTIVE_LIMIT:
        best = 0.0
        for start in range(0, grid.size, 256):
            d = np.linalg.norm(pts[start : start + 256, None, :] - pts[None, :, :], axis=-1)
            diff = np.abs(vals[start : start + 256, None] - vals[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(d > 0, diff / d**delta, 0.0)
            best = max(best, float(q.max()))
        return best
    rng = np.random.default_rng(seed)
    i = rng.integers(0, grid.size, RANDOM_PAIRS)
    j = rng.integers(0, grid.size, RANDOM_PAIRS)
    keep = i != j
    best = float(np.max(np.abs(vals[i[keep]] - vals[j[keep]]) / np.linalg.norm(pts[i[keep]] - pts[j[keep]], axis=1) ** delta))
    # every pair within NEAR_RADIUS_CELLS cells, by shifting the array
    arr = b.values
    R = NEAR_RADIUS_CELLS
    shifts = [s for s in np.ndindex(*([2 * R + 1] * grid.dim))]
    for sh in shifts:
        off = np.array(sh) - R
        if not off.any() or np.linalg.norm(off) > R:
            continue
        src = tuple(slice(max(0, -o), arr.shape[k] - max(0, o)) for k, o in enumerate(off))
        dst = tuple(slice(max(0, o), arr.shape[k] - max(0, -o)) for k, o in enumerate(off))
        diff = np.abs(arr[dst] - arr[src])
        if diff.size:
            best = max(best, float(diff.max()) / (np.linalg.norm(off) * grid.h) ** delta)
    return best


def _oscillation_max(b: GridFunction, fam: CubeFamily, scale) -> float:
    """max over family cubes of scale(s, step) * (|Q|^-1 int_Q |b - b_Q|)."""
    best = 0.0
    for s in fam.sides(b.grid):
        step = fam.anchor_step(s)
        best = max(best, float(np.max(scale(s, step) * mean_oscillation(b.values, s, step))))
    return best


def lipschitz_norm(b: GridFunction, kind: LipschitzNormKind, fam: CubeFamily = ALL_CUBES, seed: int = 0) -> float:
    grid = b.grid
    n = grid.dim
    if kind.tag == "Lambda":
        return lambda_seminorm(b, kind.delta, seed)
    if kind.tag == "OscDelta":
        return _oscillation_max(b, fam, lambda s, st: cube_volumes(grid, s) ** (-kind.delta / n))
    if kind.tag == "OscWeighted":
        if kind.w.grid != grid:
            raise GridError("weight on a different grid")
        return _oscillation_max(
            b,
            fam,
            lambda s, st: side_windows(kind.w.values, s, st).max(axis=-1)
            * cube_volumes(grid, s) ** (-kind.delta / n),
        )
    if kind.tag == "OscAlphaP":
        if not 0 < kind.alpha < n:
            raise CommutatorError("OscAlphaP needs 0 < alpha < n")
        if sampled(kind.p, grid).min() <= 1:
            raise CommutatorError("OscAlphaP needs p_minus > 1")
        table = char_norm_table(kind.p, grid, fam, conj=True)
        return _oscillation_max(
            b, fam, lambda s, st: cube_volumes(grid, s) ** (1 - kind.alpha / n) / table[s]
        )
    r_minus = float(sampled(kind.r, grid).min())
    if not 1 < kind.beta <= r_minus + 1e-12:
        raise CommutatorError(f"OscDeltaVar needs 1 < beta <= r_minus ({r_minus:.4g})")
    table = char_norm_table(kind.r, grid, fam, conj=True)
    return _oscillation_max(b, fam, lambda s, st: cube_volumes(grid, s) ** (1 - 1 / kind.beta) / table[s])
