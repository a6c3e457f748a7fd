"""Closed-form variable exponents p(.) and their exponent-class diagnostics.

Five base families are available (``constant``, ``log_perturbed``, ``bump``,
``radial_step_smoothed``, ``affine``).  Derived exponents (conjugates, harmonic
combinations, fractional shifts) stay closed form: they keep references to
their parts and evaluate them on demand, so log-Holder checks can probe any
pair distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from vexan.discretize import UniformGrid

BASE_KINDS = ("constant", "log_perturbed", "bump", "radial_step_smoothed", "affine")
DERIVED_KINDS = ("conjugate", "harmonic", "shift", "affine_reciprocal", "scaled")

_N_PARAMS = {"constant": (1, 1), "log_perturbed": (2, 2), "bump": (3, 5), "radial_step_smoothed": (4, 4), "affine": (2, 3)}


class ExponentError(ValueError):
    """Raised when an exponent violates the class required by an operation."""


@dataclass(frozen=True)
class ExponentField:
    """A variable exponent given by a closed form on R^dim.

    ``params`` per base kind:

    * ``constant``: ``(p0,)``
    * ``log_perturbed``: ``(p0, c)``, ``p0 + c / ln(e + |x|)``
    * ``bump``: ``(p0, height, radius[, cx[, cy]])``, ``p0`` plus a smooth
      compactly supported bump of peak ``height``
    * ``radial_step_smoothed``: ``(p_in, p_out, r0, width)``, a tanh profile
      in ``|x|``; ``width == 0`` gives the discontinuous step (diagnostic only)
    * ``affine``: ``(p0, g1[, g2])``, ``p0 + <g, x>``; only sensible on a
      bounded region where it stays positive (norm anchors)
    """

    kind: str
    params: tuple[float, ...] = ()
    dim: int = 1
    parts: tuple["ExponentField", ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if self.dim not in (1, 2):
            raise ExponentError(f"dim must be 1 or 2, got {self.dim}")
        if self.kind in BASE_KINDS:
            lo, hi = _N_PARAMS[self.kind]
            if not lo <= len(self.params) <= hi:
                raise ExponentError(f"{self.kind} takes {lo}..{hi} params, got {len(self.params)}")
            if self.kind == "bump":
                if self.params[2] <= 0:
                    raise ExponentError("bump radius must be positive")
                if len(self.params) - 3 not in (0, self.dim):
                    raise ExponentError("bump center must have dim coordinates")
            if self.kind == "affine" and len(self.params) - 1 != self.dim:
                raise ExponentError("affine exponent needs one slope per axis")
            if self.kind == "radial_step_smoothed" and self.params[3] < 0:
                raise ExponentError("step width must be >= 0")
        elif self.kind in DERIVED_KINDS:
            if not self.parts:
                raise ExponentError(f"{self.kind} needs parts")
            if any(p.dim != self.dim for p in self.parts):
                raise ExponentError("dimension mismatch between exponent parts")
        else:
            raise ExponentError(f"unknown exponent kind {self.kind!r}")

    # -- evaluation -------------------------------------------------------

    def values(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an array of points of shape ``(k, dim)``."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        k, prm = self.kind, self.params
        if k == "constant":
            return np.full(pts.shape[0], prm[0])
        if k == "log_perturbed":
            r = np.linalg.norm(pts, axis=1)
            return prm[0] + prm[1] / np.log(math.e + r)
        if k == "bump":
            center = np.array(prm[3:] or (0.0,) * self.dim)
            t = np.linalg.norm(pts - center, axis=1) / prm[2]
            out = np.zeros_like(t)
            inside = t < 1.0
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
            return prm[0] + prm[1] * out
        if k == "radial_step_smoothed":
            p_in, p_out, r0, width = prm
            r = np.linalg.norm(pts, axis=1)
            if width == 0.0:
                s = np.where(r < r0, 1.0, 0.0)
            else:
                s = 0.5 * (1.0 - np.tanh((r - r0) / width))
            return p_out + (p_in - p_out) * s
        if k == "affine":
            return prm[0] + pts @ np.asarray(prm[1:])
        if k == "conjugate":
            q = self.parts[0].values(pts)
            return q / (q - 1.0)
        if k == "harmonic":
            return 1.0 / sum(1.0 / p.values(pts) for p in self.parts)
        if k == "shift":
            p, delta = self.parts
            return 1.0 / (1.0 / p.values(pts) - delta.values(pts) / prm[0])
        if k == "affine_reciprocal":
            return prm[0] + prm[1] / self.parts[0].values(pts)
        if k == "scaled":
            return prm[0] * self.parts[0].values(pts)
        raise AssertionError(k)

    def sample(self, grid: UniformGrid) -> np.ndarray:
        """Values at the grid's cell centres, shaped like the grid."""
        return self.values(grid.points()).reshape(grid.shape)

    @property
    def limit_at_infinity(self) -> float:
        """Analytic limit of the closed form as ``|x| -> infinity``."""
        k, prm = self.kind, self.params
        if k in ("constant", "log_perturbed", "bump"):
            return prm[0]
        if k == "radial_step_smoothed":
            return prm[1]
        if k == "affine":
            return prm[0] if not any(prm[1:]) else math.nan
        lims = [p.limit_at_infinity for p in self.parts]
        if k == "conjugate":
            return lims[0] / (lims[0] - 1.0)
        if k == "harmonic":
            return 1.0 / sum(1.0 / v for v in lims)
        if k == "shift":
            return 1.0 / (1.0 / lims[0] - lims[1] / prm[0])
        if k == "affine_reciprocal":
            return prm[0] + prm[1] / lims[0]
        return prm[0] * lims[0]

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "params": list(self.params), "dim": self.dim}
        if self.parts:
            out["parts"] = [p.to_dict() for p in self.parts]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExponentField":
        extra = set(d) - {"kind", "params", "dim", "parts"}
        if extra:
            raise ExponentError(f"unknown exponent keys: {sorted(extra)}")
        kind = str(d["kind"]).replace("-", "_")
        parts = tuple(cls.from_dict(p) for p in d.get("parts", ()))
        return cls(kind, tuple(d.get("params", ())), int(d.get("dim", 1)), parts)


def constant(p0: float, dim: int = 1) -> ExponentField:
    return ExponentField("constant", (p0,), dim)


def eval_exponent(field: ExponentField, x) -> float | np.ndarray:
    """p(x) at one point (float result) or at an array of points.

    For ``dim == 1`` a scalar is one point and a 1-d array is many points;
    for ``dim == 2`` a shape ``(2,)`` input is one point.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if field.dim != 1:
            raise ExponentError("scalar point given for a 2-d exponent")
        return float(field.values(arr.reshape(1, 1))[0])
    if field.dim == 1 and arr.ndim == 1:
        return field.values(arr.reshape(-1, 1))
    if arr.shape[-1] != field.dim:
        raise ExponentError(f"point dimension {arr.shape[-1]} != field dim {field.dim}")
    if arr.ndim == 1:
        return float(field.values(arr.reshape(1, -1))[0])
    return field.values(arr.reshape(-1, field.dim))


def _default_probe(dim: int) -> np.ndarray:
    axis = np.linspace(-10.0, 10.0, 401 if dim == 1 else 101)
    if dim == 1:
        return axis[:, None]
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _probe_points(field: ExponentField, grid: UniformGrid | None) -> np.ndarray:
    return grid.points() if grid is not None else _default_probe(field.dim)


def conjugate(field: ExponentField, grid: UniformGrid | None = None) -> ExponentField:
    """Pointwise conjugate exponent q/(q-1); requires q_- > 1 on the probe set."""
    vals = field.values(_probe_points(field, grid))
    if np.min(vals) <= 1.0 or field.limit_at_infinity <= 1.0:
        raise ExponentError("conjugate needs p_minus > 1")
    if field.kind == "conjugate":
        return field.parts[0]
    if field.kind == "constant":
        p0 = field.params[0]
        return ExponentField("constant", (p0 / (p0 - 1.0),), field.dim)
    return ExponentField("conjugate", (), field.dim, (field,))


def harmonic_combine(fields: Sequence[ExponentField]) -> ExponentField:
    """p with 1/p = sum_j 1/p_j."""
    fields = tuple(fields)
    if not fields:
        raise ExponentError("need at least one exponent")
    dims = {f.dim for f in fields}
    if len(dims) != 1:
        raise ExponentError("dimension mismatch")
    if len(fields) == 1:
        return fields[0]
    if all(f.kind == "constant" for f in fields):
        return ExponentField("constant", (1.0 / sum(1.0 / f.params[0] for f in fields),), fields[0].dim)
    return ExponentField("harmonic", (), fields[0].dim, fields)


def delta_shift(
    field: ExponentField,
    delta: ExponentField | float,
    n: int,
    grid: UniformGrid | None = None,
) -> ExponentField:
    """q with 1/q(x) = 1/p(x) - delta(x)/n.

    ``delta`` may be a constant or a closed-form field.  Positivity of
    ``1/q`` is checked on ``grid`` (or a default probe box) and at infinity.
    """
    if not isinstance(delta, ExponentField):
        if float(delta) == 0.0:
            return field
        delta = ExponentField("constant", (float(delta),), field.dim)
    if delta.dim != field.dim:
        raise ExponentError("dimension mismatch")
    pts = _probe_points(field, grid)
    inv = 1.0 / field.values(pts) - delta.values(pts) / n
    inv_inf = 1.0 / field.limit_at_infinity - delta.limit_at_infinity / n
    if np.min(inv) <= 0.0 or inv_inf <= 0.0 or not np.all(np.isfinite(inv)):
        raise ExponentError("1/p - delta/n must stay positive (q finite)")
    if field.kind == "constant" and delta.kind == "constant":
        return ExponentField("constant", (1.0 / (1.0 / field.params[0] - delta.params[0] / n),), field.dim)
    return ExponentField("shift", (float(n),), field.dim, (field, delta))


def lipschitz_order(r: ExponentField, beta: float, n: int) -> ExponentField:
    """delta(x) = n (1/beta - 1/r(x)), the order attached to L(delta(.))."""
    if r.kind == "constant":
        return ExponentField("constant", (n * (1.0 / beta - 1.0 / r.params[0]),), r.dim)
    return ExponentField("affine_reciprocal", (n / beta, -float(n)), r.dim, (r,))


def scaled(field: ExponentField, s: float) -> ExponentField:
    if s <= 0:
        raise ExponentError("scale must be positive")
    if field.kind == "constant":
        return ExponentField("constant", (s * field.params[0],), field.dim)
    return ExponentField("scaled", (float(s),), field.dim, (field,))


@dataclass(frozen=True)
class ExponentBounds:
    p_minus: float
    p_plus: float
    p_inf: float
    conj_minus: float | None = None
    conj_plus: float | None = None


def exponent_bounds(field: ExponentField, grid: UniformGrid) -> ExponentBounds:
    vals = field.sample(grid)
    lo, hi = float(vals.min()), float(vals.max())
    if lo > 1.0:
        return ExponentBounds(lo, hi, field.limit_at_infinity, hi / (hi - 1.0), lo / (lo - 1.0))
    return ExponentBounds(lo, hi, field.limit_at_infinity)


def log_holder_constants(field: ExponentField, grid: UniformGrid) -> tuple[float, float]:
    """Measured (C_loc, C_inf) of the log-Holder conditions on grid nodes.

    C_loc is the max of |p(x)-p(y)| ln(1/|x-y|) over node pairs with
    0 < |x-y| <= 1/2; C_inf the max of |p(x)-p_inf| ln(e+|x|).
    """
    pts = grid.points()
    vals = field.values(pts)
    if pts.shape[0] < 2:
        raise ExponentError("need at least two grid nodes")
    c_loc = 0.0
    chunk = max(1, 2_000_000 // pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        sl = slice(start, start + chunk)
        d = np.linalg.norm(pts[sl, None, :] - pts[None, :, :], axis=2)
        mask = (d > 0) & (d <= 0.5)
        if not mask.any():
            continue
        dv = np.abs(vals[sl, None] - vals[None, :])
        c_loc = max(c_loc, float(np.max(np.where(mask, dv * np.log(1.0 / np.where(mask, d, 1.0)), 0.0))))
    r = np.linalg.norm(pts, axis=1)
    c_inf = float(np.max(np.abs(vals - field.limit_at_infinity) * np.log(math.e + r)))
    return c_loc, c_inf
