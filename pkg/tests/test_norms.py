import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vexan.discretize import ALL_CUBES, Cube, GridFunction, UniformGrid, cube_average, indicator, integrate
from vexan.exponent import ExponentField, conjugate, constant, harmonic_combine, scaled
from vexan.norms import (
    EXPL,
    LLOGL,
    NormError,
    OrliczOverflowError,
    YoungFunction,
    box_char_norm,
    char_norm,
    char_norm_table,
    luxemburg_norm,
    modular,
    orlicz_averages,
    orlicz_cube_average,
    weak_lebesgue_norm,
)

# t* with t ln(e + t) = 1, from an independent 30-digit root-find
LLOGL_UNIT = 0.795702811082363121597416649494
UNIT_GRID = UniformGrid.make(1, 0.5, 32)  # [-1/2, 1/2], volume 1
GRID = UniformGrid.make(1, 2.0, 64)
LOG2 = ExponentField("log_perturbed", (2.0, 1.0))
BUMP = ExponentField("bump", (2.5, 0.5, 1.0))
STEP = ExponentField("radial_step_smoothed", (1.6, 2.4, 1.0, 0.3))


def test_modular_examples():
    one = GridFunction.constant(UNIT_GRID, 1.0)
    assert modular(one, LOG2) == pytest.approx(1.0, rel=1e-14)
    assert modular(GridFunction.constant(UNIT_GRID, 0.0), LOG2) == 0.0
    assert modular(GridFunction.constant(UNIT_GRID, 2.0), constant(2.0)) == pytest.approx(4.0, rel=1e-14)


def test_weighted_modular_and_positive_weights():
    f = GridFunction.constant(UNIT_GRID, 1.0)
    w = GridFunction.constant(UNIT_GRID, 2.0)
    assert modular(f, constant(3.0), w) == pytest.approx(8.0)
    assert luxemburg_norm(f, constant(3.0), w=w).value == pytest.approx(2.0, rel=1e-9)
    with pytest.raises(NormError):
        modular(f, constant(2.0), GridFunction.constant(UNIT_GRID, 0.0))


def test_luxemburg_unit_indicator():
    f = GridFunction.from_callable(GRID, lambda x: ((x[:, 0] >= 0) & (x[:, 0] <= 1)).astype(float))
    assert luxemburg_norm(f, constant(2.0)).value == pytest.approx(1.0, abs=1e-9)
    assert luxemburg_norm(f, LOG2).value == pytest.approx(1.0, abs=1e-9)


def test_luxemburg_square_constant_exponent():
    g = UniformGrid.make(1, 1.0, 512)
    f = GridFunction.from_callable(g, lambda x: x[:, 0] ** 2)
    val = luxemburg_norm(f, constant(3.0)).value
    discrete = integrate(abs(f) ** 3) ** (1 / 3)
    assert val == pytest.approx(discrete, rel=2e-10)
    # closed form (2/7)^(1/3) = 0.6586337560..., midpoint error O(h^2)
    assert abs(val - 0.658633756008349509953528013992) < g.h**2


def test_luxemburg_zero_and_bracket():
    assert luxemburg_norm(GridFunction.constant(GRID, 0.0), LOG2).value == 0.0
    res = luxemburg_norm(GridFunction.from_callable(GRID, lambda x: np.cos(x[:, 0])), BUMP, tol=1e-8)
    lo, hi = res.bracket
    assert lo <= res.value <= hi and hi - lo <= 1e-8 * max(1.0, res.value)
    assert 1 - 1e-7 <= res.modular_at_value <= 1.0


def test_luxemburg_rejects_bad_tol():
    with pytest.raises(NormError):
        luxemburg_norm(GridFunction.constant(GRID, 1.0), LOG2, tol=0.0)


def test_orlicz_constant_function():
    g = UniformGrid.make(1, 1.0, 16)
    f = GridFunction.constant(g, 1.7)
    Q = Cube((2,), 9)
    assert orlicz_cube_average(f, Q, LLOGL) == pytest.approx(1.7 / LLOGL_UNIT, rel=1e-9)
    assert orlicz_cube_average(f, Q, EXPL) == pytest.approx(1.7 / math.log(2.0), rel=1e-9)
    assert orlicz_cube_average(GridFunction.constant(g, 0.0), Q, LLOGL) == 0.0


def test_unit_levels():
    assert LLOGL.unit_level == pytest.approx(LLOGL_UNIT, rel=1e-14)
    assert YoungFunction("expLt", 2.0).unit_level == pytest.approx(0.832554611157697756353164644895, rel=1e-14)
    with pytest.raises(NormError):
        YoungFunction("expLt", 0.5)
    with pytest.raises(NormError):
        YoungFunction("Lp")


def test_orlicz_huge_spike_and_non_finite_input():
    g = UniformGrid.make(1, 1.0, 8)
    f = GridFunction(g, [0, 0, 0, 0, 0, 0, 0, 1e6])
    # (1/8)(e^(1e6/lam) - 1) = 1  =>  lam = 1e6 / ln 9, although e^t overflows mid-bisection
    assert orlicz_cube_average(f, Cube((0,), 8), EXPL) == pytest.approx(1e6 / math.log(9.0), rel=1e-9)
    with pytest.raises(OrliczOverflowError):
        orlicz_averages(np.array([[1.0, np.inf]]), EXPL)


def test_weak_norm_examples():
    g = UniformGrid.make(1, 1.0, 16)
    Q = Cube((4,), 6)
    assert weak_lebesgue_norm(indicator(g, Q), Q, 2.0) == pytest.approx(Q.volume(g) ** 0.5, rel=1e-10)
    assert weak_lebesgue_norm(GridFunction.constant(g, 0.0), Q, 2.0) == 0.0
    vals = np.zeros(16)
    vals[4:7], vals[7:10] = 3.0, 1.0
    f = GridFunction(g, vals)
    # exhaustive thresholds: t just below 3 sees 3 cells, just below 1 sees 6
    h = g.h
    brute = max((3.0 - 1e-12) * (3 * h) ** 0.5, (1.0 - 1e-12) * (6 * h) ** 0.5)
    assert weak_lebesgue_norm(f, Q, 2.0) == pytest.approx(brute, rel=1e-12)


def test_char_norm_constant_exponent_and_unit_domain():
    g = UniformGrid.make(1, 2.0, 32)
    Q = Cube((5,), 7)
    assert char_norm(constant(3.0), Q, g) == pytest.approx(Q.volume(g) ** (1 / 3), rel=1e-9)
    full = Cube((0,), UNIT_GRID.n_axis)
    for p in (LOG2, BUMP, STEP):
        assert char_norm(p, full, UNIT_GRID) == pytest.approx(1.0, rel=1e-9)


def test_char_norm_table_matches_single_cubes():
    g = UniformGrid.make(1, 2.0, 24)
    table = char_norm_table(STEP, g, ALL_CUBES)
    for s, a in [(1, 0), (5, 3), (12, 7), (24, 0)]:
        assert table[s][a] == pytest.approx(char_norm(STEP, Cube((a,), s), g), rel=1e-9)


def test_box_char_norm_aligned_matches_cube():
    g = UniformGrid.make(1, 2.0, 32)
    Q = Cube((8,), 8)
    assert box_char_norm(LOG2, g, Q.center(g), Q.side_length(g)) == pytest.approx(char_norm(LOG2, Q, g), rel=1e-9)


# -- property tests ------------------------------------------------------------

values = hnp.arrays(np.float64, 64, elements=st.floats(-5, 5)).filter(lambda a: np.any(np.abs(a) > 1e-3))
exponents = st.sampled_from([LOG2, BUMP, STEP, constant(1.5), constant(3.0)])


@given(values, exponents, st.floats(0.01, 100).flatmap(lambda c: st.sampled_from([c, -c])))
def test_homogeneity(a, p, c):
    f = GridFunction(GRID, a)
    n1 = luxemburg_norm(f, p).value
    assert luxemburg_norm(c * f, p).value == pytest.approx(abs(c) * n1, rel=2e-10)


@given(values, exponents)
def test_unit_ball(a, p):
    f = GridFunction(GRID, a)
    n = luxemburg_norm(f, p).value
    m = modular(GridFunction(GRID, a / n), p)
    assert 1 - 1e-9 <= m <= 1 + 1e-10


@given(values, exponents, st.sampled_from([0.5, 2.0, 3.0]))
def test_power_identity(a, p, s):
    f = GridFunction(GRID, a)
    lhs = luxemburg_norm(abs(f) ** s, p).value
    rhs = luxemburg_norm(f, scaled(p, s)).value ** s
    assert lhs == pytest.approx(rhs, rel=3e-10)


@given(values, values, exponents)
def test_generalized_holder_constant_two(a, b, p):
    f, g = GridFunction(GRID, a), GridFunction(GRID, b)
    lhs = integrate(abs(f * g))
    assert lhs <= 2 * luxemburg_norm(f, p).value * luxemburg_norm(g, conjugate(p, GRID)).value + 1e-12


@given(values, values)
def test_product_holder_constant_four(a, b):
    f, g = GridFunction(GRID, a), GridFunction(GRID, b)
    q = harmonic_combine([LOG2, BUMP])
    lhs = luxemburg_norm(f * g, q).value
    assert lhs <= 4 * luxemburg_norm(f, LOG2).value * luxemburg_norm(g, BUMP).value + 1e-12


@given(values, hnp.arrays(np.float64, 64, elements=st.floats(0, 3)), exponents)
def test_monotonicity(a, extra, p):
    f = GridFunction(GRID, np.abs(a))
    g = f + GridFunction(GRID, extra)
    assert luxemburg_norm(f, p).value <= luxemburg_norm(g, p).value * (1 + 1e-10)
    Q = Cube((10,), 30)
    for phi in (LLOGL, EXPL):
        assert orlicz_cube_average(f, Q, phi) <= orlicz_cube_average(g, Q, phi) * (1 + 1e-10)


@given(values, st.integers(0, 40), st.integers(1, 24))
def test_llogl_average_dominates_mean(a, anchor, side):
    f = GridFunction(GRID, a)
    Q = Cube((anchor,), side)
    assert orlicz_cube_average(f, Q, LLOGL) >= cube_average(abs(f), Q) * (1 - 1e-10)
