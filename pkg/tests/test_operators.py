import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import integrate as sciint

from vexan.discretize import GridError, GridFunction, UniformGrid
from vexan.operators import (
    KernelError,
    apply_multilinear,
    apply_symbol_weighted,
    fractional_integral,
    kernel_size_check,
    kernel_smoothness_check,
    make_fractional_kernel,
    make_mollified_cz_kernel,
)

K1 = make_mollified_cz_kernel(1, 1, 0.1, certify=False)
K2 = make_mollified_cz_kernel(2, 1, 0.1, certify=False)
GRID = UniformGrid.make(1, 2.0, 32)


def _box(grid, a, b):
    return GridFunction.from_callable(grid, lambda x: ((x[:, 0] >= a) & (x[:, 0] <= b)).astype(float))


def test_kernel_value_and_validation():
    assert K1(0.0, [0.9]) == pytest.approx(1.0, rel=1e-15)
    assert K2(0.0, [0.4, -0.5]) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(KernelError):
        make_mollified_cz_kernel(1, 1, 0.0)
    with pytest.raises(KernelError):
        make_fractional_kernel(1, 1, 1.0)
    with pytest.raises(KernelError):
        K2(0.0, [0.1])


def test_certified_kernel_constants():
    K = make_mollified_cz_kernel(2, 1, 0.05)
    assert (K.A, K.eps, K.A_smooth) == (1.0, 1.0, 2 * 2 * 4**3)
    assert make_mollified_cz_kernel(1, 2, 0.05).A_smooth == 2 * 2**3


@pytest.mark.parametrize("m, n", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_size_constant_at_most_one(m, n):
    K = make_mollified_cz_kernel(m, n, 0.01, certify=False)
    assert kernel_size_check(K, 4000) <= 1 + 1e-12


def test_scaling_multiplies_measured_constants():
    a = kernel_size_check(K2, 2000)
    assert kernel_size_check(K2.scaled(3.0), 2000) == pytest.approx(3 * a, rel=1e-13)
    ax, ay = kernel_smoothness_check(K2, 2000)
    bx, by = kernel_smoothness_check(K2.scaled(3.0), 2000)
    assert (bx, by) == pytest.approx((3 * ax, 3 * ay), rel=1e-12)


def test_smoothness_stable_when_samples_quadruple():
    a = kernel_smoothness_check(K2, 10_000)
    b = kernel_smoothness_check(K2, 40_000)
    for u, v in zip(a, b):
        assert 0 < u < np.inf and abs(v - u) <= 0.1 * u
    assert max(b) <= K2.A_smooth


def test_bilinear_matches_adaptive_quadrature():
    # T(chi_[-1,0], chi_[0,1])(1/2) with the integrand integrated by scipy
    g = UniformGrid.make(1, 2.0, 64)
    got = apply_multilinear(K2, [_box(g, -1, 0), _box(g, 0, 1)], [0.5])[0]
    ref, _ = sciint.dblquad(
        lambda y2, y1: (0.1 + abs(0.5 - y1) + abs(0.5 - y2)) ** -2, -1, 0, 0, 1
    )
    assert got == pytest.approx(ref, rel=0.02)


def test_linear_matches_adaptive_quadrature():
    g = UniformGrid.make(1, 2.0, 64)
    got = apply_multilinear(K1, [_box(g, -1, 1)], [0.0])[0]
    ref, _ = sciint.quad(lambda y: (0.1 + abs(y)) ** -1, -1, 1, points=[0.0])
    assert got == pytest.approx(ref, rel=0.02)


def test_zero_slot_gives_zero():
    f = _box(GRID, -1, 1)
    out = apply_multilinear(K2, [GridFunction.constant(GRID, 0.0), f])
    assert np.all(out.values == 0.0)


def test_grid_and_arity_checks():
    with pytest.raises(KernelError):
        apply_multilinear(K2, [_box(GRID, 0, 1)])
    other = UniformGrid.make(1, 1.0, 32)
    with pytest.raises(GridError):
        apply_multilinear(K2, [_box(GRID, 0, 1), _box(other, 0, 1)])
    with pytest.raises(GridError):
        apply_multilinear(K1, [_box(GRID, 0, 1)], np.zeros((2, 2)))


def test_translation_equivariance():
    g = UniformGrid.make(1, 2.0, 48)
    vals = np.zeros(48)
    vals[16:24] = np.linspace(1, 2, 8)
    shift = 8
    f = GridFunction(g, vals)
    moved = GridFunction(g, np.roll(vals, shift))
    a = apply_multilinear(K1, [f]).values
    b = apply_multilinear(K1, [moved]).values
    assert np.allclose(b[shift:], a[:-shift], rtol=1e-13)


def test_fractional_symmetry_and_linearity():
    g = UniformGrid.make(1, 2.0, 32)
    box = _box(g, -1, 1)
    out = fractional_integral(0.5, [box]).values
    assert np.allclose(out, out[::-1], rtol=1e-12)
    lin = fractional_integral(0.5, [box * 2.0 + _box(g, 0, 1)]).values
    assert np.allclose(lin, 2 * out + fractional_integral(0.5, [_box(g, 0, 1)]).values, rtol=1e-12)
    with pytest.raises(KernelError):
        fractional_integral(1.0, [box])


def test_symbol_weighted_without_symbols_is_plain_operator():
    f1, f2 = _box(GRID, -1, 0), _box(GRID, 0, 1.5)
    plain = apply_multilinear(K2, [f1, f2]).values
    assert np.allclose(apply_symbol_weighted(K2, [f1, f2], [None, None]).values, plain, rtol=1e-13)
    assert np.all(apply_symbol_weighted(K2, [f1, f2], [None, None], mode="sum").values == 0)
    with pytest.raises(KernelError):
        apply_symbol_weighted(K2, [f1, f2], [None, None], mode="max")


# -- property tests ------------------------------------------------------------

SMALL = UniformGrid.make(1, 1.0, 12)
nonneg = hnp.arrays(np.float64, 12, elements=st.floats(0, 3))
signed = hnp.arrays(np.float64, 12, elements=st.floats(-3, 3))


@given(nonneg, nonneg)
def test_positive_inputs_positive_output(a, b):
    out = apply_multilinear(K2, [GridFunction(SMALL, a), GridFunction(SMALL, b)]).values
    assert np.all(out >= 0)


@given(signed, signed, signed, st.floats(-2, 2))
def test_multilinear_in_first_slot(a, b, c, t):
    fa, fb, fc = (GridFunction(SMALL, v) for v in (a, b, c))
    lhs = apply_multilinear(K2, [fa + t * fb, fc]).values
    rhs = apply_multilinear(K2, [fa, fc]).values + t * apply_multilinear(K2, [fb, fc]).values
    scale = 1 + np.abs(rhs).max()
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-11 * scale)
