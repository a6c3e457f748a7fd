import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vexan.commutators import (
    CommutatorError,
    LipschitzNormKind,
    SymbolVector,
    commutator_j,
    commutator_j_integrand,
    iterated_commutator,
    lambda_seminorm,
    lipschitz_norm,
    nested_commutator,
    sum_commutator,
    sum_commutator_integrand,
)
from vexan.discretize import GridError, GridFunction, UniformGrid
from vexan.exponent import constant
from vexan.operators import make_mollified_cz_kernel

K1 = make_mollified_cz_kernel(1, 1, 0.1, certify=False)
K2 = make_mollified_cz_kernel(2, 1, 0.1, certify=False)
GRID = UniformGrid.make(1, 2.0, 24)


def _fn(grid, func):
    return GridFunction.from_callable(grid, lambda x: func(x[:, 0]))


def _rel(a: GridFunction, b: GridFunction) -> float:
    return float(np.max(np.abs(a.values - b.values)) / max(1e-300, np.max(np.abs(b.values))))


B1 = _fn(GRID, np.sin)
B2 = _fn(GRID, lambda x: np.abs(x) ** 0.5)
F1 = _fn(GRID, lambda x: np.exp(-(x**2)))
F2 = _fn(GRID, lambda x: (np.abs(x - 0.3) < 1).astype(float))


@pytest.mark.parametrize("j", [1, 2])
def test_two_routes_agree_bilinear(j):
    a = commutator_j(K2, B1, j, [F1, F2])
    b = commutator_j_integrand(K2, B1, j, [F1, F2])
    assert _rel(a, b) <= 1e-11


def test_two_routes_agree_linear_2d():
    g = UniformGrid.make(2, 1.0, 8)
    b = GridFunction.from_callable(g, lambda x: x[:, 0] * x[:, 1])
    f = GridFunction.from_callable(g, lambda x: np.exp(-np.sum(x**2, axis=1)))
    K = make_mollified_cz_kernel(1, 2, 0.1, certify=False)
    assert _rel(commutator_j(K, b, 1, [f]), commutator_j_integrand(K, b, 1, [f])) <= 1e-11


def test_constant_symbol_gives_exact_zero():
    c = GridFunction.constant(GRID, 0.7)
    assert np.all(commutator_j(K2, c, 1, [F1, F2]).values == 0.0)
    assert np.all(commutator_j_integrand(K2, c, 2, [F1, F2]).values == 0.0)
    assert np.all(nested_commutator(K2, [c, c], [F1, F2]).values == 0.0)


def test_linear_operator_forms_coincide():
    sc = sum_commutator(K1, [B1], [F1])
    it = iterated_commutator(K1, [B1], [F1])
    assert _rel(sc, it) <= 1e-11
    assert _rel(sum_commutator_integrand(K1, [B1], [F1]), it) <= 1e-11


def test_sum_commutator_routes():
    bs = SymbolVector((B1, B2))
    assert _rel(sum_commutator(K2, bs, [F1, F2]), sum_commutator_integrand(K2, bs, [F1, F2])) <= 1e-11


def test_nested_expansion_matches_product_weight():
    assert _rel(nested_commutator(K2, [B1, B2], [F1, F2]), iterated_commutator(K2, [B1, B2], [F1, F2])) <= 1e-11


def test_argument_checks():
    with pytest.raises(CommutatorError):
        commutator_j(K2, B1, 3, [F1, F2])
    with pytest.raises(CommutatorError):
        iterated_commutator(K2, [B1], [F1, F2])
    with pytest.raises(CommutatorError):
        SymbolVector(())
    with pytest.raises(GridError):
        SymbolVector((B1, GridFunction.constant(UniformGrid.make(1, 1.0, 24), 1.0)))


def test_lambda_of_square_root_is_one():
    g = UniformGrid.make(1, 1.0, 41)  # odd N puts a node at 0
    b = _fn(g, lambda x: np.sqrt(np.abs(x)))
    assert lambda_seminorm(b, 0.5) == pytest.approx(1.0, rel=1e-12)
    assert lipschitz_norm(b, LipschitzNormKind("Lambda", 0.5)) == pytest.approx(1.0, rel=1e-12)


def test_lambda_sampled_path_on_large_grid():
    g = UniformGrid.make(2, 1.0, 65)  # 4225 nodes: sampled pairs plus the near band
    b = GridFunction.from_callable(g, lambda x: np.sqrt(np.abs(x[:, 0])))
    # a node on the line x_0 = 0 and its neighbour along axis 0 give exactly 1
    assert lambda_seminorm(b, 0.5) == pytest.approx(1.0, rel=1e-12)


def test_osc_delta_of_linear_function():
    g = UniformGrid.make(1, 1.0, 16)
    lin = _fn(g, lambda x: x)
    # largest cube wins: (l/4) * l^-delta with l = 2
    assert lipschitz_norm(lin, LipschitzNormKind("OscDelta", 0.5)) == pytest.approx(0.5 * 2**-0.5, rel=1e-12)


def test_variable_and_weighted_forms_reduce_to_plain():
    b = _fn(GRID, lambda x: np.abs(x) ** 0.7)
    plain = lipschitz_norm(b, LipschitzNormKind("OscDelta", 0.0))
    var = lipschitz_norm(b, LipschitzNormKind("OscDeltaVar", beta=1.5, r=constant(1.5)))
    assert var == pytest.approx(plain, rel=1e-8)
    weighted = lipschitz_norm(b, LipschitzNormKind("OscWeighted", 0.3, w=GridFunction.constant(GRID, 1.0)))
    assert weighted == pytest.approx(lipschitz_norm(b, LipschitzNormKind("OscDelta", 0.3)), rel=1e-14)


def test_norm_kind_validation():
    with pytest.raises(CommutatorError):
        LipschitzNormKind("Lambda", 0.0)
    with pytest.raises(CommutatorError):
        LipschitzNormKind("OscAlphaP", alpha=0.5)
    with pytest.raises(CommutatorError):
        lipschitz_norm(B1, LipschitzNormKind("OscAlphaP", alpha=0.5, p=constant(1.0)))
    with pytest.raises(CommutatorError):
        lipschitz_norm(B1, LipschitzNormKind("OscDeltaVar", beta=2.0, r=constant(1.5)))


def test_lambda_over_oscillation_bracket_is_stable():
    ratios = []
    for n in (32, 64, 128):
        g = UniformGrid.make(1, 1.0, n)
        b = _fn(g, lambda x: np.sin(3 * x) + np.abs(x) ** 0.6)
        ratios.append(lipschitz_norm(b, LipschitzNormKind("OscDelta", 0.5)) / lambda_seminorm(b, 0.5))
    assert max(ratios) <= 1.15 * min(ratios)


# -- property tests ------------------------------------------------------------

SMALL = UniformGrid.make(1, 1.0, 10)
arr = hnp.arrays(np.float64, 10, elements=st.floats(-2, 2))


@given(arr, arr, st.floats(-3, 3).filter(lambda t: abs(t) > 1e-3))
def test_commutator_homogeneous_in_symbol(b, f, t):
    bb, ff = GridFunction(SMALL, b), GridFunction(SMALL, f)
    one = commutator_j(K1, bb, 1, [ff]).values
    scaled = commutator_j(K1, t * bb, 1, [ff]).values
    assert np.allclose(scaled, t * one, rtol=1e-10, atol=1e-10 * (1 + np.abs(one).max()))


@given(arr, arr, st.floats(-5, 5))
def test_commutator_ignores_symbol_shift(b, f, c):
    bb, ff = GridFunction(SMALL, b), GridFunction(SMALL, f)
    a = commutator_j_integrand(K1, bb, 1, [ff]).values
    s = commutator_j_integrand(K1, bb + c, 1, [ff]).values
    assert np.allclose(a, s, rtol=0, atol=1e-10 * (1 + np.abs(a).max()))


@given(arr, st.floats(-5, 5), st.floats(0.0, 0.9))
def test_oscillation_norm_shift_invariant(b, c, delta):
    bb = GridFunction(SMALL, b)
    kind = LipschitzNormKind("OscDelta", delta)
    assert lipschitz_norm(bb + c, kind) == pytest.approx(lipschitz_norm(bb, kind), rel=1e-9, abs=1e-12)
