import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdnpiv.splines import (DegenerateSupportError, design_matrix, difference_matrix, make_knots,
                            penalty)

from conftest import cox_de_boor


def test_knot_vector_layout():
    kv = make_knots(np.array([0.0, 10.0]), interior=4, degree=3)
    assert kv.dimension == 8
    np.testing.assert_allclose(kv.interior_knots, [2, 4, 6, 8])
    assert kv.knots.size == 4 + 2 * 4
    assert kv.boundary == (0.0, 10.0)


def test_default_dimension_is_24():
    kv = make_knots(np.linspace(0, 1, 50))
    assert kv.dimension == 24
    assert design_matrix(kv, [0.3]).shape == (1, 24)


def test_matches_independent_recursion():
    kv = make_knots([0.0, 7.0], interior=6, degree=3)
    x = np.linspace(0, 7, 57)
    B = design_matrix(kv, x)
    oracle = np.array([[cox_de_boor(kv.knots, 3, i, xi) for i in range(kv.dimension)]
                       for xi in x])
    np.testing.assert_allclose(B, oracle, atol=1e-12)


def test_cubic_values_at_interior_knot():
    # uniform cubic B-spline takes 1/6, 2/3, 1/6 at an interior knot away from the boundary
    kv = make_knots([0.0, 21.0], interior=20, degree=3)
    knot = kv.interior_knots[10]
    row = design_matrix(kv, [knot])[0]
    nz = row[row > 1e-14]
    np.testing.assert_allclose(nz, [1 / 6, 2 / 3, 1 / 6], atol=1e-12)
    oracle = [cox_de_boor(kv.knots, 3, i, knot) for i in range(kv.dimension)]
    np.testing.assert_allclose(row, oracle, atol=1e-12)


def test_local_support():
    kv = make_knots([0.0, 1.0], interior=10, degree=3)
    x = np.linspace(0, 1, 301)
    B = design_matrix(kv, x)
    assert np.all((B > 0).sum(axis=1) <= kv.degree + 1)
    for j in range(kv.dimension):
        inside = (x >= kv.knots[j]) & (x <= kv.knots[j + kv.degree + 1])
        assert np.all(B[~inside, j] == 0)


@settings(max_examples=50, deadline=None)
@given(lo=st.floats(-1e3, 1e3), width=st.floats(1e-2, 1e3),
       interior=st.integers(1, 30), degree=st.integers(1, 4))
def test_partition_of_unity(lo, width, interior, degree):
    kv = make_knots([lo, lo + width], interior, degree)
    x = np.linspace(lo, lo + width, 97)
    B = design_matrix(kv, x)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-10)
    assert B.min() >= 0


def test_out_of_support_clamped_with_warning():
    kv = make_knots([0.0, 1.0], interior=3)
    with pytest.warns(RuntimeWarning, match="clamped"):
        B = design_matrix(kv, [-0.5, 1.5])
    np.testing.assert_allclose(B, design_matrix(kv, [0.0, 1.0]))


def test_degenerate_support():
    with pytest.raises(DegenerateSupportError):
        make_knots(np.full(10, 3.0))


@pytest.mark.parametrize("bad", [dict(interior=0), dict(degree=0)])
def test_invalid_knot_arguments(bad):
    with pytest.raises(ValueError):
        make_knots([0, 1], **bad)


def test_second_difference_penalty_small_case():
    K = penalty(4, 2).matrix
    expected = np.array([[1, -2, 1, 0], [-2, 5, -4, 1], [1, -4, 5, -2], [0, 1, -2, 1]], float)
    np.testing.assert_array_equal(K, expected)
    np.testing.assert_array_equal(difference_matrix(4, 2), [[1, -2, 1, 0], [0, 1, -2, 1]])


@pytest.mark.parametrize("dim,order", [(24, 2), (10, 1), (8, 3)])
def test_penalty_rank_and_null_space(dim, order):
    pm = penalty(dim, order)
    eig = np.linalg.eigvalsh(pm.matrix)
    assert pm.rank == dim - order
    assert np.sum(eig > 1e-9 * eig.max()) == dim - order
    # polynomials of degree < order in the coefficient index are unpenalised
    j = np.arange(dim, dtype=float)
    for p in range(order):
        v = j ** p
        assert abs(v @ pm.matrix @ v) < 1e-10 * max(1.0, v @ v)


def test_linear_function_is_reproduced_exactly():
    kv = make_knots([0.0, 1.0], interior=20)
    x = np.linspace(0, 1, 200)
    B = design_matrix(kv, x)
    coef, *_ = np.linalg.lstsq(B, 3.0 - 2.0 * x, rcond=None)
    np.testing.assert_allclose(B @ coef, 3.0 - 2.0 * x, atol=1e-10)


def test_penalty_requires_dimension_above_order():
    with pytest.raises(ValueError):
        penalty(2, 2)
