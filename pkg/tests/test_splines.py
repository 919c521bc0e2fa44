import numpy as np
import pytest
from hypothesis import given, strategies as st

from gapdg.splines import (KnotVector, SplineDomainError, TensorBasis, eval_basis,
                           eval_basis_derivs, insertion_matrix, refine_dyadic, tensor_eval)

BASE = KnotVector(2, (0, 0, 0, 0.5, 0.5, 1, 1, 1))
KVS = [BASE, refine_dyadic(BASE, 2), KnotVector(3, (0, 0, 0, 0, 0.3, 0.3, 0.7, 1, 1, 1, 1)),
       KnotVector(1, (0, 0, 0.25, 1, 1)), KnotVector(2, (0, 0, 0, 0.4, 0.4, 0.4, 1, 1, 1))]


def test_endpoint_interpolation():
    first, vals = eval_basis(BASE, 0.0)
    assert first == 0
    np.testing.assert_array_equal(vals, [1, 0, 0])
    first, vals = eval_basis(BASE, 1.0)
    assert first == BASE.n - 3
    np.testing.assert_array_equal(vals, [0, 0, 1])


def test_bernstein_values_at_quarter():
    # on [0, 0.5] with the double knot the basis is Bernstein in t = 2x
    first, vals = eval_basis(BASE, 0.25)
    assert first == 0
    np.testing.assert_allclose(vals, [0.25, 0.5, 0.25], atol=1e-15)


def test_first_and_second_derivatives_at_quarter():
    _, d = eval_basis_derivs(BASE, 0.25, 2)
    np.testing.assert_allclose(d[0], [0.25, 0.5, 0.25], atol=1e-14)
    np.testing.assert_allclose(d[1], [-2, 0, 2], atol=1e-12)
    np.testing.assert_allclose(d[2], [8, -16, 8], atol=1e-10)


def test_order_zero_matches_values():
    x = np.linspace(0, 1, 37)
    f0, v = eval_basis(BASE, x)
    f1, d = eval_basis_derivs(BASE, x, 0)
    np.testing.assert_array_equal(f0, f1)
    np.testing.assert_array_equal(v, d[:, 0])


def test_derivative_order_above_degree_is_zero():
    kv = KnotVector(1, (0, 0, 0.5, 1, 1))
    _, d = eval_basis_derivs(kv, np.array([0.2, 0.7]), 2)
    np.testing.assert_array_equal(d[:, 2], 0.0)


def test_domain_error():
    with pytest.raises(SplineDomainError):
        eval_basis(BASE, 1.5)
    with pytest.raises(SplineDomainError):
        eval_basis(BASE, -1e-3)


@pytest.mark.parametrize("knots", [(0, 0, 0.5, 1, 1, 1), (0, 0, 0, 0.6, 0.5, 1, 1, 1),
                                   (0, 0, 0, 0.5, 0.5, 0.5, 0.5, 1, 1, 1), (0, 0, 0, 1, 1)])
def test_invalid_knot_vectors(knots):
    with pytest.raises(ValueError):
        KnotVector(2, knots)


@pytest.mark.parametrize("kv", KVS)
def test_partition_of_unity_and_nonnegativity(kv):
    x = np.random.default_rng(0).random(1000)
    _, v = eval_basis(kv, x)
    assert np.max(np.abs(v.sum(axis=1) - 1)) <= 1e-12
    assert v.min() >= -1e-14


@pytest.mark.parametrize("kv", KVS)
def test_derivatives_match_finite_differences(kv):
    rng = np.random.default_rng(1)
    bps = kv.breakpoints
    # keep the stencil inside one span
    x = rng.uniform(0.01, 0.99, 200)
    x = x[np.min(np.abs(x[:, None] - bps[None, :]), axis=1) > 1e-4]
    s = 1e-6
    first, d = eval_basis_derivs(kv, x, 1)
    fp, vp = eval_basis(kv, x + s)
    fm, vm = eval_basis(kv, x - s)
    assert np.array_equal(fp, first) and np.array_equal(fm, first)
    fd = (vp - vm) / (2 * s)
    np.testing.assert_allclose(d[:, 1], fd, rtol=1e-5, atol=1e-5 * np.abs(fd).max())
    assert np.max(np.abs(d[:, 1].sum(axis=1))) < 1e-9


def test_refine_dyadic_inserts_midpoints():
    fine = refine_dyadic(BASE, 1)
    assert fine.knots == (0, 0, 0, 0.25, 0.5, 0.5, 0.75, 1, 1, 1)
    assert refine_dyadic(BASE, 0) == BASE
    for L in range(4):
        assert len(refine_dyadic(BASE, L).spans) == 2 * 2 ** L
        assert refine_dyadic(BASE, L).mesh_size == 0.5 / 2 ** L


@pytest.mark.parametrize("kv", KVS)
def test_refinement_nesting(kv):
    fine = refine_dyadic(kv, 2)
    T = insertion_matrix(kv, fine)
    c = np.random.default_rng(2).standard_normal(kv.n)
    x = np.random.default_rng(3).random(100)
    fc, vc = eval_basis(kv, x)
    ff, vf = eval_basis(fine, x)
    coarse = np.sum(vc * c[fc[:, None] + np.arange(kv.degree + 1)], axis=1)
    cf = T @ c
    finev = np.sum(vf * cf[ff[:, None] + np.arange(fine.degree + 1)], axis=1)
    assert np.max(np.abs(coarse - finev)) <= 1e-12


def test_right_limit_at_interior_full_multiplicity_knot():
    kv = KnotVector(2, (0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1))
    first, v = eval_basis(kv, 0.5)
    assert first == 3
    np.testing.assert_allclose(v, [1, 0, 0])


def test_tensor_eval_outer_product():
    tb = TensorBasis([BASE, BASE])
    idx, vals, grads = tensor_eval(tb, [0.25, 0.25])
    np.testing.assert_allclose(vals, np.outer([0.25, 0.5, 0.25], [0.25, 0.5, 0.25]).ravel(), atol=1e-15)
    # direction 1 fastest
    np.testing.assert_array_equal(idx, [0, 1, 2, 5, 6, 7, 10, 11, 12])
    np.testing.assert_allclose(grads[:, 0], np.outer([0.25, 0.5, 0.25], [-2, 0, 2]).ravel(), atol=1e-13)


def test_tensor_corner_single_unit_value():
    tb = TensorBasis([BASE, refine_dyadic(BASE, 1), BASE])
    idx, vals, _ = tensor_eval(tb, [0, 0, 0])
    assert vals.sum() == pytest.approx(1.0)
    assert np.count_nonzero(vals) == 1
    assert idx[np.argmax(vals)] == 0


def test_tensor_basis_elements_and_uniformity():
    tb = TensorBasis([refine_dyadic(BASE, 1), refine_dyadic(BASE, 2)])
    els = tb.elements()
    assert len(els) == tb.num_elements == 4 * 8
    np.testing.assert_allclose(els[1], [[0.25, 0.5], [0, 0.125]])
    assert tb.quasi_uniformity == 1.0
    assert tb.mesh_size == pytest.approx(np.hypot(0.25, 0.125))


@given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.integers(0, 2))
def test_tensor_partition_of_unity(x, level):
    tb = TensorBasis([refine_dyadic(BASE, level), KVS[2]])
    _, vals, grads = tensor_eval(tb, x)
    assert abs(vals.sum() - 1) <= 1e-12
    assert np.all(np.abs(grads.sum(axis=0)) <= 1e-9 * (1 + np.abs(grads).max()))
