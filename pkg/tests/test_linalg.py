import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from gapdg.assembly import PenaltyConfig, assemble_system
from gapdg.cases import build_case
from gapdg.linalg import SolverError, as_csr, matvec, relative_residual, solve


def poisson_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def test_matvec_examples():
    x = np.arange(5.0)
    np.testing.assert_array_equal(matvec(as_csr(sp.eye(5)), x), x)
    np.testing.assert_array_equal(matvec(as_csr([[2, 1], [0, 3]]), [1, 1]), [3, 3])
    rng = np.random.default_rng(0)
    D = rng.standard_normal((50, 50))
    v = rng.standard_normal(50)
    np.testing.assert_allclose(matvec(as_csr(D), v), D @ v, rtol=0, atol=1e-13)
    with pytest.raises(ValueError):
        matvec(as_csr(D), np.ones(49))


def test_as_csr_sums_duplicates():
    A = sp.coo_matrix(([1.0, 2.0], ([0, 0], [1, 1])), shape=(2, 2))
    C = as_csr(A)
    assert C.nnz == 1 and C[0, 1] == 3.0


@pytest.mark.parametrize("method", ["direct_lu", "gmres"])
def test_zero_rhs(method):
    np.testing.assert_array_equal(solve(poisson_1d(4), np.zeros(4), method), np.zeros(4))


@pytest.mark.parametrize("method", ["direct_lu", "gmres"])
def test_poisson_closed_form(method):
    n = 10
    i = np.arange(1, n + 1)
    exact = i * (n + 1 - i) / 2
    x = solve(poisson_1d(n), np.ones(n), method)
    np.testing.assert_allclose(x, exact, rtol=0, atol=1e-10 * exact.max())


@given(st.integers(2, 30), st.integers(0, 10_000))
def test_random_well_conditioned_systems(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 2 * n * np.eye(n)
    b = rng.standard_normal(n)
    x = solve(as_csr(A), b)
    assert relative_residual(as_csr(A), x, b) <= 1e-10
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-10)


def test_lu_and_gmres_agree_on_dg_system():
    inst = build_case("ex2", 2, lam=1)
    A, b = assemble_system(inst.disc, inst.case.f, inst.case.u, PenaltyConfig.default(2))
    x1 = solve(A, b, "direct_lu", tol=1e-12)
    x2 = solve(A, b, "gmres", tol=1e-12)
    assert np.max(np.abs(x1 - x2)) <= 1e-8 * np.max(np.abs(x1))


def test_singular_matrix_raises():
    A = as_csr([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SolverError):
        solve(A, np.array([1.0, 1.0]))


def test_bad_arguments():
    A = poisson_1d(3)
    with pytest.raises(ValueError):
        solve(A, np.ones(4))
    with pytest.raises(ValueError):
        solve(as_csr(np.ones((2, 3))), np.ones(2))
    with pytest.raises(ValueError):
        solve(A, np.ones(3), method="cg")
