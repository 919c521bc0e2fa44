import numpy as np
import pytest

from gapdg.cases import (CASE_IDS, build_case, coarse_patches, discretization_knots, exact_eval, get_case,
                         mesh_size)
from gapdg.splines import KnotVector

ALL = [("ex1", None), ("ex2", None), ("ex3", 1.5), ("ex3", 0.42), ("ex4", None), ("ex5", None)]


def fd_source(case, x, side, s=1e-4):
    rho = case.rho_l if side == "left" else case.rho_r
    d = x.shape[1]
    lap = np.zeros(len(x))
    u0 = case.u(x, side)
    for e in np.eye(d):
        lap += (case.u(x + s * e, side) - 2 * u0 + case.u(x - s * e, side)) / s ** 2
    return -rho * lap


@pytest.mark.parametrize("cid,gamma", ALL)
def test_source_matches_finite_differences(cid, gamma):
    case = get_case(cid, gamma)
    rng = np.random.default_rng(7)
    for patch, side in zip(coarse_patches(case.dim), ("left", "right")):
        x = patch.map_point(0.05 + 0.9 * rng.random((100, case.dim)))
        if case.singular_points:
            x = x[np.linalg.norm(x[:, :2] - case.singular_points[0], axis=1) > 0.05]
        f = case.f(x, side)
        assert np.max(np.abs(fd_source(case, x, side) - f)) <= 1e-5 * np.max(np.abs(f))


@pytest.mark.parametrize("cid,gamma", ALL)
def test_gradient_matches_finite_differences(cid, gamma):
    case = get_case(cid, gamma)
    x = coarse_patches(case.dim)[1].map_point(np.random.default_rng(1).random((50, case.dim)))
    s = 1e-6
    fd = np.column_stack([(case.u(x + s * e, "right") - case.u(x - s * e, "right")) / (2 * s)
                          for e in np.eye(case.dim)])
    np.testing.assert_allclose(case.grad(x, "right"), fd, atol=1e-6 * max(1, np.abs(fd).max()))


@pytest.mark.parametrize("cid", ["ex2", "ex4", "ex5"])
def test_interface_continuity(cid):
    case = get_case(cid)
    rng = np.random.default_rng(2)
    x = np.column_stack([np.zeros(200), rng.random((200, case.dim - 1))])
    assert np.max(np.abs(case.u(x, "left") - case.u(x, "right"))) <= 1e-10
    flux_l = case.rho_l * case.grad(x, "left")[:, 0]
    flux_r = case.rho_r * case.grad(x, "right")[:, 0]
    assert np.max(np.abs(flux_l - flux_r)) <= 1e-10


def test_exact_eval_examples():
    c = get_case("ex1")
    assert exact_eval(c, np.array([[0.1, 0.125]]))[0] == pytest.approx(np.sin(0.5 * np.pi))
    assert exact_eval(c, np.array([[0.1, 0.125]]), "source")[0] == pytest.approx(41 * np.pi ** 2)
    c2 = get_case("ex2")
    x = np.array([[-0.5, 0.3], [0.125, 0.3]])
    np.testing.assert_allclose(exact_eval(c2, x), [np.exp(-0.5) - 1, 1.0], atol=1e-15)
    np.testing.assert_allclose(exact_eval(c2, x, "gradient"), [[np.exp(-0.5), 0], [0, 0]], atol=1e-12)
    c3 = get_case("ex3", 2.0)
    assert exact_eval(c3, np.array([[0.3, 0.9]]))[0] == pytest.approx(0.25)
    assert exact_eval(c3, np.array([[0.3, 0.9]]), "source")[0] == pytest.approx(-4.0)
    with pytest.raises(ValueError):
        exact_eval(c, x, "hessian")


def test_case_errors():
    with pytest.raises(ValueError):
        get_case("ex9")
    with pytest.raises(ValueError):
        get_case("ex3")
    with pytest.raises(ValueError):
        build_case("ex1", 1)
    with pytest.raises(ValueError):
        build_case("ex1", 1, lam=1, dg=0.1)
    assert set(CASE_IDS) == {"ex1", "ex2", "ex3", "ex4", "ex5"}


@pytest.mark.parametrize("cid,lam,level", [("ex1", 1, 3), ("ex2", 2, 2), ("ex4", 1, 2), ("ex5", 1, 1)])
def test_gap_distance_follows_schedule(cid, lam, level):
    inst = build_case(cid, level, lam=lam)
    h = mesh_size(level, inst.case.dim)
    assert inst.h == h
    assert inst.domain.gap_distance() == pytest.approx(h ** lam, rel=1e-9)


def test_discretization_keeps_geometry_continuity():
    kv = discretization_knots(KnotVector(2, (0, 0, 0, 0.5, 0.5, 1, 1, 1)), 2, 1)
    assert list(kv.array) == [0, 0, 0, 0.25, 0.5, 0.5, 0.75, 1, 1, 1]
    inst = build_case("ex1", 3, lam=1)
    assert inst.disc.h == pytest.approx(np.sqrt(2) * 0.5 / 8)
    assert all(s.basis.mesh_size == inst.disc.h for s in inst.disc.spaces)
    assert build_case("ex4", 1, lam=2).h == pytest.approx(np.sqrt(3) / 4)
