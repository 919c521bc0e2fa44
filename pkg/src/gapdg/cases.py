"""Manufactured test problems on the two-patch gap domains.

Every case provides the exact solution, its gradient and the source
``f = -div(rho grad u)`` in closed form, one branch per subdomain. The left
patch uses the ``x_1 < 0`` branch and the right patch (and the gap) the
``x_1 >= 0`` branch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import DiffusionCoefficients, Discretization
from .geometry import MultiPatchDomain, PatchMap, default_profile, make_gap_domain
from .splines import KnotVector, TensorBasis, refine_dyadic

PI = np.pi

# coarse control nets, direction 1 fastest
LEFT_NET_2D = np.array([
    [-1, -0.2], [-0.75, 0], [-0.5, 0], [-0.25, 0], [0, 0],
    [-1, 0.25], [-0.75, 0.25], [-0.5, 0.25], [-0.25, 0.25], [0, 0.25],
    [-1, 0.5], [-0.75, 0.5], [-0.5, 0.5], [-0.25, 0.5], [0, 0.5],
    [-1, 0.75], [-0.75, 0.75], [-0.5, 0.75], [-0.25, 0.75], [0, 0.75],
    [-1, 1.2], [-0.75, 1], [-0.5, 1], [-0.25, 1], [0, 1],
], dtype=float)
RIGHT_NET_2D = np.array([
    [0, 0], [0.25, 0], [0.5, 0], [0.75, 0], [1, 0.2],
    [0, 0.25], [0.25, 0.25], [0.5, 0.25], [0.75, 0.25], [1, 0.25],
    [0, 0.5], [0.25, 0.5], [0.5, 0.5], [0.75, 0.5], [1, 0.5],
    [0, 0.75], [0.25, 0.75], [0.5, 0.75], [0.75, 0.75], [1, 0.75],
    [0, 1], [0.25, 1], [0.5, 1], [0.75, 1], [1, 0.8],
], dtype=float)
BASE_KNOTS = (0.0, 0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 1.0)
X3_LAYERS = (0.0, 0.25, 0.5, 0.75, 1.0)

CASE_IDS = ("ex1", "ex2", "ex3", "ex4", "ex5")
EX3_GAMMAS = (0.38, 0.42, 1.0, 1.5, 2.0)


def prolong_net(net2d) -> np.ndarray:
    """Replicate a planar net at the ``x_3`` layers (direction 3 slowest)."""
    return np.vstack([np.column_stack([net2d, np.full(len(net2d), z)]) for z in X3_LAYERS])


def coarse_patches(dim: int):
    kv = KnotVector(2, BASE_KNOTS)
    basis = TensorBasis([kv] * dim)
    nets = (LEFT_NET_2D, RIGHT_NET_2D) if dim == 2 else (prolong_net(LEFT_NET_2D), prolong_net(RIGHT_NET_2D))
    return PatchMap(basis, nets[0], "left"), PatchMap(basis, nets[1], "right")


def discretization_knots(geom_kv: KnotVector, degree: int, level: int) -> KnotVector:
    """Degree-``degree`` knot vector with the continuity of ``geom_kv``, refined ``level`` times."""
    bps = geom_kv.breakpoints
    t = [0.0] * (degree + 1)
    for b in bps[1:-1]:
        mult = int(np.sum(geom_kv.array == b))
        cont = geom_kv.degree - mult
        t += [float(b)] * min(degree, max(1, degree - cont))
    t += [1.0] * (degree + 1)
    return refine_dyadic(KnotVector(degree, t), level)


def discretization_bases(domain: MultiPatchDomain, degree: int, level: int):
    return tuple(TensorBasis([discretization_knots(kv, degree, level) for kv in p.basis.kvs])
                 for p in (domain.left, domain.right))


def mesh_size(level: int, dim: int = 2) -> float:
    """Largest parametric element diameter of the refined discretization at ``level``."""
    return float(np.sqrt(dim)) * 0.5 / 2 ** level


@dataclass(frozen=True, eq=False)
class ProblemCase:
    """Exact solution data; callables take points ``(N, d)`` and a side label."""

    id: str
    dim: int
    rho_l: float
    rho_r: float
    branches: dict = field(repr=False)
    gamma: float | None = None
    split: float = 0.0
    description: str = ""
    singular_points: tuple = ()

    def _branch(self, side):
        return self.branches["left" if side == "left" else "right"]

    def _dispatch(self, which, x, side):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if side is not None:
            return self._branch(side)[which](x)
        left = x[:, 0] < 0
        out_l = self.branches["left"][which](x)
        out_r = self.branches["right"][which](x)
        mask = left if out_l.ndim == 1 else left[:, None]
        return np.where(mask, out_l, out_r)

    def u(self, x, side=None):
        return self._dispatch("u", x, side)

    def grad(self, x, side=None):
        return self._dispatch("grad", x, side)

    def f(self, x, side=None):
        return self._dispatch("f", x, side)

    def coefficients(self, rho_g=None) -> DiffusionCoefficients:
        return DiffusionCoefficients(self.rho_l, self.rho_r, rho_g)


def _pad(g, dim):
    if g.shape[1] < dim:
        g = np.hstack([g, np.zeros((g.shape[0], dim - g.shape[1]))])
    return g


def _ex1_branch(dim):
    def u(x):
        return np.sin(5 * PI * x[:, 0]) * np.sin(4 * PI * x[:, 1])

    def grad(x):
        g = np.column_stack([5 * PI * np.cos(5 * PI * x[:, 0]) * np.sin(4 * PI * x[:, 1]),
                             4 * PI * np.sin(5 * PI * x[:, 0]) * np.cos(4 * PI * x[:, 1])])
        return _pad(g, dim)

    def f(x):
        return 41 * PI ** 2 * u(x)

    return {"u": u, "grad": grad, "f": f}


def _ex2_branches(dim):
    rho1 = 4 * PI
    left = {
        "u": lambda x: np.exp(x[:, 0]) - 1.0,
        "grad": lambda x: _pad(np.exp(x[:, 0])[:, None], dim),
        "f": lambda x: -rho1 * np.exp(x[:, 0]),
    }
    right = {
        "u": lambda x: np.sin(4 * PI * x[:, 0]),
        "grad": lambda x: _pad((4 * PI * np.cos(4 * PI * x[:, 0]))[:, None], dim),
        "f": lambda x: 16 * PI ** 2 * np.sin(4 * PI * x[:, 0]),
    }
    return left, right


def _ex3_branch(gamma):
    def r2(x):
        return x[:, 0] ** 2 + (x[:, 1] - 0.5) ** 2

    def u(x):
        return r2(x) ** (gamma / 2)

    def grad(x):
        c = gamma * r2(x) ** (gamma / 2 - 1)
        return np.column_stack([c * x[:, 0], c * (x[:, 1] - 0.5)])

    def f(x):
        return -gamma ** 2 * r2(x) ** (gamma / 2 - 1)

    return {"u": u, "grad": grad, "f": f}


def _ex5_branches():
    left = {
        "u": lambda x: np.sin(PI * (x[:, 0] + x[:, 1])),
        "grad": lambda x: _pad(PI * np.cos(PI * (x[:, 0] + x[:, 1]))[:, None] * np.array([[1.0, 1.0]]), 3),
        "f": lambda x: 8 * PI ** 2 * np.sin(PI * (x[:, 0] + x[:, 1])),
    }
    right = {
        "u": lambda x: np.sin(PI * (4 * x[:, 0] + x[:, 1])),
        "grad": lambda x: _pad(PI * np.cos(PI * (4 * x[:, 0] + x[:, 1]))[:, None] * np.array([[4.0, 1.0]]), 3),
        "f": lambda x: 17 * PI ** 2 * np.sin(PI * (4 * x[:, 0] + x[:, 1])),
    }
    return left, right


def _linear_branch(dim):
    a = np.array([1.0, 2.0, -0.5][:dim])

    return {"u": lambda x: 0.3 + x @ a,
            "grad": lambda x: np.broadcast_to(a, x.shape).copy(),
            "f": lambda x: np.zeros(x.shape[0])}


def get_case(case_id: str, gamma: float | None = None) -> ProblemCase:
    """Problem data of a built-in case (``linear`` is a patch-test helper)."""
    if case_id == "ex1":
        b = _ex1_branch(2)
        return ProblemCase("ex1", 2, 1.0, 1.0, {"left": b, "right": b},
                           description="u = sin(5 pi x1) sin(4 pi x2), rho = 1")
    if case_id in ("ex2", "ex4"):
        dim = 2 if case_id == "ex2" else 3
        left, right = _ex2_branches(dim)
        return ProblemCase(case_id, dim, 4 * PI, 1.0, {"left": left, "right": right},
                           description="u = exp(x1) - 1 | sin(4 pi x1), rho = 4 pi | 1")
    if case_id == "ex3":
        if gamma is None:
            raise ValueError("ex3 requires gamma")
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        b = _ex3_branch(float(gamma))
        return ProblemCase("ex3", 2, 1.0, 1.0, {"left": b, "right": b}, gamma=float(gamma),
                           description=f"u = r^{gamma} about (0, 0.5), rho = 1",
                           singular_points=((0.0, 0.5),))
    if case_id == "ex5":
        left, right = _ex5_branches()
        return ProblemCase("ex5", 3, 4.0, 1.0, {"left": left, "right": right}, split=0.5,
                           description="u = sin(pi(x1+x2)) | sin(pi(4x1+x2)), rho = 4 | 1, split gap")
    if case_id in ("linear", "linear3"):
        dim = 2 if case_id == "linear" else 3
        b = _linear_branch(dim)
        return ProblemCase(case_id, dim, 1.0, 1.0, {"left": b, "right": b}, description="affine u")
    raise ValueError(f"unknown case id {case_id!r}; expected one of {CASE_IDS}")


def exact_eval(case: ProblemCase, x, which: str = "value", side=None):
    if which == "value":
        return case.u(x, side)
    if which == "gradient":
        return case.grad(x, side)
    if which == "source":
        return case.f(x, side)
    raise ValueError("which must be 'value', 'gradient' or 'source'")


def sobolev_regularity(case: ProblemCase, degree: int):
    """Regularity pair ``(l, p)`` used for the predicted rate."""
    if case.id == "ex3" and case.gamma is not None and case.gamma < 2:
        g = case.gamma
        if g < 1:
            return 2.0, np.floor(100 * 2 / (2 - g)) / 100
        return 1.0 + g, 2.0
    return float(degree + 1), 2.0


@dataclass(frozen=True, eq=False)
class CaseInstance:
    """A case discretized at one refinement level."""

    case: ProblemCase
    disc: Discretization
    level: int
    dg: float
    lam: float | None

    @property
    def domain(self) -> MultiPatchDomain:
        return self.disc.domain

    @property
    def h(self) -> float:
        return self.disc.h


def build_case(case_id, level: int, lam=None, dg=None, gamma=None, degree: int = 2,
               rho_g=None, domain: MultiPatchDomain | None = None) -> CaseInstance:
    """Discretize a built-in case at ``level`` with gap ``dg`` or ``dg = h^lam``.

    The gap is opened on the coarse control nets; the spline spaces are refined
    separately so the geometry is identical on every level. A ``domain`` read
    from a geometry file replaces the built-in one.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    case = get_case(case_id, gamma)
    h = mesh_size(level, case.dim)
    if domain is None:
        if (lam is None) == (dg is None):
            raise ValueError("give exactly one of lam and dg")
        dg = h ** lam if dg is None else float(dg)
        left, right = coarse_patches(case.dim)
        domain = make_gap_domain(left, right, dg, case.split, default_profile(case.dim),
                                 float("nan") if lam is None else float(lam))
    elif domain.dim != case.dim:
        raise ValueError("geometry dimension does not match the case")
    bases = discretization_bases(domain, degree, level)
    disc = Discretization.build(domain, bases, case.coefficients(rho_g),
                                singular_points=case.singular_points)
    return CaseInstance(case, disc, level, domain.gap.dg, lam)
