"""Patch maps, the gap interface between two patches, and the geometry file format.

A patch is the image of the unit cube under a B-spline map. The two-patch
domains handled here consist of a *left* patch whose side ``x̂_1 = 1`` and a
*right* patch whose side ``x̂_1 = 0`` face each other across a thin gap. The
right face is the graph of ``d_g * zeta`` over the left face along a fixed
coordinate axis, so that opposite points are linked uni-directionally.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .splines import KnotVector, TensorBasis, eval_basis


class DegenerateGeometryError(ValueError):
    """Raised when a patch Jacobian is not positive."""


class InversionError(RuntimeError):
    """Raised when Newton inversion of a patch map does not converge."""


# faces are (axis, side) with side 0 at x̂_axis = 0 and side 1 at x̂_axis = 1
GAP_FACE = {"left": (0, 1), "right": (0, 0)}


def face_to_volume(params, axis: int, side: int):
    """Insert the fixed coordinate of face ``(axis, side)`` into face parameters."""
    params = np.asarray(params, dtype=float)
    params = params.reshape(params.shape[0], -1)
    return np.insert(params, axis, float(side), axis=1)


def _unit_normal(tangents):
    """Unit normal and area element of the span of ``d-1`` tangent vectors.

    ``tangents`` has shape ``(N, d, d-1)``; the normal follows the right-hand
    rule and is oriented by the caller.
    """
    N, d, _ = tangents.shape
    if d == 1:
        return np.ones((N, 1)), np.ones(N)
    if d == 2:
        t = tangents[:, :, 0]
        n = np.column_stack([t[:, 1], -t[:, 0]])
    else:
        n = np.cross(tangents[:, :, 0], tangents[:, :, 1])
    area = np.linalg.norm(n, axis=1)
    return n / area[:, None], area


@dataclass(frozen=True, eq=False)
class PatchMap:
    """B-spline geometry map ``x = sum_j C_j B_j(x̂)`` of one patch.

    ``control_points`` has shape ``(n, d)`` in lexicographic order with
    direction 1 running fastest.
    """

    basis: TensorBasis
    control_points: np.ndarray
    label: str = "left"

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        if cp.shape != (self.basis.size, self.basis.dim):
            raise ValueError(
                f"expected {self.basis.size} control points in R^{self.basis.dim}, got {cp.shape}")
        object.__setattr__(self, "control_points", cp)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def grid(self) -> np.ndarray:
        """Control points as an array indexed ``[i_d, ..., i_1, :]``."""
        return self.control_points.reshape(tuple(reversed(self.basis.shape)) + (self.dim,))

    def evaluate(self, xh):
        """Physical points ``(N, d)`` and Jacobians ``(N, d, d)`` at ``xh``."""
        idx, vals, grads = self.basis.evaluate(xh, 1)
        C = self.control_points[idx]
        x = (vals[:, None, :] @ C)[:, 0]
        jac = C.transpose(0, 2, 1) @ grads
        return x, jac

    def map_point(self, xh):
        xh = np.asarray(xh, dtype=float)
        idx, vals = self.basis.evaluate(xh.reshape(-1, self.dim), 0)
        x = (vals[:, None, :] @ self.control_points[idx])[:, 0]
        return x.reshape(xh.shape)

    def jacobian(self, xh):
        """Jacobian matrices and determinants; raises if a determinant is not positive."""
        xh = np.asarray(xh, dtype=float)
        _, jac = self.evaluate(xh.reshape(-1, self.dim))
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise DegenerateGeometryError(f"non-positive Jacobian determinant in {self.label} patch")
        if xh.ndim == 1:
            return jac[0], float(det[0])
        return jac, det

    def locate(self, x, tol=1e-10, maxiter=50, seeds_per_dir=9):
        """Newton inversion without raising; returns ``(xh, residual_norm)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = self.dim
        g = np.linspace(0.0, 1.0, seeds_per_dir)
        seeds = np.array(list(itertools.product(g, repeat=d)))
        seed_x = self.map_point(seeds)
        best = np.empty(x.shape[0], dtype=np.int64)
        for s in range(0, x.shape[0], 4096):
            dist = np.linalg.norm(x[s:s + 4096, None, :] - seed_x[None, :, :], axis=2)
            best[s:s + 4096] = np.argmin(dist, axis=1)
        xh = seeds[best].copy()
        res = np.full(x.shape[0], np.inf)
        active = np.ones(x.shape[0], dtype=bool)
        for _ in range(maxiter):
            if not active.any():
                break
            px, jac = self.evaluate(xh[active])
            r = px - x[active]
            res[active] = np.linalg.norm(r, axis=1)
            done = res[active] <= tol
            ids = np.flatnonzero(active)
            active[ids[done]] = False
            if not active.any():
                break
            keep = ~done
            try:
                step = np.linalg.solve(jac[keep], r[keep][:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                step = np.einsum("nij,nj->ni", np.linalg.pinv(jac[keep]), r[keep])
            new = np.clip(xh[active] - step, 0.0, 1.0)
            stalled = np.max(np.abs(new - xh[active]), axis=1) <= 1e-15
            xh[active] = new
            ids = np.flatnonzero(active)
            # clamped iterates that no longer move are final
            if stalled.any():
                px2 = self.map_point(xh[ids[stalled]])
                res[ids[stalled]] = np.linalg.norm(px2 - x[ids[stalled]], axis=1)
                active[ids[stalled]] = False
        if active.any():
            px = self.map_point(xh[active])
            res[active] = np.linalg.norm(px - x[active], axis=1)
        return xh, res

    def inverse_map(self, x, tol=1e-10, maxiter=50):
        """Parametric preimage of physical points, clamped to the unit cube.

        Points within about ``1e-8`` of the patch image are accepted; farther
        points raise :class:`InversionError`.
        """
        x = np.asarray(x, dtype=float)
        xh, res = self.locate(x.reshape(-1, self.dim), tol=tol, maxiter=maxiter)
        if np.any(res > max(1e-8, tol)):
            raise InversionError(
                f"Newton inversion failed in {self.label} patch (residual {res.max():.3e})")
        return xh.reshape(x.shape)

    def face_frame(self, xh, axis: int, side: int):
        """Outward unit normals and surface factors at points of face ``(axis, side)``.

        The surface factor converts parametric face measure into physical
        surface measure.
        """
        x, jac = self.evaluate(xh)
        others = [j for j in range(self.dim) if j != axis]
        n, area = _unit_normal(jac[:, :, others])
        # orient outward: same side as the image of the outward parametric direction
        out = jac[:, :, axis] * (1.0 if side == 1 else -1.0)
        flip = np.sign(np.einsum("ni,ni->n", n, out))
        flip[flip == 0] = 1.0
        return x, n * flip[:, None], area

    def with_control_points(self, cp) -> "PatchMap":
        return PatchMap(self.basis, cp, self.label)


@dataclass(frozen=True, eq=False)
class Profile:
    """Normalized gap profile ``zeta`` on tangential coordinates in [0, 1]^(d-1)."""

    name: str
    dim: int
    value: object
    gradient: object

    def w1inf(self, samples: int = 201) -> float:
        """``max(sup|zeta|, sup|grad zeta|)`` estimated on a sample grid."""
        t = np.array(list(itertools.product(np.linspace(0, 1, samples), repeat=self.dim - 1)))
        return float(max(np.abs(self.value(t)).max(),
                         np.linalg.norm(self.gradient(t), axis=1).max()))


def _parabola(t):
    s = t[:, 0]
    return 4.0 * s * (1.0 - s)


def _parabola_grad(t):
    return (4.0 - 8.0 * t[:, 0])[:, None]


def _bump(t):
    a, b = t[:, 0], t[:, 1]
    return 16.0 * a * (1 - a) * b * (1 - b)


def _bump_grad(t):
    a, b = t[:, 0], t[:, 1]
    return np.column_stack([16.0 * (1 - 2 * a) * b * (1 - b), 16.0 * a * (1 - a) * (1 - 2 * b)])


PROFILES = {
    "parabola": Profile("parabola", 2, _parabola, _parabola_grad),
    "bump": Profile("bump", 3, _bump, _bump_grad),
}


def default_profile(dim: int) -> Profile:
    return PROFILES["parabola"] if dim == 2 else PROFILES["bump"]


@dataclass(frozen=True, eq=False)
class GapInterface:
    """Uni-directional assignment between the gap faces.

    ``x_r = x_l + d_g * zeta(t(x_l)) * n`` where ``n`` is the unit vector along
    ``axis`` and ``t`` are the remaining (tangential) coordinates. ``split`` is
    the fraction of the gap carved out of the left patch.
    """

    dg: float
    profile: Profile
    split: float = 0.0
    axis: int = 0
    lam: float = float("nan")

    def __post_init__(self):
        if not self.dg >= 0:
            raise ValueError("gap distance must be non-negative")
        if not 0.0 <= self.split <= 1.0:
            raise ValueError("split must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return self.profile.dim

    @property
    def normal(self) -> np.ndarray:
        """Unit normal of the left face towards the gap."""
        n = np.zeros(self.dim)
        n[self.axis] = 1.0
        return n

    def tangential(self, x):
        return np.delete(np.atleast_2d(x), self.axis, axis=1)

    def offset(self, x):
        """``d_g * zeta`` at the tangential coordinates of ``x``."""
        return self.dg * self.profile.value(self.tangential(x))

    def gap_map(self, x_l):
        x_l = np.asarray(x_l, dtype=float)
        pts = np.atleast_2d(x_l)
        out = pts + self.offset(pts)[:, None] * self.normal[None, :]
        return out.reshape(x_l.shape)

    def gap_project(self, x_r):
        x_r = np.asarray(x_r, dtype=float)
        pts = np.atleast_2d(x_r)
        out = pts - self.offset(pts)[:, None] * self.normal[None, :]
        return out.reshape(x_r.shape)

    def gap_map_jacobian(self, x_l):
        """Jacobian ``I + d_g n (grad zeta)^T`` of the face map (tangential gradient)."""
        pts = np.atleast_2d(np.asarray(x_l, dtype=float))
        d = self.dim
        g = np.zeros((pts.shape[0], d))
        g[:, [j for j in range(d) if j != self.axis]] = self.profile.gradient(self.tangential(pts))
        return np.eye(d)[None] + self.dg * self.normal[None, :, None] * g[:, None, :]

    def gap_distance(self, left: PatchMap | None = None, samples: int = 101) -> float:
        """Largest ``|x_r - x_l|`` over a face sample of ``samples^(d-1)`` points."""
        t = np.array(list(itertools.product(np.linspace(0, 1, samples), repeat=self.dim - 1)))
        if left is not None:
            x_l = left.map_point(face_to_volume(t, *GAP_FACE["left"]))
        else:
            x_l = np.insert(t, self.axis, 0.0, axis=1)
        return float(np.max(np.linalg.norm(self.gap_map(x_l) - x_l, axis=1)))


@dataclass(frozen=True, eq=False)
class MultiPatchDomain:
    """Left patch, right patch and the gap between them.

    ``dirichlet`` lists the outer faces as ``(label, axis, side)``; by default
    every patch face except the two gap faces.
    """

    left: PatchMap
    right: PatchMap
    gap: GapInterface
    dirichlet: tuple = field(default=None)

    def __post_init__(self):
        if self.left.dim != self.right.dim or self.left.dim != self.gap.dim:
            raise ValueError("patch and gap dimensions differ")
        if self.dirichlet is None:
            faces = []
            for label in ("left", "right"):
                for axis in range(self.dim):
                    for side in (0, 1):
                        if (axis, side) != GAP_FACE[label]:
                            faces.append((label, axis, side))
            object.__setattr__(self, "dirichlet", tuple(faces))

    @property
    def dim(self) -> int:
        return self.left.dim

    def patch(self, label: str) -> PatchMap:
        return self.left if label == "left" else self.right

    def outer_faces(self, label: str):
        return [(a, s) for (lab, a, s) in self.dirichlet if lab == label]

    def gap_distance(self, samples: int = 101) -> float:
        return self.gap.gap_distance(self.left, samples)

    def face_geometry(self, side: str, face_param):
        """Point, unit normal towards the gap, and surface Jacobian on a gap face.

        ``face_param`` are parameters of the left gap face. For ``side='l'`` the
        Jacobian is the physical surface factor of the left face. For
        ``side='r'`` the right face is parametrized over the left one through
        the gap map, and the Jacobian is the ratio of right to left surface
        measure (``sqrt(1 + d_g^2 |grad zeta|^2)`` for a flat left face).
        """
        xh = face_to_volume(face_param, *GAP_FACE["left"])
        x_l, n_l, area_l = self.left.face_frame(xh, *GAP_FACE["left"])
        if side == "l":
            return x_l, n_l, area_l
        if side != "r":
            raise ValueError("side must be 'l' or 'r'")
        _, jac = self.left.evaluate(xh)
        others = [j for j in range(self.dim) if j != GAP_FACE["left"][0]]
        tang = np.einsum("nij,njk->nik", self.gap.gap_map_jacobian(x_l), jac[:, :, others])
        n_r, area_r = _unit_normal(tang)
        flip = -np.sign(np.einsum("ni,i->n", n_r, self.gap.normal))
        flip[flip == 0] = 1.0
        return self.gap.gap_map(x_l), n_r * flip[:, None], area_r / area_l

    def check_no_overlap(self, samples: int = 11, tol: float = 1e-10) -> bool:
        """True if no sampled point of either patch lies strictly inside the other."""
        g = np.linspace(0, 1, samples)
        xh = np.array(list(itertools.product(g, repeat=self.dim)))
        for a, b in ((self.left, self.right), (self.right, self.left)):
            pts = a.map_point(xh)
            yh, res = b.locate(pts)
            inside = (res <= tol) & np.all((yh > tol) & (yh < 1 - tol), axis=1)
            if inside.any():
                return False
        return True


def profile_coefficients(kvs, profile: Profile) -> np.ndarray:
    """B-spline coefficients of ``profile`` on the face basis by Greville interpolation.

    Returned with shape ``(n_{d-1}, ..., n_1)`` (direction 1 fastest when raveled).
    """
    grev = [kv.greville for kv in kvs]
    mats = []
    for kv, g in zip(kvs, grev):
        M = np.zeros((kv.n, kv.n))
        for i, x in enumerate(g):
            first, v = eval_basis(kv, x)
            M[i, first:first + kv.degree + 1] = v
        mats.append(M)
    pts = np.array([c[::-1] for c in itertools.product(*grev[::-1])])
    vals = profile.value(pts).reshape(tuple(kv.n for kv in reversed(kvs)))
    coef = vals
    for j, M in enumerate(mats):
        ax = coef.ndim - 1 - j
        coef = np.moveaxis(np.linalg.solve(M, np.moveaxis(coef, ax, 0).reshape(M.shape[0], -1))
                           .reshape(np.moveaxis(coef, ax, 0).shape), 0, ax)
    coef[np.abs(coef) < 1e-14] = 0.0
    return coef


def displace_face(patch: PatchMap, axis: int, side: int, amount: float, profile: Profile) -> PatchMap:
    """Move the control points of face ``(axis, side)`` by ``amount * zeta`` along ``axis``."""
    kvs = [kv for j, kv in enumerate(patch.basis.kvs) if j != axis]
    coef = profile_coefficients(kvs, profile)
    grid = patch.grid().copy()
    gax = patch.dim - 1 - axis
    sl = [slice(None)] * patch.dim
    sl[gax] = 0 if side == 0 else -1
    grid[tuple(sl) + (axis,)] += amount * coef
    return patch.with_control_points(grid.reshape(-1, patch.dim))


def make_gap_domain(left: PatchMap, right: PatchMap, dg: float, split: float = 0.0,
                    profile: Profile | None = None, lam: float = float("nan")) -> MultiPatchDomain:
    """Open a gap of size ``dg`` between two patches that match along ``x_1``.

    The right gap face is pushed by ``(1 - split) * dg * zeta`` and the left one
    pulled back by ``split * dg * zeta``.
    """
    profile = profile or default_profile(left.dim)
    if dg > 0:
        if split < 1:
            right = displace_face(right, 0, 0, (1 - split) * dg, profile)
        if split > 0:
            left = displace_face(left, 0, 1, -split * dg, profile)
    return MultiPatchDomain(left, right, GapInterface(dg, profile, split, 0, lam))


# -- geometry file format -----------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_geometry(path, domain: MultiPatchDomain) -> None:
    """Write ``domain`` in the plain-text geometry format (bit-exact floats)."""
    degrees = {kv.degree for p in (domain.left, domain.right) for kv in p.basis.kvs}
    if len(degrees) != 1:
        raise ValueError("geometry format requires a single degree")
    lines = [f"dim {domain.dim} degree {degrees.pop()}"]
    for p in (domain.left, domain.right):
        for kv in p.basis.kvs:
            lines.append(" ".join(_fmt(t) for t in kv.knots))
        lines.append(str(p.control_points.shape[0]))
        lines.extend(" ".join(_fmt(c) for c in row) for row in p.control_points)
    g = domain.gap
    lines.append(f"dg {_fmt(g.dg)} lambda {_fmt(g.lam)} split {_fmt(g.split)} profile {g.profile.name}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_geometry(path) -> MultiPatchDomain:
    """Read a domain written by :func:`write_geometry`.

    The stored control nets already contain the gap displacement.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    head = lines[0].split()
    if len(head) != 4 or head[0] != "dim" or head[2] != "degree":
        raise ValueError("bad geometry header")
    d, k = int(head[1]), int(head[3])
    pos = 1
    patches = []
    for label in ("left", "right"):
        kvs = [KnotVector(k, [float(t) for t in lines[pos + i].split()]) for i in range(d)]
        pos += d
        count = int(lines[pos])
        pos += 1
        cp = np.array([[float(c) for c in lines[pos + i].split()] for i in range(count)])
        pos += count
        patches.append(PatchMap(TensorBasis(kvs), cp.reshape(count, d), label))
    tok = lines[pos].split()
    fields = dict(zip(tok[0::2], tok[1::2]))
    if set(fields) != {"dg", "lambda", "split", "profile"}:
        raise ValueError("bad gap block")
    profile = PROFILES[fields["profile"]]
    gap = GapInterface(float(fields["dg"]), profile, float(fields["split"]), 0, float(fields["lambda"]))
    return MultiPatchDomain(patches[0], patches[1], gap)


def same_geometry(a: MultiPatchDomain, b: MultiPatchDomain) -> bool:
    """Bit-exact comparison of two domains."""
    for p, q in ((a.left, b.left), (a.right, b.right)):
        if [kv.knots for kv in p.basis.kvs] != [kv.knots for kv in q.basis.kvs]:
            return False
        if p.control_points.shape != q.control_points.shape or not np.array_equal(
                p.control_points, q.control_points):
            return False
    ga, gb = a.gap, b.gap
    same_lam = ga.lam == gb.lam or (math.isnan(ga.lam) and math.isnan(gb.lam))
    return ga.dg == gb.dg and ga.split == gb.split and ga.profile.name == gb.profile.name and same_lam
