"""Assembly of the non-symmetric dG system on a two-patch domain with a gap.

Each patch carries its own spline space; unknowns are never shared across
patches. The two patches are coupled only through the gap flux, which
evaluates the trace of the opposite patch at the point assigned by the gap map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .geometry import GAP_FACE, DegenerateGeometryError, MultiPatchDomain, PatchMap
from .quadrature import gauss_rule, graded_rule, map_rule
from .splines import TensorBasis

LABELS = ("left", "right")


@dataclass(frozen=True)
class DofMap:
    """Block layout of the global unknowns: left patch first, then right."""

    sizes: tuple

    @property
    def offsets(self) -> tuple:
        return (0, int(self.sizes[0]))

    @property
    def total(self) -> int:
        return int(sum(self.sizes))

    def block(self, label: str) -> slice:
        i = LABELS.index(label)
        return slice(self.offsets[i], self.offsets[i] + self.sizes[i])


@dataclass(frozen=True)
class DiffusionCoefficients:
    rho_l: float
    rho_r: float
    rho_g: float | None = None

    def __post_init__(self):
        if self.rho_g is None:
            object.__setattr__(self, "rho_g", self.rho_r)
        if min(self.rho_l, self.rho_r, self.rho_g) <= 0:
            raise ValueError("diffusion coefficients must be positive")

    def rho(self, label: str) -> float:
        return self.rho_l if label == "left" else self.rho_r

    def face_average(self, label: str) -> float:
        """``{rho}`` on the gap face of patch ``label``."""
        return 0.5 * (self.rho(label) + self.rho_g)


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty scale ``mu`` and a switch for the flux consistency terms."""

    mu: float
    consistency: bool = True

    def __post_init__(self):
        if not self.mu >= 1:
            raise ValueError("penalty scale must be >= 1")

    @classmethod
    def default(cls, degree: int) -> "PenaltyConfig":
        return cls(2.0 * (degree + 1) ** 2)


@dataclass(frozen=True, eq=False)
class PatchSpace:
    """Spline space of one patch on top of its geometry map."""

    geometry: PatchMap
    basis: TensorBasis
    offset: int = 0

    @property
    def label(self) -> str:
        return self.geometry.label

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def degree(self) -> int:
        return max(kv.degree for kv in self.basis.kvs)

    def evaluate(self, xh):
        """Basis data at parametric points.

        Returns physical points, global indices ``(N, nloc)``, values,
        physical gradients ``(N, nloc, d)`` and Jacobian determinants.
        """
        xh = np.atleast_2d(np.asarray(xh, dtype=float))
        x, jac = self.geometry.evaluate(xh)
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise DegenerateGeometryError(f"non-positive Jacobian determinant in {self.label} patch")
        idx, vals, grads = self.basis.evaluate(xh, 1)
        phys = grads @ np.linalg.inv(jac)
        return x, idx + self.offset, vals, phys, det

    def volume_batches(self, nq: int, chunk: int = 2048, singular=()):
        """Element batches ``(idx, vals, grads, x, w)`` with ``w`` including ``|det|``.

        Elements whose closure holds one of the parametric points ``singular``
        get a rule graded towards that point, one element per batch.
        """
        rule = gauss_rule(nq, self.dim)
        els = self.basis.elements()
        Q = len(rule)
        special = {}
        for p in singular:
            hit = np.all((els[:, :, 0] <= p + 1e-14) & (els[:, :, 1] >= p - 1e-14), axis=1)
            for i in np.flatnonzero(hit):
                special.setdefault(int(i), p)
        if special:
            keep = np.ones(len(els), dtype=bool)
            keep[list(special)] = False
            els_special = [(els[i], special[i]) for i in sorted(special)]
            els = els[keep]
        else:
            els_special = []
        for box, p in els_special:
            pts, w = graded_rule(rule, box[:, 0], box[:, 1], p)
            x, idx, vals, grads, det = self.evaluate(pts)
            yield idx[:1], vals[None], grads[None], x[None], (w * det)[None]
        for s in range(0, len(els), chunk):
            e = els[s:s + chunk]
            pts, w = map_rule(rule, e[:, :, 0], e[:, :, 1])
            E = e.shape[0]
            x, idx, vals, grads, det = self.evaluate(pts.reshape(-1, self.dim))
            yield (idx.reshape(E, Q, -1)[:, 0], vals.reshape(E, Q, -1),
                   grads.reshape(E, Q, -1, self.dim), x.reshape(E, Q, -1), w * det.reshape(E, Q))

    def face_batches(self, axis: int, side: int, nq: int):
        """Face element batches ``(idx, vals, grads, x, n, w)`` on face ``(axis, side)``.

        ``n`` is the outward unit normal and ``w`` includes the physical
        surface measure.
        """
        d = self.dim
        rule = gauss_rule(nq, d - 1)
        others = [j for j in range(d) if j != axis]
        face = TensorBasis([self.basis.kvs[j] for j in others]) if d > 1 else None
        els = face.elements() if face is not None else np.zeros((1, 0, 2))
        pts, w = map_rule(rule, els[:, :, 0], els[:, :, 1])
        E, Q = w.shape
        xh = np.insert(pts.reshape(E * Q, d - 1), axis, float(side), axis=1)
        _, idx, vals, grads, _ = self.evaluate(xh)
        x, n, area = self.geometry.face_frame(xh, axis, side)
        yield (idx.reshape(E, Q, -1)[:, 0], vals.reshape(E, Q, -1), grads.reshape(E, Q, -1, d),
               x.reshape(E, Q, d), n.reshape(E, Q, d), w * area.reshape(E, Q))


@dataclass(frozen=True, eq=False)
class Discretization:
    """Domain, per-patch spaces, coefficients and the global mesh size ``h``."""

    domain: MultiPatchDomain
    spaces: tuple
    coeffs: DiffusionCoefficients
    h: float
    singular_points: tuple = ()
    dofmap: DofMap = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dofmap", DofMap(tuple(s.basis.size for s in self.spaces)))

    @classmethod
    def build(cls, domain: MultiPatchDomain, bases, coeffs: DiffusionCoefficients, h=None,
              singular_points=()):
        """``singular_points`` are physical points where data may be singular."""
        left = PatchSpace(domain.left, bases[0], 0)
        right = PatchSpace(domain.right, bases[1], bases[0].size)
        if h is None:
            h = max(bases[0].mesh_size, bases[1].mesh_size)
        return cls(domain, (left, right), coeffs, float(h), tuple(singular_points))

    def space(self, label: str) -> PatchSpace:
        return self.spaces[LABELS.index(label)]

    def singular_params(self, label: str) -> list:
        """Parametric points of ``label`` nearest to singular points within ``2h``."""
        out = []
        geo = self.space(label).geometry
        for p in self.singular_points:
            xh, res = geo.locate(np.asarray(p, dtype=float)[None])
            if res[0] <= 2 * self.h:
                out.append(xh[0])
        return out

    @property
    def degree(self) -> int:
        return max(s.degree for s in self.spaces)

    @property
    def default_quad(self) -> int:
        return self.degree + 2


class TripletBuffer:
    """Accumulates dense local blocks and finalizes to CSR with summed duplicates."""

    def __init__(self, n: int):
        self.n = n
        self._rows, self._cols, self._vals = [], [], []

    def add(self, rows, cols, vals):
        """Add blocks ``vals[b, i, j]`` at ``(rows[b, i], cols[b, j])``."""
        vals = np.asarray(vals)
        self._rows.append(np.broadcast_to(rows[:, :, None], vals.shape).astype(np.int32).ravel())
        self._cols.append(np.broadcast_to(cols[:, None, :], vals.shape).astype(np.int32).ravel())
        self._vals.append(vals.ravel())

    def tocsr(self) -> sp.csr_matrix:
        if self._rows:
            r, c, v = (np.concatenate(a) for a in (self._rows, self._cols, self._vals))
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        A = sp.coo_matrix((v, (r, c)), shape=(self.n, self.n)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A


def _stiffness(w, grads):
    """Blocks ``sum_q w (grad b_a . grad b_c)`` for batches ``grads`` of shape (E, Q, n, d)."""
    E, Q, n, d = grads.shape
    G = grads.transpose(0, 2, 1, 3).reshape(E, n, Q * d)
    Gw = (grads * w[:, :, None, None]).transpose(0, 2, 1, 3).reshape(E, n, Q * d)
    return Gw @ G.transpose(0, 2, 1)


def _mass(w, va, vc):
    """Blocks ``sum_q w va_a vc_c`` for ``va`` (E, Q, n) and ``vc`` (E, Q, m)."""
    return (va * w[:, :, None]).transpose(0, 2, 1) @ vc


def _buffer(disc: Discretization, buf):
    return TripletBuffer(disc.dofmap.total) if buf is None else buf


def assemble_volume(disc: Discretization, nq=None, buf=None, scale=1.0) -> TripletBuffer:
    """Add ``int rho_i grad(b_a) . grad(b_c)`` for both patches."""
    buf = _buffer(disc, buf)
    nq = nq or disc.default_quad
    for sp_ in disc.spaces:
        rho = scale * disc.coeffs.rho(sp_.label)
        for idx, _, grads, _, w in sp_.volume_batches(nq):
            K = rho * _stiffness(w, grads)
            buf.add(idx, idx, K)
    return buf


def assemble_boundary(disc: Discretization, penalty: PenaltyConfig, u_D=None, nq=None, buf=None):
    """Weak Dirichlet terms on the outer faces.

    Adds ``-int rho (grad u . n) phi + mu rho / h int u phi`` to the matrix and
    ``mu rho / h int u_D phi`` to the load. ``u_D(x, label)`` is the boundary
    data; ``None`` means homogeneous data.
    """
    buf = _buffer(disc, buf)
    nq = nq or disc.default_quad
    load = np.zeros(disc.dofmap.total)
    for sp_ in disc.spaces:
        rho = disc.coeffs.rho(sp_.label)
        pen = penalty.mu * rho / disc.h
        for axis, side in disc.domain.outer_faces(sp_.label):
            for idx, vals, grads, x, n, w in sp_.face_batches(axis, side, nq):
                K = pen * _mass(w, vals, vals)
                if penalty.consistency:
                    dn = np.einsum("eqcd,eqd->eqc", grads, n)
                    K -= rho * _mass(w, vals, dn)
                buf.add(idx, idx, K)
                if u_D is not None:
                    g = np.asarray(u_D(x.reshape(-1, sp_.dim), sp_.label)).reshape(w.shape)
                    np.add.at(load, idx, pen * np.einsum("eq,eqa->ea", w * g, vals))
    return buf, load


def opposite_points(disc: Discretization, label: str, x):
    """Parametric points on the opposite patch assigned to gap-face points ``x``."""
    gap = disc.domain.gap
    if label == "left":
        return disc.space("right").geometry.inverse_map(gap.gap_map(x))
    return disc.space("left").geometry.inverse_map(gap.gap_project(x))


def assemble_gap(disc: Discretization, penalty: PenaltyConfig, nq=None, buf=None) -> TripletBuffer:
    """Gap flux on ``F_l`` and ``F_r``.

    On the face of patch ``i`` with outward normal ``n_i`` and opposite patch
    ``j`` evaluated at the assigned point, the test function ``phi_i`` sees
    ``-(rho_i/2 grad u_i + rho_j/2 grad u_j) . n_i + mu {rho}_i / h (u_i - u_j)``.
    """
    buf = _buffer(disc, buf)
    nq = nq or disc.default_quad
    c = disc.coeffs
    for label, other in (("left", "right"), ("right", "left")):
        sp_i, sp_j = disc.space(label), disc.space(other)
        pen = penalty.mu * c.face_average(label) / disc.h
        for idx, vals, grads, x, n, w in sp_i.face_batches(*GAP_FACE[label], nq):
            E, Q, nl = vals.shape
            xj = opposite_points(disc, label, x.reshape(E * Q, -1))
            _, idx_j, vals_j, grads_j, _ = sp_j.evaluate(xj)
            # own-side block, per element
            K = pen * _mass(w, vals, vals)
            if penalty.consistency:
                dn = np.einsum("eqcd,eqd->eqc", grads, n)
                K -= 0.5 * c.rho(label) * _mass(w, vals, dn)
            buf.add(idx, idx, K)
            # cross block, per quadrature point since the opposite support varies
            wf = w.reshape(-1)
            vf = vals.reshape(E * Q, nl)
            Kx = -pen * wf[:, None, None] * vf[:, :, None] * vals_j[:, None, :]
            if penalty.consistency:
                dn_j = np.einsum("ncd,nd->nc", grads_j, n.reshape(E * Q, -1))
                Kx -= 0.5 * c.rho(other) * wf[:, None, None] * vf[:, :, None] * dn_j[:, None, :]
            buf.add(np.repeat(idx, Q, axis=0), idx_j, Kx)
    return buf


def assemble_rhs(disc: Discretization, f, nq=None) -> np.ndarray:
    """Load vector ``int f phi`` with ``f(x, label)``."""
    nq = nq or disc.default_quad
    b = np.zeros(disc.dofmap.total)
    for sp_ in disc.spaces:
        for idx, vals, _, x, w in sp_.volume_batches(nq, singular=disc.singular_params(sp_.label)):
            fx = np.asarray(f(x.reshape(-1, sp_.dim), sp_.label)).reshape(w.shape)
            np.add.at(b, idx, np.einsum("eq,eqa->ea", w * fx, vals))
    return b


def assemble_system(disc: Discretization, f, u_D, penalty: PenaltyConfig, nq=None):
    """Matrix ``B_h`` in CSR form and load vector ``F_h``."""
    buf = assemble_volume(disc, nq)
    buf, load = assemble_boundary(disc, penalty, u_D, nq, buf)
    assemble_gap(disc, penalty, nq, buf)
    A = buf.tocsr()
    b = load + (assemble_rhs(disc, f, nq) if f is not None else 0.0)
    return A, b


def dg_norm_matrix(disc: Discretization, nq=None) -> sp.csr_matrix:
    """Gram matrix ``M`` with ``v^T M v = ||v||_dG^2`` for discrete ``v``."""
    nq = nq or disc.default_quad
    buf = assemble_volume(disc, nq)
    for sp_ in disc.spaces:
        faces = [(a, s, disc.coeffs.rho(sp_.label)) for a, s in disc.domain.outer_faces(sp_.label)]
        faces.append(GAP_FACE[sp_.label] + (disc.coeffs.face_average(sp_.label),))
        for axis, side, rho in faces:
            for idx, vals, _, _, _, w in sp_.face_batches(axis, side, nq):
                buf.add(idx, idx, rho / disc.h * _mass(w, vals, vals))
    return buf.tocsr()


def write_matrix_market(path, A, comment: str = "") -> None:
    """Dump ``A`` in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="real", precision=17)
