"""Error norms, observed rates and predicted convergence orders."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import GAP_FACE, Discretization, TripletBuffer, _mass
from .quadrature import gauss_rule, map_rule


@dataclass(frozen=True)
class ErrorBreakdown:
    """Squared parts of the dG norm of ``u - u_h`` plus the L2 error."""

    grad_l: float
    grad_r: float
    bdry_l: float
    bdry_r: float
    face_l: float
    face_r: float
    l2_total: float

    @property
    def parts(self) -> tuple:
        return (self.grad_l, self.grad_r, self.bdry_l, self.bdry_r, self.face_l, self.face_r)

    @property
    def dg_total(self) -> float:
        return math.sqrt(math.fsum(self.parts))


def _uh(coef, idx, vals):
    return np.einsum("...a,...a->...", vals, coef[idx])


def _grad_uh(coef, idx, grads):
    return np.einsum("...ad,...a->...d", grads, coef[idx])


def dg_error(disc: Discretization, coef, u, grad, nq_vol=None, nq_face=None) -> ErrorBreakdown:
    """dG-norm parts of ``v = u - u_h``.

    ``u(x, label)`` and ``grad(x, label)`` evaluate the exact solution with
    the branch of patch ``label``; each face uses its own patch's branch.
    Defaults use ``k+2`` points per direction on volumes and ``k+3`` on faces.
    """
    coef = np.asarray(coef, dtype=float)
    k = disc.degree
    nq_vol = nq_vol or k + 2
    nq_face = nq_face or k + 3
    out = {}
    l2 = 0.0
    for sp_ in disc.spaces:
        lab = sp_.label
        rho = disc.coeffs.rho(lab)
        g2 = 0.0
        for idx, vals, grads, x, w in sp_.volume_batches(nq_vol, singular=disc.singular_params(lab)):
            xf = x.reshape(-1, sp_.dim)
            e = u(xf, lab).reshape(w.shape) - _uh(coef, idx[:, None, :], vals)
            ge = grad(xf, lab).reshape(grads.shape[:2] + (-1,)) - _grad_uh(coef, idx[:, None, :], grads)
            g2 += float(np.sum(w * np.sum(ge ** 2, axis=-1)))
            l2 += float(np.sum(w * e ** 2))
        b2 = 0.0
        for axis, side in disc.domain.outer_faces(lab):
            for idx, vals, _, x, _, w in sp_.face_batches(axis, side, nq_face):
                e = u(x.reshape(-1, sp_.dim), lab).reshape(w.shape) - _uh(coef, idx[:, None, :], vals)
                b2 += float(np.sum(w * e ** 2))
        f2 = 0.0
        for idx, vals, _, x, _, w in sp_.face_batches(*GAP_FACE[lab], nq_face):
            e = u(x.reshape(-1, sp_.dim), lab).reshape(w.shape) - _uh(coef, idx[:, None, :], vals)
            f2 += float(np.sum(w * e ** 2))
        s = lab[0]
        out[f"grad_{s}"] = rho * g2
        out[f"bdry_{s}"] = rho / disc.h * b2
        out[f"face_{s}"] = disc.coeffs.face_average(lab) / disc.h * f2
    return ErrorBreakdown(l2_total=math.sqrt(l2), **out)


def observed_rates(errors, hs):
    """Level-to-level rates ``ln(e_i/e_{i+1}) / ln(h_i/h_{i+1})``; NaN where undefined."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if np.any(np.diff(hs) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    rates = []
    for i in range(len(errors) - 1):
        e0, e1 = errors[i], errors[i + 1]
        if e0 > 0 and e1 > 0 and np.isfinite(e0) and np.isfinite(e1):
            rates.append(math.log(e0 / e1) / math.log(hs[i] / hs[i + 1]))
        else:
            rates.append(float("nan"))
    return rates


def asymptotic_rate(rates, count: int = 2) -> float:
    """Mean of the last ``count`` rates."""
    tail = list(rates)[-count:]
    return float(np.mean(tail)) if tail else float("nan")


@dataclass(frozen=True)
class RatePrediction:
    lam: float
    p: float
    d: int
    l: float
    k: int = 2

    def __post_init__(self):
        lo = max(1.0, 2 * self.d / (self.d + 2 * (self.l - 1)))
        if not lo < self.p <= 2:
            raise ValueError(f"p must lie in ({lo:g}, 2]")
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")

    @property
    def gamma(self) -> float:
        return self.d * (self.p - 2) / 2

    @property
    def zeta(self) -> float:
        p, d = self.p, self.d
        return (-2 * (p - 1) + d * (p - 2)) / (2 * p)

    @property
    def beta(self) -> float:
        p, d, lam, z = self.p, self.d, self.lam, self.zeta
        s = (p * (1 - d) + 1) / p
        return min(2 * lam + z - s, lam - 1 + (1 + self.gamma) / p, 1 + z + lam - s)

    @property
    def delta(self) -> float:
        return self.l + self.d / 2 - self.d / self.p - 1

    @property
    def predicted(self) -> float:
        return min(self.beta, min(self.delta, self.k))


def predict_orders(lam, p, d, l, k: int = 2) -> RatePrediction:
    return RatePrediction(float(lam), float(p), int(d), float(l), int(k))


@dataclass
class Row:
    level: int
    h: float
    dg: float
    dg_error: float
    l2_error: float
    rate: float = float("nan")
    predicted_rate: float = float("nan")
    breakdown: ErrorBreakdown | None = field(default=None, repr=False)


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    prediction: RatePrediction | None = None

    def add(self, row: Row) -> None:
        if self.rows and not row.h < self.rows[-1].h:
            raise ValueError("h must be strictly decreasing")
        self.rows.append(row)
        if len(self.rows) > 1:
            prev = self.rows[-2]
            row.rate = observed_rates([prev.dg_error, row.dg_error], [prev.h, row.h])[0]

    @property
    def rates(self) -> list:
        return [r.rate for r in self.rows[1:]]

    @property
    def asymptotic_rate(self) -> float:
        return asymptotic_rate(self.rates)

    def as_records(self) -> list:
        keys = ("level", "h", "dg", "dg_error", "l2_error", "rate", "predicted_rate")
        return [{k: getattr(r, k) for k in keys} for r in self.rows]


def interface_value_gap(domain, u, nel: int = 64, nq: int = 6) -> float:
    """``int_{F_l} |u(x_l) - u(x_r)| dsigma`` on a uniform face mesh."""
    d = domain.dim
    rule = gauss_rule(nq, d - 1)
    g = np.linspace(0, 1, nel + 1)
    boxes = np.array(list(itertools.product(zip(g[:-1], g[1:]), repeat=d - 1)))
    pts, w = map_rule(rule, boxes[:, :, 0], boxes[:, :, 1])
    xh = np.insert(pts.reshape(-1, d - 1), GAP_FACE["left"][0], 1.0, axis=1)
    x_l, _, area = domain.left.face_frame(xh, *GAP_FACE["left"])
    x_r = domain.gap.gap_map(x_l)
    return float(np.sum(w.ravel() * area * np.abs(u(x_l) - u(x_r))))


def projection(disc: Discretization, u, nq=None) -> np.ndarray:
    """Patchwise L2 projection of ``u(x, label)`` onto the spline spaces."""
    nq = nq or disc.degree + 2
    buf = TripletBuffer(disc.dofmap.total)
    rhs = np.zeros(disc.dofmap.total)
    for sp_ in disc.spaces:
        for idx, vals, _, x, w in sp_.volume_batches(nq):
            buf.add(idx, idx, _mass(w, vals, vals))
            ux = u(x.reshape(-1, sp_.dim), sp_.label).reshape(w.shape)
            np.add.at(rhs, idx, np.einsum("eq,eqa->ea", w * ux, vals))
    return spla.spsolve(sp.csc_matrix(buf.tocsr()), rhs)


def orthogonality_defect(A, b, disc: Discretization, u) -> float:
    """``max_a |F_h(phi_a) - B_h(P u, phi_a)|`` with ``P`` the L2 projection."""
    return float(np.max(np.abs(b - A @ projection(disc, u))))


def breakdown_dict(e: ErrorBreakdown) -> dict:
    out = asdict(e)
    out["dg_total"] = e.dg_total
    return out
