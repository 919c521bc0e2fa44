"""Univariate and tensor-product B-spline bases.

Evaluation is vectorized over points: every routine accepts an array of
parameter values and returns one row per point. Basis functions of a
:class:`TensorBasis` are numbered lexicographically with direction 1 running
fastest.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class SplineDomainError(ValueError):
    """Raised when a parameter value lies outside [0, 1]."""


@dataclass(frozen=True)
class KnotVector:
    """Open knot vector on [0, 1].

    Parameters
    ----------
    degree : int
        Polynomial degree ``k``.
    knots : sequence of float
        Non-decreasing knots; 0 and 1 must each appear ``k+1`` times.
    """

    degree: int
    knots: tuple

    def __post_init__(self):
        kn = tuple(float(t) for t in self.knots)
        object.__setattr__(self, "knots", kn)
        k = self.degree
        if k < 0:
            raise ValueError("degree must be non-negative")
        t = np.asarray(kn)
        if np.any(np.diff(t) < 0):
            raise ValueError("knots must be non-decreasing")
        if len(t) < 2 * (k + 1) or np.any(t[: k + 1] != 0.0) or np.any(t[-k - 1:] != 1.0):
            raise ValueError("knot vector must be open on [0, 1]")
        if t[k + 1] == 0.0 or t[-k - 2] == 1.0:
            raise ValueError("end knots must have multiplicity exactly k+1")
        _, counts = np.unique(t[k + 1: len(t) - k - 1], return_counts=True)
        if counts.size and counts.max() > k + 1:
            raise ValueError("interior knot multiplicity exceeds k+1")

    @classmethod
    def uniform(cls, degree, nspans, interior_mult=1):
        """Open knot vector with ``nspans`` equal spans."""
        inner = np.repeat(np.linspace(0, 1, nspans + 1)[1:-1], interior_mult)
        return cls(degree, [0.0] * (degree + 1) + list(inner) + [1.0] * (degree + 1))

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.knots)

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.array)

    @cached_property
    def spans(self) -> np.ndarray:
        """Nonempty knot spans as an ``(m, 2)`` array of ``[lo, hi]``."""
        b = self.breakpoints
        return np.column_stack([b[:-1], b[1:]])

    @property
    def mesh_size(self) -> float:
        return float(np.max(self.spans[:, 1] - self.spans[:, 0]))

    @cached_property
    def greville(self) -> np.ndarray:
        k = self.degree
        if k == 0:
            return 0.5 * (self.array[:-1] + self.array[1:])
        t = self.array
        return np.array([t[i + 1: i + k + 1].mean() for i in range(self.n)])

    def find_span(self, x) -> np.ndarray:
        """Index ``s`` with ``t[s] <= x < t[s+1]`` (left limit at ``x = 1``)."""
        x = np.asarray(x, dtype=float)
        s = np.searchsorted(self.array, x, side="right") - 1
        return np.clip(s, self.degree, self.n - 1)


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise SplineDomainError("parameter outside [0, 1]")
    return x


def _basis_ders(t, k, span, x, nd):
    """Nonzero basis values and derivatives (The NURBS Book, A2.3), vectorized.

    Returns an array of shape ``(N, nd+1, k+1)``.
    """
    N = x.shape[0]
    ndu = np.zeros((N, k + 1, k + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((N, k + 1))
    right = np.zeros((N, k + 1))
    for j in range(1, k + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(N)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((N, nd + 1, k + 1))
    ders[:, 0, :] = ndu[:, :, k]
    nk = min(nd, k)
    for r in range(k + 1):
        a = np.zeros((N, 2, k + 1))
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        for kk in range(1, nk + 1):
            d = np.zeros(N)
            rk, pk = r - kk, k - kk
            if r >= kk:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d += a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = kk - 1 if r - 1 <= pk else k - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d += a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, kk] = -a[:, s1, kk - 1] / ndu[:, pk + 1, r]
                d += a[:, s2, kk] * ndu[:, r, pk]
            ders[:, kk, r] = d
            s1, s2 = s2, s1
    fac = k
    for kk in range(1, nk + 1):
        ders[:, kk, :] *= fac
        fac *= k - kk
    return ders


def eval_basis(kv: KnotVector, x):
    """Values of the ``k+1`` basis functions that may be nonzero at ``x``.

    Returns ``(first_index, values)``; for scalar ``x`` these are an int and a
    vector of length ``k+1``, for array input they gain a leading axis.
    """
    first, ders = eval_basis_derivs(kv, x, 0)
    return first, ders[..., 0, :]


def eval_basis_derivs(kv: KnotVector, x, order: int):
    """Basis values and derivatives up to ``order`` (at most 2).

    Returns ``(first_index, ders)`` with ``ders[..., j, a]`` the ``j``-th
    derivative of basis function ``first_index + a``. Rows above the degree
    are zero.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    x = _check_unit(x)
    scalar = x.ndim == 0
    xs = np.atleast_1d(x).ravel()
    span = kv.find_span(xs)
    ders = _basis_ders(kv.array, kv.degree, span, xs, order)
    first = span - kv.degree
    if scalar:
        return int(first[0]), ders[0]
    return first.reshape(x.shape), ders.reshape(x.shape + ders.shape[1:])


def refine_dyadic(kv: KnotVector, levels: int) -> KnotVector:
    """Insert the midpoint of every nonempty span, ``levels`` times."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    for _ in range(levels):
        mids = kv.spans.mean(axis=1)
        kv = KnotVector(kv.degree, np.sort(np.concatenate([kv.array, mids])))
    return kv


def insertion_matrix(coarse: KnotVector, fine: KnotVector) -> np.ndarray:
    """Matrix ``T`` with ``c_fine = T @ c_coarse`` (Boehm knot insertion).

    ``fine`` must contain every knot of ``coarse`` with at least the same
    multiplicity and have the same degree.
    """
    if coarse.degree != fine.degree:
        raise ValueError("degree mismatch")
    k = coarse.degree
    t = list(coarse.knots)
    extra = list(fine.knots)
    for tau in t:
        try:
            extra.remove(tau)
        except ValueError:
            raise ValueError("fine knot vector does not contain the coarse one") from None
    T = np.eye(coarse.n)
    for tau in sorted(extra):
        s = int(np.searchsorted(t, tau, side="right") - 1)
        s = min(max(s, k), len(t) - k - 2)
        n = len(t) - k - 1
        new = np.zeros((n + 1, n))
        for i in range(n + 1):
            if i <= s - k:
                new[i, i] = 1.0
            elif i >= s + 1:
                new[i, i - 1] = 1.0
            else:
                alpha = (tau - t[i]) / (t[i + k] - t[i])
                new[i, i] = alpha
                new[i, i - 1] = 1.0 - alpha
        T = new @ T
        t.insert(s + 1, tau)
    return T


@dataclass(frozen=True)
class TensorBasis:
    """Tensor product of univariate B-spline bases (``d`` = 1, 2 or 3)."""

    kvs: tuple

    def __post_init__(self):
        object.__setattr__(self, "kvs", tuple(self.kvs))
        if not 1 <= len(self.kvs) <= 3:
            raise ValueError("dimension must be 1, 2 or 3")

    @property
    def dim(self) -> int:
        return len(self.kvs)

    @property
    def shape(self) -> tuple:
        return tuple(kv.n for kv in self.kvs)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def nloc(self) -> int:
        return int(np.prod([kv.degree + 1 for kv in self.kvs]))

    @property
    def mesh_size(self) -> float:
        """Largest parametric element diameter."""
        lens = [kv.spans[:, 1] - kv.spans[:, 0] for kv in self.kvs]
        return float(np.sqrt(sum(np.max(w) ** 2 for w in lens)))

    @property
    def num_elements(self) -> int:
        return int(np.prod([len(kv.spans) for kv in self.kvs]))

    def elements(self):
        """Parametric elements as an ``(E, d, 2)`` array, direction 1 fastest."""
        counts = [len(kv.spans) for kv in self.kvs]
        grids = np.meshgrid(*[np.arange(c) for c in reversed(counts)], indexing="ij")
        ids = [g.ravel() for g in reversed(grids)]
        return np.stack([kv.spans[i] for kv, i in zip(self.kvs, ids)], axis=1)

    @property
    def quasi_uniformity(self) -> float:
        """Largest ratio of adjacent span lengths over all directions."""
        theta = 1.0
        for kv in self.kvs:
            w = kv.spans[:, 1] - kv.spans[:, 0]
            if len(w) > 1:
                r = w[1:] / w[:-1]
                theta = max(theta, r.max(), (1 / r).max())
        return float(theta)

    def refine(self, levels: int) -> "TensorBasis":
        return TensorBasis(refine_dyadic(kv, levels) for kv in self.kvs)

    def evaluate(self, points, order: int = 1):
        """Evaluate all locally nonzero basis functions at ``points``.

        Parameters
        ----------
        points : array_like, shape (N, d)
        order : {0, 1}

        Returns
        -------
        idx : ndarray, shape (N, nloc)
            Global (lexicographic) basis indices.
        vals : ndarray, shape (N, nloc)
        grads : ndarray, shape (N, nloc, d)
            Parametric gradients; only returned for ``order=1``.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        firsts, uni = [], []
        for i, kv in enumerate(self.kvs):
            f, ders = eval_basis_derivs(kv, pts[:, i], 1 if order else 0)
            firsts.append(f)
            uni.append(ders)
        N = pts.shape[0]
        idx = np.zeros((N, 1), dtype=np.int64)
        vals = np.ones((N, 1))
        grads = [np.ones((N, 1)) for _ in range(self.dim)] if order else []
        stride = 1
        for i, kv in enumerate(self.kvs):
            loc = firsts[i][:, None] + np.arange(kv.degree + 1)[None, :]
            idx = (stride * loc[:, :, None] + idx[:, None, :]).reshape(N, -1)
            stride *= kv.n
            v = uni[i][:, 0, :]
            if order:
                for j in range(self.dim):
                    w = uni[i][:, 1, :] if j == i else v
                    grads[j] = (w[:, :, None] * grads[j][:, None, :]).reshape(N, -1)
            vals = (v[:, :, None] * vals[:, None, :]).reshape(N, -1)
        if order:
            return idx, vals, np.stack(grads, axis=-1)
        return idx, vals


def tensor_eval(tb: TensorBasis, x, order: int = 1):
    """Single-point convenience wrapper around :meth:`TensorBasis.evaluate`."""
    out = tb.evaluate(np.atleast_2d(x), order)
    return tuple(a[0] for a in out)
