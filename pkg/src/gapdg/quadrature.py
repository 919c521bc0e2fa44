"""Tensor Gauss-Legendre rules on [0, 1]^m."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray    # (Q, m) points in the reference cube
    weights: np.ndarray  # (Q,), summing to 1

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self):
        return self.weights.shape[0]


def gauss_rule(n: int, m: int) -> QuadratureRule:
    """``n``-point Gauss-Legendre rule per direction on ``[0, 1]^m``.

    Exact for polynomials of degree ``2n-1`` in each variable. Nodes are
    ordered with direction 1 running fastest. ``m = 0`` gives the single-point
    rule on a point (used for faces of 1D patches).
    """
    if not 1 <= n <= 10:
        raise ValueError("n must be between 1 and 10")
    if m < 0:
        raise ValueError("m must be non-negative")
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if m == 0:
        return QuadratureRule(np.zeros((1, 0)), np.ones(1))
    combos = list(itertools.product(range(n), repeat=m))
    nodes = np.array([[x[c[m - 1 - i]] for i in range(m)] for c in combos])
    weights = np.array([np.prod([w[j] for j in c]) for c in combos])
    return QuadratureRule(nodes, weights)


def map_rule(rule: QuadratureRule, lo, hi):
    """Affinely map ``rule`` onto the boxes ``[lo, hi]``.

    ``lo`` and ``hi`` have shape ``(E, m)``; returns points ``(E, Q, m)`` and
    weights ``(E, Q)`` that include the box measure.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    size = hi - lo
    pts = lo[:, None, :] + size[:, None, :] * rule.nodes[None, :, :]
    w = rule.weights[None, :] * np.prod(size, axis=1)[:, None]
    return pts, w


def element_integrate(rule: QuadratureRule, span, integrand) -> float:
    """Integrate ``integrand`` over the box ``span``.

    ``span`` is a sequence of ``(lo, hi)`` pairs, one per direction, and
    ``integrand`` maps an ``(Q, m)`` array of points to ``Q`` values.
    """
    span = np.asarray(span, dtype=float).reshape(rule.dim, 2)
    if np.any(span[:, 1] <= span[:, 0]):
        raise ValueError("element must have positive measure")
    pts, w = map_rule(rule, span[None, :, 0], span[None, :, 1])
    return float(np.dot(w[0], np.asarray(integrand(pts[0]), dtype=float)))


def graded_rule(rule: QuadratureRule, lo, hi, point, depth: int = 40):
    """Composite rule on the box ``[lo, hi]`` graded towards ``point``.

    The box is bisected in every direction; children whose closure holds
    ``point`` are split again, the others receive ``rule``. After ``depth``
    levels the remaining boxes also receive ``rule``. Suited to integrands
    with an integrable point singularity at or near ``point``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    point = np.clip(np.asarray(point, dtype=float), lo, hi)
    m = lo.shape[0]
    corners = np.array(list(itertools.product((0, 1), repeat=m)))
    done_lo, done_hi = [], []
    boxes = [(lo, hi)]
    for level in range(depth + 1):
        nxt = []
        for a, b in boxes:
            if level == depth:
                done_lo.append(a)
                done_hi.append(b)
                continue
            mid = 0.5 * (a + b)
            for c in corners:
                ca = np.where(c == 0, a, mid)
                cb = np.where(c == 0, mid, b)
                if np.all(point >= ca) and np.all(point <= cb):
                    nxt.append((ca, cb))
                else:
                    done_lo.append(ca)
                    done_hi.append(cb)
        boxes = nxt
    pts, w = map_rule(rule, np.array(done_lo), np.array(done_hi))
    return pts.reshape(-1, m), w.ravel()
