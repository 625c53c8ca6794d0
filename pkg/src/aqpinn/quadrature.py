"""Gaussian rules on segments, triangles and quadrangles, and cell mapping.

Rules are generated, not tabulated: Gauss-Legendre on the segment and (as a
tensor product) on the reference square, and a conical product of
Gauss-Legendre with Gauss-Jacobi(1, 0) on the reference triangle.  Every rule
is exact for all polynomials of total degree <= order on its reference shape
and has strictly positive weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .geometry import ConvexPolygon, Segment1D

__all__ = ["QuadratureRule", "rule", "map_rule", "integrate",
           "MAX_ORDER", "points_per_cell"]

MAX_ORDER = 10

# reference shapes: segment [-1, 1]; unit right triangle (0,0),(1,0),(0,1);
# square [-1, 1]^2
_REF_MEASURE = {"segment": 2.0, "triangle": 0.5, "quadrangle": 4.0}


@dataclass(frozen=True)
class QuadratureRule:
    shape: str
    order: int
    points: np.ndarray   # (n, d) on the reference shape
    weights: np.ndarray  # (n,)


_CACHE: dict[tuple[str, int], QuadratureRule] = {}


def _npts(order: int) -> int:
    # Gauss-Legendre with m points integrates degree 2m - 1
    return (order + 2) // 2


def rule(shape: str, order: int) -> QuadratureRule:
    """Reference rule exact for total degree <= order; weights positive."""
    if shape not in _REF_MEASURE:
        raise ValueError(f"unknown shape {shape!r}")
    if not (isinstance(order, (int, np.integer)) and 1 <= order <= MAX_ORDER):
        raise ValueError(f"order must be an integer in [1, {MAX_ORDER}], "
                         f"got {order!r}")
    key = (shape, int(order))
    if key in _CACHE:
        return _CACHE[key]
    m = _npts(order)
    xg, wg = roots_legendre(m)
    if shape == "segment":
        pts = xg.reshape(-1, 1).copy()
        wts = wg.copy()
    elif shape == "quadrangle":
        X, Y = np.meshgrid(xg, xg)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        wts = np.outer(wg, wg).ravel()
    else:  # triangle, collapsed-coordinate conical product
        u = 0.5 * (xg + 1.0)          # Gauss-Legendre moved to [0, 1]
        wu = 0.5 * wg
        xj, wj = roots_jacobi(m, 1.0, 0.0)
        v = 0.5 * (xj + 1.0)          # Gauss-Jacobi(1,0): weight (1 - v) on [0, 1]
        wv = 0.25 * wj
        U, V = np.meshgrid(u, v)
        WU, WV = np.meshgrid(wu, wv)
        pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
        wts = (WU * WV).ravel()
    r = QuadratureRule(shape=shape, order=int(order), points=pts, weights=wts)
    _CACHE[key] = r
    return r


def points_per_cell(shape: str, order: int) -> int:
    m = _npts(order)
    return m if shape == "segment" else m * m


def _cell_shape(cell) -> str:
    if isinstance(cell, Segment1D):
        return "segment"
    v = cell.vertices if isinstance(cell, ConvexPolygon) else np.asarray(cell)
    if isinstance(v, np.ndarray) and v.ndim == 2 and v.shape == (2, 2):
        return "segment"  # a 2D segment given by its endpoints
    n = len(v)
    if n == 3:
        return "triangle"
    if n == 4:
        return "quadrangle"
    raise ValueError(f"cell with {n} vertices is not quadrature-ready")


def map_rule(r: QuadratureRule, cell):
    """Map a reference rule onto a physical cell.

    Returns (points, weights) with sum(weights) equal to the cell measure
    (triangles and segments use constant-Jacobian affine maps; quadrangles a
    bilinear map with a per-point Jacobian determinant).
    """
    shape = _cell_shape(cell)
    if shape != r.shape:
        raise ValueError(f"rule is for {r.shape!r} but the cell is {shape!r}")
    if shape == "segment":
        if isinstance(cell, Segment1D):
            mid, half = cell.midpoint, 0.5 * cell.length
            pts = (mid + half * r.points[:, 0]).reshape(-1, 1)
            return pts, r.weights * half
        p0, p1 = np.asarray(cell, dtype=float)
        mid, half = 0.5 * (p0 + p1), 0.5 * (p1 - p0)
        norm = float(np.hypot(*half))
        if norm <= 0.0:
            raise ValueError("degenerate (zero-length) segment cell")
        pts = mid[None, :] + r.points[:, :1] * half[None, :]
        return pts, r.weights * norm
    v = cell.vertices if isinstance(cell, ConvexPolygon) else np.asarray(cell, dtype=float)
    if shape == "triangle":
        a, b, c = v
        jac = float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if jac <= 0.0:
            raise ValueError("degenerate or clockwise triangle cell")
        pts = a[None, :] + np.outer(r.points[:, 0], b - a) + np.outer(r.points[:, 1], c - a)
        return pts, r.weights * jac
    # bilinear quadrangle
    A, B, C, D = v
    xi, eta = r.points[:, 0], r.points[:, 1]
    sA, sB = (1 - xi) * (1 - eta), (1 + xi) * (1 - eta)
    sC, sD = (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)
    pts = 0.25 * (np.outer(sA, A) + np.outer(sB, B) + np.outer(sC, C) + np.outer(sD, D))
    dxi = 0.25 * (np.outer(-(1 - eta), A) + np.outer((1 - eta), B)
                  + np.outer((1 + eta), C) + np.outer(-(1 + eta), D))
    deta = 0.25 * (np.outer(-(1 - xi), A) + np.outer(-(1 + xi), B)
                   + np.outer((1 + xi), C) + np.outer((1 - xi), D))
    jac = dxi[:, 0] * deta[:, 1] - dxi[:, 1] * deta[:, 0]
    if np.any(jac <= 0.0):
        raise ValueError("degenerate or non-convex quadrangle cell")
    return pts, r.weights * jac


def integrate(f, cells, order: int) -> float:
    """Integrate a pointwise function over a collection of cells.

    ``cells`` may hold Segment1D, 2D segments (2x2 arrays of endpoints) and
    triangle/quadrangle polygons in any mix; ``f`` must accept an (N, d)
    array and return (N,) values.
    """
    total = 0.0
    for cell in cells:
        r = rule(_cell_shape(cell), order)
        pts, wts = map_rule(r, cell)
        total += float(np.dot(wts, np.asarray(f(pts), dtype=float)))
    return total
