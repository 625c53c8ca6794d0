"""Poisson energies, manufactured solutions, sampling and the error metric.

Two loss functionals are supported on either integration backend:

* strong residual      J(u) = 1/2 ||lap u + f||^2_D + beta/2 ||u - g||^2_B
* Nitsche weak energy  J(u) = 1/2 a(u, u) - l(u) with
  a(u, v) = <grad u, grad v>_D - <grad u . n, v>_B - <u, grad v . n>_B
            + beta <u, v>_B
  l(v)    = <f, v>_D - <g, grad v . n>_B + beta <g, v>_B

Integrals are evaluated on an explicit point set (adaptive quadrature points
or Monte-Carlo samples); in 1D the boundary terms are plain sums over the
two endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import ConvexPolygon, Segment1D, ear_clip
from .mesh import (AdaptedMesh, BoundaryPoint, BoundarySegment, ConvexDomain,
                   adaptive_mesh, merge_small_cells, quadrature_ready_cells)
from .net import NetworkParams, Var, forward_jet_batch, forward_value, weighted_sum
from .quadrature import map_rule, rule

__all__ = [
    "ExactSolution",
    "PoissonProblem",
    "PointSet",
    "strong_energy",
    "weak_energy",
    "strong_energy_var",
    "weak_energy_var",
    "mc_sample",
    "manufactured",
    "problem_from_expressions",
    "relative_l2_error",
    "two_rhombi",
    "default_beta",
    "AQBackend",
    "MCBackend",
    "make_backend",
    "PROBLEM_IDS",
]


@dataclass(frozen=True)
class ExactSolution:
    value: Callable
    gradient: Callable
    laplacian: Callable


@dataclass(frozen=True)
class PoissonProblem:
    name: str
    formulation: str              # "strong" | "weak"
    domain: ConvexDomain
    forcing: Callable             # f = -lap(u_exact) when manufactured
    boundary_data: Callable       # g = u_exact on the boundary
    beta: float
    exact: ExactSolution | None = None
    activation_name: str = "abse"

    def __post_init__(self):
        if self.formulation not in ("strong", "weak"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def default_beta(formulation: str, dim: int) -> float:
    # unreported in the experiments; repo defaults, configurable
    if formulation == "strong":
        return 100.0
    return 100.0 if dim == 1 else 500.0


@dataclass(frozen=True)
class PointSet:
    """Integration points for one refresh of either backend."""

    domain_points: np.ndarray     # (N, d)
    domain_weights: np.ndarray    # (N,)
    boundary_points: np.ndarray   # (M, d)
    boundary_weights: np.ndarray  # (M,)
    boundary_normals: np.ndarray  # (M, d)

    @property
    def n_domain(self) -> int:
        return len(self.domain_points)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_points)


# ---------------------------------------------------------------------------
# energies (plain values and tape nodes)

def strong_energy_from_fields(lap_dom, value_bnd, problem: PoissonProblem,
                              pts: PointSet) -> float:
    """Strong residual from precomputed jets (any u, not only networks)."""
    f = problem.forcing(pts.domain_points)
    res = float(np.dot(pts.domain_weights, (lap_dom + f) ** 2))
    g = problem.boundary_data(pts.boundary_points)
    bnd = float(np.dot(pts.boundary_weights, (value_bnd - g) ** 2))
    return 0.5 * res + 0.5 * problem.beta * bnd


def weak_energy_from_fields(value_dom, grad_dom, value_bnd, grad_bnd,
                            problem: PoissonProblem, pts: PointSet) -> float:
    """Nitsche energy from precomputed jets (any u, not only networks)."""
    f = problem.forcing(pts.domain_points)
    grad_sq = np.sum(grad_dom * grad_dom, axis=1)
    vol = float(np.dot(pts.domain_weights, 0.5 * grad_sq - f * value_dom))
    gdata = problem.boundary_data(pts.boundary_points)
    un = np.sum(grad_bnd * pts.boundary_normals, axis=1)
    beta = problem.beta
    srf = float(np.dot(pts.boundary_weights,
                       -un * value_bnd + 0.5 * beta * value_bnd * value_bnd
                       + gdata * un - beta * gdata * value_bnd))
    return vol + srf


def strong_energy(params: NetworkParams, problem: PoissonProblem,
                  pts: PointSet) -> float:
    _, _, lap = forward_jet_batch(params, pts.domain_points)
    vb, _, _ = forward_jet_batch(params, pts.boundary_points)
    return strong_energy_from_fields(lap, vb, problem, pts)


def weak_energy(params: NetworkParams, problem: PoissonProblem,
                pts: PointSet) -> float:
    v, g, _ = forward_jet_batch(params, pts.domain_points)
    vb, gbnd, _ = forward_jet_batch(params, pts.boundary_points)
    return weak_energy_from_fields(v, g, vb, gbnd, problem, pts)


def energy(params, problem, pts) -> float:
    fn = strong_energy if problem.formulation == "strong" else weak_energy
    return fn(params, problem, pts)


def strong_energy_var(pv, problem: PoissonProblem, pts: PointSet) -> Var:
    jets = pv.jet(pts.domain_points)
    f = problem.forcing(pts.domain_points)[None, :]
    res = jets.laplacian + Var(f)
    out = 0.5 * weighted_sum(res.square(), pts.domain_weights[None, :])
    bj = pv.value_only(pts.boundary_points)
    gdata = problem.boundary_data(pts.boundary_points)[None, :]
    diff = bj - Var(gdata)
    out = out + 0.5 * problem.beta * weighted_sum(diff.square(),
                                                  pts.boundary_weights[None, :])
    return out


def weak_energy_var(pv, problem: PoissonProblem, pts: PointSet) -> Var:
    jets = pv.jet(pts.domain_points)
    w = pts.domain_weights[None, :]
    grad_sq = jets.gradient[0].square()
    for gj in jets.gradient[1:]:
        grad_sq = grad_sq + gj.square()
    f = problem.forcing(pts.domain_points)[None, :]
    out = 0.5 * weighted_sum(grad_sq, w) - weighted_sum(jets.value * Var(f), w)

    bjets = pv.jet(pts.boundary_points)
    wb = pts.boundary_weights[None, :]
    normals = pts.boundary_normals
    un = bjets.gradient[0] * Var(normals[None, :, 0])
    for j in range(1, normals.shape[1]):
        un = un + bjets.gradient[j] * Var(normals[None, :, j])
    gdata = Var(problem.boundary_data(pts.boundary_points)[None, :])
    beta = problem.beta
    out = out - weighted_sum(un * bjets.value, wb)
    out = out + 0.5 * beta * weighted_sum(bjets.value.square(), wb)
    out = out + weighted_sum(gdata * un, wb)
    out = out - beta * weighted_sum(gdata * bjets.value, wb)
    return out


def energy_var(pv, problem, pts) -> Var:
    fn = (strong_energy_var if problem.formulation == "strong"
          else weak_energy_var)
    return fn(pv, problem, pts)


# ---------------------------------------------------------------------------
# Monte-Carlo sampling

def mc_sample(domain: ConvexDomain, n_domain: int, n_boundary: int,
              rng) -> PointSet:
    """Uniform samples over the domain and its boundary.

    2D domains are triangulated first; a triangle is drawn with probability
    proportional to its area, then a point uniformly inside it.  Boundary
    points are uniform by edge length.  In 1D the boundary reduces to the
    two endpoints (unit weights).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if n_domain < 1:
        raise ValueError("need at least one domain point")
    if domain.dim == 1:
        lengths = np.array([p.length for p in domain.parts])
        total = lengths.sum()
        part = rng.choice(len(lengths), size=n_domain, p=lengths / total)
        lo = np.array([p.lo for p in domain.parts])
        x = lo[part] + rng.uniform(0.0, 1.0, n_domain) * lengths[part]
        pts = x.reshape(-1, 1)
        wts = np.full(n_domain, total / n_domain)
        bnd = domain.boundary_point_regions()
        bp = np.array([b.point for b in bnd])
        bn = np.array([b.normal for b in bnd])
        return PointSet(pts, wts, bp, np.ones(len(bnd)), bn)

    tris = []
    for part in domain.parts:
        tris.extend(t.vertices for t in ear_clip_convex(part))
    areas = np.array([abs(_tri_area(t)) for t in tris])
    total = areas.sum()
    pick = rng.choice(len(tris), size=n_domain, p=areas / total)
    r1 = rng.uniform(size=n_domain)
    r2 = rng.uniform(size=n_domain)
    flip = r1 + r2 > 1.0
    r1[flip] = 1.0 - r1[flip]
    r2[flip] = 1.0 - r2[flip]
    pts = np.empty((n_domain, 2))
    for i, k in enumerate(pick):
        a, b, c = tris[k]
        pts[i] = a + r1[i] * (b - a) + r2[i] * (c - a)
    wts = np.full(n_domain, total / n_domain)

    edges = domain.boundary_edges
    lens = np.array([float(np.hypot(*(p1 - p0))) for p0, p1, _ in edges])
    per = lens.sum()
    pick = rng.choice(len(edges), size=n_boundary, p=lens / per)
    ts = rng.uniform(size=n_boundary)
    bp = np.empty((n_boundary, 2))
    bn = np.empty((n_boundary, 2))
    for i, k in enumerate(pick):
        p0, p1, nrm = edges[k]
        bp[i] = p0 + ts[i] * (p1 - p0)
        bn[i] = nrm
    bw = np.full(n_boundary, per / n_boundary)
    return PointSet(pts, wts, bp, bw, bn)


def ear_clip_convex(poly: ConvexPolygon):
    """Fan triangulation (convex input makes every fan triangle valid)."""
    v = poly.vertices
    return [ConvexPolygon(np.asarray([v[0], v[i], v[i + 1]]))
            for i in range(1, len(v) - 1)]


def _tri_area(t):
    a, b, c = t
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


# ---------------------------------------------------------------------------
# manufactured solutions

def _sinc_family(a: float):
    """value/derivative/second-derivative of x -> sinc(a x), sinc(0) = 1."""

    def val(x):
        return np.sinc(a * np.asarray(x, dtype=float) / np.pi)

    def d1(x):
        s = a * np.asarray(x, dtype=float)
        small = np.abs(s) < 0.5
        s_safe = np.where(small, 1.0, s)
        out = (s_safe * np.cos(s_safe) - np.sin(s_safe)) / s_safe ** 2
        ser = -s / 3.0 + s ** 3 / 30.0 - s ** 5 / 840.0 + s ** 7 / 45360.0
        return a * np.where(small, ser, out)

    def d2(x):
        s = a * np.asarray(x, dtype=float)
        small = np.abs(s) < 0.5
        s_safe = np.where(small, 1.0, s)
        out = ((2.0 - s_safe ** 2) * np.sin(s_safe)
               - 2.0 * s_safe * np.cos(s_safe)) / s_safe ** 3
        ser = -1.0 / 3.0 + s ** 2 / 10.0 - s ** 4 / 168.0 + s ** 6 / 6480.0
        return a * a * np.where(small, ser, out)

    return val, d1, d2


def _tanh_bump(scale: float, radius2: float, dim: int) -> ExactSolution:
    """u = tanh(scale * (|x|^2 - radius2)) in the given dimension."""

    def parts(X):
        X = np.asarray(X, dtype=float)
        r2 = np.sum(X * X, axis=1)
        T = np.tanh(scale * (r2 - radius2))
        sech2 = 1.0 - T * T
        return X, r2, T, sech2

    def val(X):
        _, _, T, _ = parts(X)
        return T

    def grad(X):
        X, _, T, sech2 = parts(X)
        return 2.0 * scale * X * sech2[:, None]

    def lap(X):
        X, r2, T, sech2 = parts(X)
        return (2.0 * scale * dim * sech2
                - 8.0 * scale * scale * r2 * T * sech2)

    return ExactSolution(value=val, gradient=grad, laplacian=lap)


def _sinc_solution_1d(a: float) -> ExactSolution:
    val, d1, d2 = _sinc_family(a)
    return ExactSolution(
        value=lambda X: val(X[:, 0]),
        gradient=lambda X: d1(X[:, 0])[:, None],
        laplacian=lambda X: d2(X[:, 0]),
    )


def _sinc_solution_2d(a: float) -> ExactSolution:
    val, d1, d2 = _sinc_family(a)
    return ExactSolution(
        value=lambda X: val(X[:, 0]) * val(X[:, 1]),
        gradient=lambda X: np.column_stack([d1(X[:, 0]) * val(X[:, 1]),
                                            val(X[:, 0]) * d1(X[:, 1])]),
        laplacian=lambda X: (d2(X[:, 0]) * val(X[:, 1])
                             + val(X[:, 0]) * d2(X[:, 1])),
    )


def two_rhombi() -> ConvexDomain:
    """Union of two unit-side rhombi sharing one edge (non-convex hexagon)."""
    h = math.sqrt(3.0) / 2.0
    upper = [[0.0, 0.0], [1.0, 0.0], [1.5, h], [0.5, h]]
    lower = [[0.0, 0.0], [0.5, -h], [1.5, -h], [1.0, 0.0]]
    return ConvexDomain.from_polygons([upper, lower])


PROBLEM_IDS = ("abse-sinc-1d", "abse-sinc-2d", "tanh-ring-1d",
               "tanh-ring-2d", "rhombi")


def manufactured(problem_id: str, formulation: str = "weak",
                 beta: float | None = None) -> PoissonProblem:
    """Catalogue problem with analytic solution data (except 'rhombi').

    The catalogue functions are taken as exact solutions; forcing and
    boundary data follow as f = -lap(u) and g = u restricted to the boundary.
    """
    if problem_id == "abse-sinc-1d":
        exact = _sinc_solution_1d(3.0 * math.pi)
        domain = ConvexDomain.interval(-1.0, 1.0)
        act = "abse"
    elif problem_id == "abse-sinc-2d":
        exact = _sinc_solution_2d(2.0 * math.pi)
        domain = ConvexDomain.box()
        act = "abse"
    elif problem_id == "tanh-ring-1d":
        exact = _tanh_bump(10.0, 0.25, dim=1)
        domain = ConvexDomain.interval(-1.0, 1.0)
        act = "tanh"
    elif problem_id == "tanh-ring-2d":
        exact = _tanh_bump(10.0, 0.25, dim=2)
        domain = ConvexDomain.box()
        act = "tanh"
    elif problem_id == "rhombi":
        domain = two_rhombi()
        b = default_beta(formulation, 2) if beta is None else beta
        return PoissonProblem(
            name=problem_id, formulation=formulation, domain=domain,
            forcing=lambda X: X[:, 0] + X[:, 1],
            boundary_data=lambda X: np.zeros(len(X)),
            beta=b, exact=None, activation_name="abse")
    else:
        raise ValueError(f"unknown problem id {problem_id!r}; "
                         f"known: {PROBLEM_IDS}")
    b = default_beta(formulation, domain.dim) if beta is None else beta
    return PoissonProblem(
        name=problem_id, formulation=formulation, domain=domain,
        forcing=lambda X: -exact.laplacian(X),
        boundary_data=exact.value,
        beta=b, exact=exact, activation_name=act)


def problem_from_expressions(domain: ConvexDomain, formulation: str,
                             u_expr: str | None = None,
                             f_expr: str | None = None,
                             g_expr: str | None = None,
                             beta: float | None = None,
                             name: str = "custom") -> PoissonProblem:
    """Define a problem from sympy expression strings in x (and y in 2D).

    Either ``u_expr`` (manufactured solution, differentiated symbolically) or
    the pair ``f_expr``/``g_expr`` must be given; without an exact solution
    the relative L2 metric is unavailable.
    """
    import sympy as sp

    syms = sp.symbols("x y")[: domain.dim]

    def lamb(expr):
        fn = sp.lambdify(syms, expr, modules="numpy")

        def wrapped(X):
            X = np.asarray(X, dtype=float)
            out = fn(*[X[:, j] for j in range(domain.dim)])
            return np.broadcast_to(np.asarray(out, dtype=float), (len(X),)).copy()

        return wrapped

    b = default_beta(formulation, domain.dim) if beta is None else beta
    if u_expr is not None:
        u = sp.sympify(u_expr)
        grads = [sp.diff(u, s) for s in syms]
        lap = sum(sp.diff(u, s, 2) for s in syms)
        gvec = [lamb(gexpr) for gexpr in grads]
        exact = ExactSolution(
            value=lamb(u),
            gradient=lambda X, gvec=gvec: np.column_stack([gg(X) for gg in gvec]),
            laplacian=lamb(lap),
        )
        return PoissonProblem(name=name, formulation=formulation,
                              domain=domain, forcing=lamb(-lap),
                              boundary_data=exact.value, beta=b, exact=exact)
    if f_expr is None or g_expr is None:
        raise ValueError("need u_expr, or both f_expr and g_expr")
    return PoissonProblem(name=name, formulation=formulation, domain=domain,
                          forcing=lamb(sp.sympify(f_expr)),
                          boundary_data=lamb(sp.sympify(g_expr)),
                          beta=b, exact=None)


# ---------------------------------------------------------------------------
# error metric

_EVAL_CELLS_1D = 100
_EVAL_GRID_2D = 100
_EVAL_ORDER = 10


def _evaluation_points(domain: ConvexDomain):
    r = rule("segment", _EVAL_ORDER)
    if domain.dim == 1:
        lo = min(p.lo for p in domain.parts)
        hi = max(p.hi for p in domain.parts)
        edges = np.linspace(lo, hi, _EVAL_CELLS_1D + 1)
        pts, wts = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            p, w = map_rule(r, Segment1D(a, b))
            pts.append(p)
            wts.append(w)
        return np.vstack(pts), np.concatenate(wts)
    rq = rule("quadrangle", _EVAL_ORDER)
    all_v = np.vstack([p.vertices for p in domain.parts])
    lo, hi = all_v.min(axis=0), all_v.max(axis=0)
    xs = np.linspace(lo[0], hi[0], _EVAL_GRID_2D + 1)
    ys = np.linspace(lo[1], hi[1], _EVAL_GRID_2D + 1)
    pts, wts = [], []
    for i in range(_EVAL_GRID_2D):
        for j in range(_EVAL_GRID_2D):
            cell = ConvexPolygon([[xs[i], ys[j]], [xs[i + 1], ys[j]],
                                  [xs[i + 1], ys[j + 1]], [xs[i], ys[j + 1]]])
            p, w = map_rule(rq, cell)
            pts.append(p)
            wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


_EVAL_CACHE: dict = {}


def _cached_evaluation_points(domain: ConvexDomain):
    key = (domain.dim, tuple(np.asarray(
        [p.length] if domain.dim == 1 else p.vertices.ravel()).tobytes()
        for p in domain.parts))
    if key not in _EVAL_CACHE:
        _EVAL_CACHE[key] = _evaluation_points(domain)
    return _EVAL_CACHE[key]


def relative_l2_error(u, problem: PoissonProblem) -> float:
    """Relative L2 distance to the exact solution on a fixed uniform mesh.

    Independent of the training backend: order 10 on 100 uniform cells in 1D
    and on a 100 x 100 grid in 2D.
    """
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution; "
                         "the relative L2 metric is unavailable")
    pts, wts = _cached_evaluation_points(problem.domain)
    uv = forward_value(u, pts) if isinstance(u, NetworkParams) else \
        np.asarray(u(pts), dtype=float)
    ev = problem.exact.value(pts)
    num = float(np.dot(wts, (ev - uv) ** 2))
    den = float(np.dot(wts, ev * ev))
    return math.sqrt(num / den)


# ---------------------------------------------------------------------------
# integration backends

class AQBackend:
    """Adaptive quadrature on the linear-region mesh of the surrogate."""

    kind = "AQ"

    def __init__(self, problem: PoissonProblem, surrogate, order: int,
                 merge_threshold: float = 0.0, refresh_every: int = 10):
        self.problem = problem
        self.surrogate = surrogate
        self.order = int(order)
        self.merge_threshold = float(merge_threshold)
        self.refresh_every = int(refresh_every)
        self.counts: list[tuple[int, int]] = []
        self.last_mesh: AdaptedMesh | None = None

    def refresh(self, params: NetworkParams, epoch: int | None = None) -> PointSet:
        mesh = adaptive_mesh(params, self.surrogate, self.problem.domain,
                             epoch=epoch)
        if self.merge_threshold > 0.0:
            mesh = merge_small_cells(mesh, self.merge_threshold)
        self.last_mesh = mesh
        dom_pts, dom_wts = [], []
        for cell, _ in quadrature_ready_cells(mesh):
            if isinstance(cell, Segment1D):
                p, w = map_rule(rule("segment", self.order), cell)
            elif len(cell) == 3:
                p, w = map_rule(rule("triangle", self.order), cell)
            else:
                p, w = map_rule(rule("quadrangle", self.order), cell)
            dom_pts.append(p)
            dom_wts.append(w)
        P = np.vstack(dom_pts)
        W = np.concatenate(dom_wts)
        bp, bw, bn = [], [], []
        for cell in mesh.boundary_cells:
            if isinstance(cell, BoundaryPoint):
                bp.append(cell.point.reshape(1, -1))
                bw.append(np.ones(1))
                bn.append(cell.normal.reshape(1, -1))
            else:
                p, w = map_rule(rule("segment", self.order),
                                np.asarray([cell.start, cell.end]))
                bp.append(p)
                bw.append(w)
                bn.append(np.repeat(cell.normal.reshape(1, -1), len(w), axis=0))
        pts = PointSet(P, W, np.vstack(bp), np.concatenate(bw), np.vstack(bn))
        self.counts.append((pts.n_domain, pts.n_boundary))
        return pts

    def average_counts(self):
        arr = np.asarray(self.counts, dtype=float)
        return tuple(arr.mean(axis=0)) if len(arr) else (0.0, 0.0)


class MCBackend:
    """Uniform Monte-Carlo integration points, resampled periodically."""

    kind = "MC"

    def __init__(self, problem: PoissonProblem, n_domain: int,
                 n_boundary: int, refresh_every: int = 10, seed: int = 0):
        self.problem = problem
        self.n_domain = int(n_domain)
        self.n_boundary = int(n_boundary)
        self.refresh_every = int(refresh_every)
        self.rng = np.random.default_rng([seed, 0x5EED])
        self.counts: list[tuple[int, int]] = []

    def refresh(self, params=None, epoch: int | None = None) -> PointSet:
        pts = mc_sample(self.problem.domain, self.n_domain, self.n_boundary,
                        self.rng)
        self.counts.append((pts.n_domain, pts.n_boundary))
        return pts

    def average_counts(self):
        arr = np.asarray(self.counts, dtype=float)
        return tuple(arr.mean(axis=0)) if len(arr) else (0.0, 0.0)


def make_backend(problem: PoissonProblem, spec: dict, seed: int,
                 activation=None):
    """Build a backend from a config mapping (kind AQ or MC)."""
    from .cpwl import best_l2_fit
    from .activation import make_activation

    kind = spec.get("kind", "AQ").upper()
    refresh_every = int(spec.get("refresh_every", 10))
    if kind == "AQ":
        act = activation
        if act is None:
            act = make_activation(problem.activation_name,
                                  spec.get("epsilon"))
        surrogate = best_l2_fit(act, int(spec.get("pieces", 3)))
        return AQBackend(problem, surrogate, order=int(spec.get("order", 2)),
                         merge_threshold=float(spec.get("merge_threshold", 0.0)),
                         refresh_every=refresh_every)
    if kind == "MC":
        nb = spec.get("n_boundary")
        if nb is None:
            nb = 2 if problem.domain.dim == 1 else max(
                2, int(spec.get("n_domain", 100)) // 10)
        return MCBackend(problem, n_domain=int(spec.get("n_domain", 100)),
                         n_boundary=int(nb), refresh_every=refresh_every,
                         seed=seed)
    raise ValueError(f"unknown backend kind {kind!r}")
