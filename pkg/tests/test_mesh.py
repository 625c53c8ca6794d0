import math

import numpy as np
import pytest

from aqpinn.activation import abse, tanh_activation
from aqpinn.cpwl import CPWLFunction, best_l2_fit, build_cpwl
from aqpinn.geometry import ConvexPolygon, Segment1D
from aqpinn.loss import two_rhombi
from aqpinn.mesh import (AdaptedMesh, BoundaryPoint, ConvexDomain,
                         LinearRegion, adaptive_mesh, boundary_mesh,
                         cut_region_1d, cut_region_2d, merge_small_cells,
                         mesh_to_json, quadrature_ready_cells)
from aqpinn.net import NetworkParams, forward_cpwl, init_params

INF = math.inf
ACT = abse(0.01)
RELU = build_cpwl(ACT, [-INF, INF])
HARD_TANH = build_cpwl(tanh_activation(), [-INF, 0.0, INF])
SQUARE = ConvexDomain.box()


def _sample_in_cell(cell, rng, n=20):
    """Uniform points strictly inside a convex cell (fan triangulation)."""
    if isinstance(cell, Segment1D):
        return (cell.lo + rng.uniform(0.05, 0.95, n) * cell.length
                ).reshape(-1, 1)
    v = cell.vertices
    tris = [(v[0], v[i], v[i + 1]) for i in range(1, len(v) - 1)]
    areas = np.array([abs((b[0] - a[0]) * (c[1] - a[1])
                          - (b[1] - a[1]) * (c[0] - a[0])) / 2
                      for a, b, c in tris])
    pick = rng.choice(len(tris), size=n, p=areas / areas.sum())
    r1, r2 = rng.uniform(0.02, 0.95, (2, n))
    flip = r1 + r2 > 1
    r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
    out = np.empty((n, 2))
    for i, k in enumerate(pick):
        a, b, c = tris[k]
        out[i] = a + r1[i] * (b - a) + r2[i] * (c - a)
    return out


# -- 1D cutting ---------------------------------------------------------------

def test_cut_1d_relu_at_zero():
    reg = LinearRegion(cell=Segment1D(-1, 1), W=np.eye(1), b=np.zeros(1))
    subs = cut_region_1d(reg, RELU)
    assert [(s.cell.lo, s.cell.hi) for s in subs] == [(-1, 0.0), (0.0, 1)]
    assert subs[0].W[0, 0] == pytest.approx(0.0)
    assert subs[1].W[0, 0] == pytest.approx(1.0)
    assert subs[0].b[0] == pytest.approx(0.0)


def test_cut_1d_hard_tanh_three_cells():
    reg = LinearRegion(cell=Segment1D(-1, 1), W=np.array([[2.0]]),
                       b=np.zeros(1))
    subs = cut_region_1d(reg, HARD_TANH)
    knots = [(s.cell.lo, s.cell.hi) for s in subs]
    assert knots == [(-1, -0.5), (-0.5, 0.5), (0.5, 1)]


def test_cut_1d_breakpoint_outside_range():
    reg = LinearRegion(cell=Segment1D(-1, 1), W=np.array([[0.1]]),
                       b=np.zeros(1))
    subs = cut_region_1d(reg, HARD_TANH)  # range [-0.1, 0.1] misses +-1
    assert len(subs) == 1


def test_cut_1d_constant_row_no_cuts():
    reg = LinearRegion(cell=Segment1D(-1, 1),
                       W=np.array([[0.0], [1.0]]), b=np.array([0.5, 0.0]))
    subs = cut_region_1d(reg, RELU)
    assert len(subs) == 2  # only the active row cuts


# -- 2D cutting ---------------------------------------------------------------

def test_cut_2d_single_chord():
    reg = LinearRegion(cell=ConvexPolygon([[-1, -1], [1, -1], [1, 1], [-1, 1]]),
                       W=np.array([[1.0, 0.0]]), b=np.zeros(1))
    subs = cut_region_2d(reg, RELU)
    assert len(subs) == 2
    assert sum(s.cell.area for s in subs) == pytest.approx(4.0, rel=1e-12)


def test_cut_2d_quadrants_with_arrangement_vertex():
    reg = LinearRegion(cell=ConvexPolygon([[-1, -1], [1, -1], [1, 1], [-1, 1]]),
                       W=np.array([[1.0, 0.0], [0.0, 1.0]]), b=np.zeros(2))
    subs = cut_region_2d(reg, RELU)
    assert len(subs) == 4
    corners = sorted(tuple(np.round(s.cell.centroid, 6)) for s in subs)
    assert corners == [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)]
    # the crossing at the origin is a vertex of every quadrant cell
    for s in subs:
        assert np.min(np.hypot(*(s.cell.vertices - 0.0).T)) < 1e-12


def test_cut_2d_thirteen_subcells_single_layer():
    # one row activates two breakpoints (a parallel pair), three rows one
    # each; 5 chords with 7 interior crossings cut the square into 13 faces
    surr = CPWLFunction(breakpoints=np.array([-0.3, 0.3]),
                        slopes=np.array([0.0, 0.5, 1.0]),
                        intercepts=np.array([0.0, 0.1, 0.0]))
    W = np.array([[1.0, 0.0], [0.0, 1.0], [0.2, 0.2], [0.25, -0.25]])
    b = np.array([0.0, 0.9, 0.15, 0.25])
    reg = LinearRegion(cell=ConvexPolygon([[-1, -1], [1, -1], [1, 1], [-1, 1]]),
                       W=W, b=b)
    subs = cut_region_2d(reg, surr)
    assert len(subs) == 13
    assert sum(s.cell.area for s in subs) == pytest.approx(4.0, rel=1e-12)


# -- full extraction ----------------------------------------------------------

def test_adaptive_mesh_half_plane_example():
    params = NetworkParams((2, 1, 1), (np.array([[1.0, 0.0]]), np.eye(1)),
                           (np.zeros(1), np.zeros(1)), ACT)
    mesh = adaptive_mesh(params, RELU, SQUARE)
    assert len(mesh.domain_cells) == 2
    cells = sorted(mesh.domain_cells, key=lambda c: c.cell.centroid[0])
    assert np.allclose(cells[0].W, [[0.0, 0.0]])
    assert np.allclose(cells[1].W, [[1.0, 0.0]])
    assert cells[1].b[0] == pytest.approx(0.0)


def test_adaptive_mesh_quadrants():
    params = NetworkParams(
        (2, 2, 1), (np.eye(2), np.array([[1.0, 1.0]])),
        (np.zeros(2), np.zeros(1)), ACT)
    mesh = adaptive_mesh(params, RELU, SQUARE)
    assert len(mesh.domain_cells) == 4
    assert mesh.domain_measure == pytest.approx(4.0, rel=1e-12)


def _grid_pattern_count(params, surrogate, n=600):
    xs = np.linspace(-1, 1, n)
    X, Y = np.meshgrid(xs, xs)
    V = np.column_stack([X.ravel(), Y.ravel()]).T
    codes = np.zeros(V.shape[1], dtype=np.int64)
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        V = W @ V + b[:, None]
        if k < last:
            for row in range(V.shape[0]):
                codes = codes * surrogate.num_pieces \
                    + surrogate.piece_index(V[row])
            V = surrogate(V)
    return len(np.unique(codes))


@pytest.mark.parametrize("seed,pieces", [(0, 2), (1, 3), (2, 5)])
def test_adaptive_mesh_random_network_oracles(seed, pieces):
    surrogate = best_l2_fit(ACT, pieces)
    params = init_params((2, 10, 10, 1), ACT, seed=seed)
    mesh = adaptive_mesh(params, surrogate, SQUARE)
    # partition of the square
    assert mesh.domain_measure == pytest.approx(4.0, rel=1e-8)
    # affine map of every cell agrees with the surrogate network
    rng = np.random.default_rng(seed)
    for region in mesh.domain_cells:
        pts = _sample_in_cell(region.cell, rng, n=20)
        direct = forward_cpwl(params, surrogate, pts)
        via_map = region.affine(pts)[:, 0]
        tol = 1e-8 * (1.0 + np.linalg.norm(region.W))
        assert np.max(np.abs(direct - via_map)) < tol
    # cell count vs the dense-grid activation-pattern oracle
    pixel = (2.0 / 599) ** 2
    visible = sum(1 for c in mesh.domain_cells if c.measure >= pixel)
    grid = _grid_pattern_count(params, surrogate)
    assert visible - 2 <= grid <= len(mesh.domain_cells) + 2


def test_surrogate_continuity_across_cells():
    surrogate = best_l2_fit(ACT, 3)
    params = init_params((2, 10, 10, 1), ACT, seed=11)
    mesh = adaptive_mesh(params, surrogate, SQUARE)
    # shared-edge midpoints must get the same value from both affine maps
    edges = {}
    for idx, region in enumerate(mesh.domain_cells):
        v = region.cell.vertices
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            key = tuple(sorted([tuple(np.round(a, 9)), tuple(np.round(b, 9))]))
            edges.setdefault(key, []).append(idx)
    checked = 0
    for (pa, pb), owners in edges.items():
        if len(owners) == 2:
            mid = (np.asarray(pa) + np.asarray(pb)) / 2
            r1, r2 = (mesh.domain_cells[k] for k in owners)
            v1 = r1.affine(mid.reshape(1, 2))[0, 0]
            v2 = r2.affine(mid.reshape(1, 2))[0, 0]
            assert abs(v1 - v2) < 1e-8
            checked += 1
    assert checked > 10


def test_mesh_convex_cells_for_convex_domain():
    surrogate = best_l2_fit(ACT, 3)
    params = init_params((2, 10, 10, 1), ACT, seed=5)
    mesh = adaptive_mesh(params, surrogate, SQUARE)
    for region in mesh.domain_cells:
        assert isinstance(region.cell, ConvexPolygon)  # validated convex


def test_mesh_multipart_rhombi_partition():
    surrogate = best_l2_fit(ACT, 3)
    params = init_params((2, 8, 1), ACT, seed=2)
    dom = two_rhombi()
    mesh = adaptive_mesh(params, surrogate, dom)
    assert mesh.domain_measure == pytest.approx(dom.measure, rel=1e-8)
    assert mesh.boundary_measure == pytest.approx(6.0, rel=1e-8)


# -- boundary -----------------------------------------------------------------

def test_boundary_mesh_1d_endpoints():
    params = init_params((1, 5, 1), ACT, seed=0)
    dom = ConvexDomain.interval(-1, 1)
    cells = boundary_mesh(params, RELU, dom)
    assert all(isinstance(c, BoundaryPoint) for c in cells)
    assert sorted(float(c.point[0]) for c in cells) == [-1.0, 1.0]
    assert sorted(float(c.normal[0]) for c in cells) == [-1.0, 1.0]


def test_boundary_mesh_single_cut():
    params = NetworkParams((2, 1, 1), (np.array([[1.0, 0.0]]), np.eye(1)),
                           (np.zeros(1), np.zeros(1)), ACT)
    cells = boundary_mesh(params, RELU, SQUARE)
    # bottom and top edges get split at x = 0; left/right stay whole
    lengths = sorted(round(c.measure, 9) for c in cells)
    assert lengths == [1.0, 1.0, 1.0, 1.0, 2.0, 2.0]
    total = sum(c.measure for c in cells)
    assert total == pytest.approx(8.0, rel=1e-10)


def test_boundary_mesh_preserves_total_length():
    surrogate = best_l2_fit(ACT, 3)
    params = init_params((2, 10, 10, 1), ACT, seed=9)
    cells = boundary_mesh(params, surrogate, SQUARE)
    assert sum(c.measure for c in cells) == pytest.approx(8.0, rel=1e-10)


# -- merging and quadrature-ready cells ----------------------------------------

def _toy_mesh_1d(knots):
    cells = [LinearRegion(cell=Segment1D(a, b), W=np.eye(1), b=np.zeros(1))
             for a, b in zip(knots[:-1], knots[1:])]
    return AdaptedMesh(domain_cells=tuple(cells), boundary_cells=(), dim=1)


def test_merge_threshold_zero_is_identity():
    mesh = _toy_mesh_1d([0.0, 0.1, 0.6, 1.0])
    merged = merge_small_cells(mesh, 0.0)
    assert merged is mesh


def test_merge_two_cells_one_tiny():
    mesh = _toy_mesh_1d([0.0, 0.001, 1.0])
    merged = merge_small_cells(mesh, 0.5)
    assert len(merged.domain_cells) == 1
    assert merged.domain_cells[0].measure == pytest.approx(1.0)
    assert merged.domain_cells[0].W is None  # map dropped


def test_merge_respects_original_median():
    knots = [0.0, 0.004, 0.5, 0.7, 0.9, 1.0]
    mesh = _toy_mesh_1d(knots)
    target = 0.5 * np.median(np.diff(knots))
    merged = merge_small_cells(mesh, 0.5)
    assert merged.domain_measure == pytest.approx(1.0)
    assert all(c.measure >= target for c in merged.domain_cells)


def test_merge_2d_reduces_cells_preserves_area():
    surrogate = best_l2_fit(ACT, 3)
    params = init_params((2, 10, 10, 1), ACT, seed=4)
    mesh = adaptive_mesh(params, surrogate, SQUARE)
    merged = merge_small_cells(mesh, 0.5)
    assert len(merged.domain_cells) < len(mesh.domain_cells)
    assert merged.domain_measure == pytest.approx(4.0, rel=1e-8)
    # post-processing must yield only triangles and convex quadrangles
    cells = quadrature_ready_cells(merged)
    assert all(len(c) in (3, 4) for c, _ in cells)
    assert sum(m for _, m in cells) == pytest.approx(4.0, rel=1e-8)


def test_quadrature_ready_identity_cases():
    tri = LinearRegion(cell=ConvexPolygon([[0, 0], [1, 0], [0, 1]]),
                       W=np.zeros((1, 2)), b=np.zeros(1))
    mesh = AdaptedMesh(domain_cells=(tri,), boundary_cells=(), dim=2)
    cells = quadrature_ready_cells(mesh)
    assert len(cells) == 1 and cells[0][1] == pytest.approx(0.5)

    # square domain with no cuts stays one quadrangle of area 4
    params = NetworkParams((2, 1, 1), (np.array([[0.05, 0.0]]), np.eye(1)),
                           (np.zeros(1) + 5.0, np.zeros(1)), ACT)
    mesh = adaptive_mesh(params, RELU, SQUARE)
    cells = quadrature_ready_cells(mesh)
    assert len(cells) == 1
    assert cells[0][1] == pytest.approx(4.0)


def test_quadrature_ready_pentagon_split():
    v = [(math.cos(k * 2 * math.pi / 5), math.sin(k * 2 * math.pi / 5))
         for k in range(5)]
    pent = LinearRegion(cell=ConvexPolygon(v), W=np.zeros((1, 2)),
                        b=np.zeros(1))
    mesh = AdaptedMesh(domain_cells=(pent,), boundary_cells=(), dim=2)
    cells = quadrature_ready_cells(mesh)
    assert sorted(len(c) for c, _ in cells) == [3, 4]
    assert sum(m for _, m in cells) == pytest.approx(pent.cell.area, rel=1e-10)


def test_mesh_json_dump():
    import json
    surrogate = best_l2_fit(ACT, 2)
    params = init_params((2, 5, 1), ACT, seed=1)
    mesh = adaptive_mesh(params, surrogate, SQUARE)
    data = json.loads(mesh_to_json(mesh, order=2))
    assert data["dim"] == 2
    assert len(data["cells"]) == len(mesh.domain_cells)
    assert all("points" in c for c in data["cells"])


def test_dimension_mismatch_rejected():
    params = init_params((1, 5, 1), ACT, seed=0)
    with pytest.raises(ValueError):
        adaptive_mesh(params, RELU, SQUARE)
