import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqpinn.geometry import (ConvexPolygon, PolygonError, Segment1D,
                             SimplePolygon, clip_line, ear_clip,
                             merge_adjacent, segment_intersection,
                             split_convex)

UNIT_SQUARE = [[-1, -1], [1, -1], [1, 1], [-1, 1]]


@pytest.fixture
def square():
    return ConvexPolygon(UNIT_SQUARE)


def _random_convex(rng, n):
    """Random convex polygon: points on a randomly scaled ellipse."""
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    if np.min(np.diff(ang)) < 1e-2:
        return None
    r = rng.uniform(0.5, 2.0)
    sx, sy = rng.uniform(0.5, 1.5, 2)
    return np.c_[sx * np.cos(ang), sy * np.sin(ang)] * r


# -- clipping ---------------------------------------------------------------

def test_clip_vertical_chord(square):
    p, q = clip_line(square, ((1.0, 0.0), 0.5))
    got = sorted([tuple(p), tuple(q)], key=lambda t: t[1])
    assert np.allclose(got, [(0.5, -1.0), (0.5, 1.0)])


def test_clip_misses_polygon(square):
    assert clip_line(square, ((1.0, 0.0), 3.0)) is None


def test_clip_edge_coincident_is_no_cut(square):
    # the paper's degenerate rule: an edge-borne line does not cut
    assert clip_line(square, ((0.0, 1.0), 1.0)) is None
    assert clip_line(square, ((0.0, 1.0), 1.0 + 1e-14)) is None


def test_clip_touching_vertex_is_no_cut(square):
    assert clip_line(square, ((1.0, 1.0), 2.0)) is None


def test_clip_through_vertices(square):
    got = clip_line(square, ((1.0, 1.0), 0.0))  # main diagonal
    assert got is not None
    pts = sorted([tuple(p) for p in got])
    assert np.allclose(pts, [(-1.0, 1.0), (1.0, -1.0)])


def test_clip_endpoints_on_boundary(square):
    rng = np.random.default_rng(0)
    for _ in range(50):
        w = rng.normal(size=2)
        c = rng.uniform(-0.5, 0.5)
        got = clip_line(square, (w, c))
        if got is None:
            continue
        for p in got:
            assert abs(np.dot(w, p) - c) <= 1e-9 * np.linalg.norm(w) * 2
            assert max(abs(p[0]), abs(p[1])) == pytest.approx(1.0, abs=1e-9)


# -- segment intersection ---------------------------------------------------

def test_segment_intersection_cross():
    q = segment_intersection(((-1, 0), (1, 0)), ((0, -1), (0, 1)))
    assert np.allclose(q, (0, 0))


def test_segment_intersection_parallel_none():
    assert segment_intersection(((-1, 0), (1, 0)), ((-1, 1), (1, 1))) is None


def test_segment_intersection_diagonals():
    q = segment_intersection(((-1, -1), (1, 1)), ((-1, 1), (1, -1)))
    assert np.allclose(q, (0, 0))


def test_segment_intersection_outside_none():
    assert segment_intersection(((0, 0), (1, 0)), ((2, -1), (2, 1))) is None


# -- splitting --------------------------------------------------------------

def test_split_triangle_identity():
    tri = ConvexPolygon([[0, 0], [1, 0], [0, 1]])
    out = split_convex(tri)
    assert len(out) == 1 and np.allclose(out[0].vertices, tri.vertices)


def test_split_octagon_cited_cycles():
    v = [(math.cos(k * math.pi / 4), math.sin(k * math.pi / 4))
         for k in range(8)]
    octagon = ConvexPolygon(v)
    pieces = split_convex(octagon)
    assert len(pieces) == 3
    # the hard rule peels (1,2,3,4), (4,5,6,7) and leaves (7,8,1,4)
    vv = octagon.vertices
    expected = [vv[[0, 1, 2, 3]], vv[[3, 4, 5, 6]], vv[[6, 7, 0, 3]]]
    for got, want in zip(pieces, expected):
        assert np.allclose(got.vertices, want)
    assert sum(p.area for p in pieces) == pytest.approx(octagon.area,
                                                        rel=1e-12)


def test_split_pentagon():
    v = [(math.cos(k * 2 * math.pi / 5), math.sin(k * 2 * math.pi / 5))
         for k in range(5)]
    pieces = split_convex(ConvexPolygon(v))
    assert sorted(len(p) for p in pieces) == [3, 4]


def test_split_14gon_halves_then_hard_rules():
    poly = ConvexPolygon([(math.cos(k * math.pi / 7), math.sin(k * math.pi / 7))
                          for k in range(14)])
    pieces = split_convex(poly)
    assert all(len(p) in (3, 4) for p in pieces)
    assert sum(p.area for p in pieces) == pytest.approx(poly.area, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 12), st.integers(0, 10_000))
def test_split_random_convex_partition(n, seed):
    rng = np.random.default_rng(seed)
    v = _random_convex(rng, n)
    if v is None:
        return
    poly = ConvexPolygon(v)
    pieces = split_convex(poly)
    assert all(len(p) in (3, 4) for p in pieces)
    assert sum(p.area for p in pieces) == pytest.approx(poly.area, rel=1e-10)
    # pairwise interior-disjoint (sampled)
    pts = rng.uniform(v.min(), v.max(), size=(100, 2))
    for q in pts:
        hits = sum(p.contains(q, tol_rel=-1e-9) for p in pieces)
        assert hits <= 1 or not poly.contains(q)


# -- ear clipping -----------------------------------------------------------

def test_ear_clip_convex_pentagon():
    v = _random_convex(np.random.default_rng(3), 5)
    tris = ear_clip(SimplePolygon(v))
    assert len(tris) == 3


def test_ear_clip_triangle_identity():
    tri = SimplePolygon([[0, 0], [1, 0], [0, 1]])
    out = ear_clip(tri)
    assert len(out) == 1
    assert out[0].area == pytest.approx(tri.area)


def test_ear_clip_l_shape_membership_oracle():
    L = SimplePolygon([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]])
    tris = ear_clip(L)
    assert len(tris) == 4
    assert sum(t.area for t in tris) == pytest.approx(L.area, rel=1e-12)
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 2, size=(2000, 2))
    for p in pts:
        if min(abs(p[0] - 1), abs(p[1] - 1)) < 1e-9:
            continue
        inside_l = (p[1] < 1 and p[0] < 2) or (p[0] < 1 and p[1] < 2)
        cover = sum(t.contains(p, tol_rel=-1e-9) for t in tris)
        assert cover == (1 if inside_l else 0)


def test_ear_clip_rejects_self_intersection():
    with pytest.raises(PolygonError):
        SimplePolygon([[0, 0], [2, 2], [2, 0], [0, 2]])  # bowtie


# -- areas, containment, merging -------------------------------------------

def test_area_and_contains(square):
    assert square.area == pytest.approx(4.0)
    assert not square.contains((2.0, 0.0))
    assert square.contains((0.3, -0.2))


def test_merge_two_unit_squares():
    a = ConvexPolygon([[0, 0], [1, 0], [1, 1], [0, 1]])
    b = ConvexPolygon([[1, 0], [2, 0], [2, 1], [1, 1]])
    merged = merge_adjacent(a, b)
    assert merged.area == pytest.approx(2.0)
    assert len(merged.vertices) == 4


def test_merge_partial_edge_overlap():
    a = ConvexPolygon([[0, 0], [2, 0], [2, 1], [0, 1]])
    b = ConvexPolygon([[0.5, -1], [1.5, -1], [1.5, 0], [0.5, 0]])
    merged = merge_adjacent(a, b)
    assert merged.area == pytest.approx(3.0)


def test_merge_requires_shared_boundary():
    a = ConvexPolygon([[0, 0], [1, 0], [1, 1], [0, 1]])
    c = ConvexPolygon([[5, 5], [6, 5], [6, 6], [5, 6]])
    with pytest.raises(PolygonError):
        merge_adjacent(a, c)


def test_segment1d():
    s = Segment1D(-1.0, 2.0)
    assert s.length == 3.0 and s.midpoint == 0.5
    with pytest.raises(ValueError):
        Segment1D(1.0, 1.0)


def test_polygon_json_round_trip(square):
    back = ConvexPolygon.from_json(square.to_json())
    assert np.allclose(back.vertices, square.vertices)


def test_convexity_validation():
    with pytest.raises(PolygonError):
        ConvexPolygon([[0, 0], [2, 0], [1, 0.2], [2, 2], [0, 2]])
