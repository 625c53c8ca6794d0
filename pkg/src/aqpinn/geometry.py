"""Planar primitives: convex/simple polygons, clipping, splitting, merging.

All tolerances scale with the polygon diameter; mesh cells can be extremely
small or skewed, so absolute tolerances are never used on coordinates.
Polygons are stored counter-clockwise with duplicate and collinear vertices
stripped on construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Segment1D",
    "ConvexPolygon",
    "SimplePolygon",
    "clip_line",
    "segment_intersection",
    "split_convex",
    "ear_clip",
    "merge_adjacent",
    "polygon_area",
    "polygon_centroid",
]

REL_TOL = 1e-9          # of the local diameter, for coordinate comparisons
CONVEX_TOL = 1e-12      # of diameter^2, for cross-product convexity checks


class PolygonError(ValueError):
    """Raised for degenerate or self-intersecting polygon input."""


def polygon_area(vertices) -> float:
    """Signed shoelace area (positive for counter-clockwise loops)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_centroid(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * float(np.sum(cross))
    if abs(a) < 1e-300:
        return v.mean(axis=0)
    cx = float(np.sum((x + xn) * cross)) / (6.0 * a)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * a)
    return np.array([cx, cy])


def _diameter(v: np.ndarray) -> float:
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    return float(np.hypot(*(hi - lo)))


def _clean_loop(vertices, dedupe_tol, drop_collinear=True):
    """Drop duplicate and (optionally) collinear vertices from a closed loop."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
        raise PolygonError("polygon needs at least three 2D vertices")
    keep = [v[0]]
    for p in v[1:]:
        if np.hypot(*(p - keep[-1])) > dedupe_tol:
            keep.append(p)
    if len(keep) > 1 and np.hypot(*(keep[0] - keep[-1])) <= dedupe_tol:
        keep.pop()
    if drop_collinear and len(keep) > 3:
        out = []
        n = len(keep)
        for i in range(n):
            a, b, c = keep[i - 1], keep[i], keep[(i + 1) % n]
            cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            lim = dedupe_tol * max(np.hypot(*(b - a)), np.hypot(*(c - b)), 1e-300)
            if abs(cr) > lim:
                out.append(b)
        keep = out if len(out) >= 3 else keep
    if len(keep) < 3:
        raise PolygonError("polygon degenerates after deduplication")
    return np.asarray(keep)


@dataclass(frozen=True)
class Segment1D:
    """An interval [lo, hi] with lo < hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float, tol_rel: float = REL_TOL) -> bool:
        tol = tol_rel * self.length
        return self.lo - tol <= x <= self.hi + tol


class _PolygonBase:
    vertices: np.ndarray

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.vertices)

    @property
    def diameter(self) -> float:
        return _diameter(self.vertices)

    def edges(self):
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def to_json(self) -> str:
        return json.dumps({"vertices": self.vertices.tolist()})

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True, eq=False)
class ConvexPolygon(_PolygonBase):
    """Convex polygon, CCW vertices, no duplicates within tolerance."""

    vertices: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.vertices, dtype=float)
        diam = _diameter(raw)
        v = _clean_loop(raw, REL_TOL * max(diam, 1e-300))
        if polygon_area(v) < 0:
            v = v[::-1].copy()
        n = len(v)
        lim = -CONVEX_TOL * max(diam, 1e-300) ** 2
        for i in range(n):
            a, b, c = v[i - 1], v[i], v[(i + 1) % n]
            cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cr < lim:
                raise PolygonError("vertices do not describe a convex polygon")
        if polygon_area(v) <= 0:
            raise PolygonError("polygon has non-positive area")
        object.__setattr__(self, "vertices", v)

    def contains(self, point, tol_rel: float = REL_TOL) -> bool:
        p = np.asarray(point, dtype=float)
        v = self.vertices
        d = np.roll(v, -1, axis=0) - v
        cr = d[:, 0] * (p[1] - v[:, 1]) - d[:, 1] * (p[0] - v[:, 0])
        return bool(np.all(cr >= -tol_rel * self.diameter ** 2))

    @classmethod
    def from_json(cls, text: str) -> "ConvexPolygon":
        return cls(np.asarray(json.loads(text)["vertices"]))


@dataclass(frozen=True, eq=False)
class SimplePolygon(_PolygonBase):
    """Simple (possibly non-convex) polygon, CCW, no self-intersection."""

    vertices: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.vertices, dtype=float)
        diam = _diameter(raw)
        v = _clean_loop(raw, REL_TOL * max(diam, 1e-300))
        if polygon_area(v) < 0:
            v = v[::-1].copy()
        if polygon_area(v) <= 0:
            raise PolygonError("polygon has non-positive area")
        _check_simple(v, REL_TOL * max(diam, 1e-300))
        object.__setattr__(self, "vertices", v)

    def contains(self, point, tol_rel: float = REL_TOL) -> bool:
        p = np.asarray(point, dtype=float)
        v = self.vertices
        tol = tol_rel * self.diameter
        inside = False
        n = len(v)
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            # on-edge counts as contained
            ab = b - a
            t = np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-300)
            if 0.0 <= t <= 1.0 and np.hypot(*(a + t * ab - p)) <= tol:
                return True
            if (a[1] > p[1]) != (b[1] > p[1]):
                xs = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0])
                if xs > p[0]:
                    inside = not inside
        return inside

    @classmethod
    def from_json(cls, text: str) -> "SimplePolygon":
        return cls(np.asarray(json.loads(text)["vertices"]))


def _check_simple(v: np.ndarray, tol: float):
    n = len(v)
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # shared endpoint with a neighbour is fine
            b1, b2 = v[j], v[(j + 1) % n]
            if _proper_cross(a1, a2, b1, b2, tol):
                raise PolygonError("polygon edges self-intersect")


def _proper_cross(a1, a2, b1, b2, tol) -> bool:
    d1 = a2 - a1
    d2 = b2 - b1
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < 1e-300:
        return False
    r = b1 - a1
    s = (r[0] * d2[1] - r[1] * d2[0]) / den
    t = (r[0] * d1[1] - r[1] * d1[0]) / den
    eps = 1e-12
    return eps < s < 1 - eps and eps < t < 1 - eps


# ---------------------------------------------------------------------------
# clipping and intersections

def clip_line(poly: ConvexPolygon, line) -> tuple[np.ndarray, np.ndarray] | None:
    """Chord of the line ``{x : w . x = c}`` inside a convex polygon.

    Returns ``None`` when the polygon lies on one side of the line (zero or
    one boundary contacts) or when the line coincides with an edge.
    """
    w, c = line
    w = np.asarray(w, dtype=float)
    nw = float(np.hypot(*w))
    if nw <= 0.0:
        raise ValueError("line normal must be non-zero")
    v = poly.vertices
    tol = REL_TOL * max(poly.diameter, 1e-300)
    s = (v @ w - c) / nw
    pos = s > tol
    neg = s < -tol
    if not (np.any(pos) and np.any(neg)):
        return None
    zero = ~pos & ~neg
    pts: list[np.ndarray] = []
    n = len(v)
    for i in range(n):
        if zero[i]:
            _append_unique(pts, v[i], tol)
        j = (i + 1) % n
        if (pos[i] and neg[j]) or (neg[i] and pos[j]):
            t = s[i] / (s[i] - s[j])
            _append_unique(pts, v[i] + t * (v[j] - v[i]), tol)
    if len(pts) != 2:
        return None  # grazing contact resolved as "not cut"
    return pts[0], pts[1]


def _append_unique(pts, p, tol):
    for q in pts:
        if np.hypot(*(p - q)) <= tol:
            return
    pts.append(p)


def segment_intersection(a, b, tol_rel: float = REL_TOL):
    """Intersection point of two segments, or ``None``.

    Each segment is a pair of endpoints.  The segments are parametrised
    around their midpoints and the 2x2 system is solved; parameters must lie
    in [-1, +1] (with a small slack).  Parallel segments give ``None``.
    """
    a0, a1 = (np.asarray(p, dtype=float) for p in a)
    b0, b1 = (np.asarray(p, dtype=float) for p in b)
    mid_a, half_a = 0.5 * (a0 + a1), 0.5 * (a1 - a0)
    mid_b, half_b = 0.5 * (b0 + b1), 0.5 * (b1 - b0)
    det = half_a[0] * (-half_b[1]) - (-half_b[0]) * half_a[1]
    scale = max(float(np.hypot(*half_a)) * float(np.hypot(*half_b)), 1e-300)
    if abs(det) < 1e-12 * scale:
        return None
    rhs = mid_b - mid_a
    s = (rhs[0] * (-half_b[1]) - (-half_b[0]) * rhs[1]) / det
    t = (half_a[0] * rhs[1] - half_a[1] * rhs[0]) / det
    if abs(s) > 1.0 + tol_rel or abs(t) > 1.0 + tol_rel:
        return None
    return mid_a + s * half_a


# ---------------------------------------------------------------------------
# decomposition into triangles and convex quadrangles

def split_convex(poly: ConvexPolygon) -> list[ConvexPolygon]:
    """Partition a convex polygon into triangles and convex quadrangles.

    Up to ten vertices the hard rule peels quadrangles off the boundary
    (an octagon yields the cycles (1,2,3,4), (4,5,6,7), (7,8,1,4)); larger
    polygons are first split in half recursively.
    """
    out: list[np.ndarray] = []

    def rec(v: np.ndarray):
        n = len(v)
        if n <= 4:
            out.append(v)
            return
        if n > 10:
            k = n // 2
            rec(v[: k + 1])
            rec(np.vstack([v[k:], v[:1]]))
            return
        out.append(v[:4])
        rec(np.vstack([v[3:], v[:1]]))

    rec(poly.vertices)
    return [ConvexPolygon(v) for v in out]


def ear_clip(poly) -> list[ConvexPolygon]:
    """Triangulate a simple polygon by ear clipping (n - 2 triangles)."""
    if not isinstance(poly, SimplePolygon):
        poly = SimplePolygon(np.asarray(poly, dtype=float))
    verts = [np.asarray(p, dtype=float) for p in poly.vertices]
    diam = poly.diameter
    tol2 = CONVEX_TOL * diam * diam
    triangles: list[np.ndarray] = []

    def is_ear(i, vs, allow_touch):
        n = len(vs)
        a, b, c = vs[i - 1], vs[i], vs[(i + 1) % n]
        cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if cr <= tol2:
            return False  # reflex or degenerate corner
        for j, p in enumerate(vs):
            if j in (i - 1 if i > 0 else n - 1, i, (i + 1) % n):
                continue
            # a vertex on the new diagonal would pinch the remainder, so
            # on-boundary points block unless no clean ear exists at all
            blocked = (_strictly_in_triangle(p, a, b, c, tol2) if allow_touch
                       else _in_or_on_triangle(p, a, b, c, tol2))
            if blocked:
                return False
        return True

    guard = 0
    while len(verts) > 3:
        n = len(verts)
        clipped = False
        for allow_touch in (False, True):
            for i in range(n):
                if is_ear(i, verts, allow_touch):
                    a, b, c = verts[i - 1], verts[i], verts[(i + 1) % n]
                    triangles.append(np.asarray([a, b, c]))
                    del verts[i]
                    clipped = True
                    break
            if clipped:
                break
        if not clipped:
            raise PolygonError("ear clipping failed: no ear found "
                               "(degenerate or self-intersecting input)")
        guard += 1
        if guard > 10 * len(poly.vertices):
            raise PolygonError("ear clipping did not terminate")
    triangles.append(np.asarray(verts))
    return [ConvexPolygon(t) for t in triangles]


def _strictly_in_triangle(p, a, b, c, tol2) -> bool:
    def cr(u, v, q):
        return (v[0] - u[0]) * (q[1] - u[1]) - (v[1] - u[1]) * (q[0] - u[0])

    return (cr(a, b, p) > tol2 and cr(b, c, p) > tol2 and cr(c, a, p) > tol2)


def _in_or_on_triangle(p, a, b, c, tol2) -> bool:
    def cr(u, v, q):
        return (v[0] - u[0]) * (q[1] - u[1]) - (v[1] - u[1]) * (q[0] - u[0])

    return (cr(a, b, p) >= -tol2 and cr(b, c, p) >= -tol2
            and cr(c, a, p) >= -tol2)


# ---------------------------------------------------------------------------
# boundary sharing and union of adjacent cells

def collinear_overlaps(edges_a, edges_b, tol: float):
    """Pairs of collinear overlapping sub-segments between two edge lists.

    Returns a list of (ia, ib, p, q) where segment [p, q] (length > tol)
    lies on edge ``ia`` of the first list and edge ``ib`` of the second.
    """
    found = []
    for ia, (a0, a1) in enumerate(edges_a):
        da = a1 - a0
        la = float(np.hypot(*da))
        if la <= tol:
            continue
        ua = da / la
        for ib, (b0, b1) in enumerate(edges_b):
            db = b1 - b0
            lb = float(np.hypot(*db))
            if lb <= tol:
                continue
            if abs(ua[0] * db[1] - ua[1] * db[0]) / lb > 1e-7:
                continue  # not parallel
            if abs(ua[0] * (b0[1] - a0[1]) - ua[1] * (b0[0] - a0[0])) > tol:
                continue  # parallel but not collinear
            t0 = float(np.dot(b0 - a0, ua))
            t1 = float(np.dot(b1 - a0, ua))
            lo = max(0.0, min(t0, t1))
            hi = min(la, max(t0, t1))
            if hi - lo > tol:
                found.append((ia, ib, a0 + lo * ua, a0 + hi * ua))
    return found


def _refine_loop(vertices: np.ndarray, inserts: dict[int, list[np.ndarray]],
                 tol: float) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    n = len(vertices)
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n]
        out.append(a)
        pts = inserts.get(i, [])
        if pts:
            d = b - a
            ll = float(np.dot(d, d))
            pts = sorted(pts, key=lambda p: float(np.dot(p - a, d)) / ll)
            for p in pts:
                if (np.hypot(*(p - out[-1])) > tol
                        and np.hypot(*(p - b)) > tol):
                    out.append(p)
    return out


def merge_adjacent(a, b, shared_boundary=None) -> SimplePolygon:
    """Union of two polygons that share part of their boundary.

    Both boundaries are refined at the shared-overlap endpoints; the
    coinciding (opposite-direction) sub-edges are removed and the remaining
    chains stitched into one CCW loop.  Raises if the union is not simply
    connected (disjoint cells or a hole).
    """
    va = a.vertices if hasattr(a, "vertices") else np.asarray(a, dtype=float)
    vb = b.vertices if hasattr(b, "vertices") else np.asarray(b, dtype=float)
    diam = max(_diameter(va), _diameter(vb))
    tol = REL_TOL * diam
    edges_a = [(va[i], va[(i + 1) % len(va)]) for i in range(len(va))]
    edges_b = [(vb[i], vb[(i + 1) % len(vb)]) for i in range(len(vb))]
    overlaps = (shared_boundary if shared_boundary is not None
                else collinear_overlaps(edges_a, edges_b, tol))
    if not overlaps:
        raise PolygonError("polygons share no boundary; cannot merge")

    ins_a: dict[int, list[np.ndarray]] = {}
    ins_b: dict[int, list[np.ndarray]] = {}
    for ia, ib, p, q in overlaps:
        ins_a.setdefault(ia, []).extend([p, q])
        ins_b.setdefault(ib, []).extend([p, q])
    loop_a = _refine_loop(va, ins_a, tol)
    loop_b = _refine_loop(vb, ins_b, tol)

    # snap both loops onto shared representatives so float fuzz between the
    # two cells' copies of the same boundary point cannot break the matching
    pool: list[np.ndarray] = []

    def canon(p):
        for q in pool:
            if np.hypot(*(p - q)) <= tol:
                return q
        pool.append(p)
        return p

    loop_a = [canon(p) for p in loop_a]
    loop_b = [canon(p) for p in loop_b]

    def key(p):
        return id(p)

    def directed(loop):
        return [(key(loop[i]), key(loop[(i + 1) % len(loop)]),
                 loop[i], loop[(i + 1) % len(loop)])
                for i in range(len(loop))]

    ea = directed(loop_a)
    eb = directed(loop_b)
    kb = {(k1, k2) for k1, k2, _, _ in eb}
    ka = {(k1, k2) for k1, k2, _, _ in ea}
    keep = ([e for e in ea if (e[1], e[0]) not in kb]
            + [e for e in eb if (e[1], e[0]) not in ka])
    succ: dict[tuple, list] = {}
    for e in keep:
        succ.setdefault(e[0], []).append(e)
    if not keep:
        raise PolygonError("nothing left after removing shared boundary")

    start = keep[0]
    loop = [start[2]]
    cur = start
    for _ in range(len(keep) + 1):
        nxts = succ.get(cur[1], [])
        if not nxts:
            raise PolygonError("merged boundary is not closed")
        cur = nxts.pop(0)
        if cur[0] == start[0] and len(loop) > 1:
            break
        loop.append(cur[2])
    else:
        raise PolygonError("merged boundary walk did not close")
    if any(lst for lst in succ.values()):
        raise PolygonError("merge produced several loops (hole or disjoint)")
    return SimplePolygon(np.asarray(loop))
