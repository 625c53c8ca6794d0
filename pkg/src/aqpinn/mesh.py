"""Linear-region meshes of the surrogate network.

Replacing the smooth activation by its piecewise-linear surrogate makes the
network affine on finitely many convex cells.  The extraction walks the
layers: compose the running affine map with the layer's weights, cut every
region along the preimages of the surrogate breakpoints, and compose with
the local (slope, intercept) of the surrogate looked up at an interior point
of each sub-cell.  Cells of the final mesh therefore carry the full affine
map of the surrogate network.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cpwl import CPWLFunction
from .geometry import (REL_TOL, ConvexPolygon, PolygonError, Segment1D,
                       SimplePolygon, clip_line, collinear_overlaps, ear_clip,
                       merge_adjacent, polygon_area, segment_intersection,
                       split_convex)

__all__ = [
    "LinearRegion",
    "BoundaryPoint",
    "BoundarySegment",
    "AdaptedMesh",
    "ConvexDomain",
    "adaptive_mesh",
    "boundary_mesh",
    "cut_region_1d",
    "cut_region_2d",
    "merge_small_cells",
    "quadrature_ready_cells",
    "MeshError",
]


class MeshError(RuntimeError):
    """Geometry failure during mesh extraction, annotated with its location."""


@dataclass(frozen=True)
class LinearRegion:
    """A cell together with the affine map of the surrogate restricted to it.

    ``maps = None`` marks integration-only cells (merged aggregates) whose
    single affine expression no longer exists.
    """

    cell: object                 # Segment1D | ConvexPolygon | SimplePolygon
    W: np.ndarray | None         # (m, d)
    b: np.ndarray | None         # (m,)

    @property
    def measure(self) -> float:
        if isinstance(self.cell, Segment1D):
            return self.cell.length
        return self.cell.area

    def affine(self, x):
        """Evaluate the region's affine map at points of shape (N, d)."""
        if self.W is None:
            raise ValueError("region has no affine map (merged cell)")
        return np.asarray(x, dtype=float) @ self.W.T + self.b


@dataclass(frozen=True)
class BoundaryPoint:
    point: np.ndarray
    normal: np.ndarray  # outward; shape (d,)

    @property
    def measure(self) -> float:
        return 1.0  # counting measure: boundary integrals in 1D are sums


@dataclass(frozen=True)
class BoundarySegment:
    start: np.ndarray
    end: np.ndarray
    normal: np.ndarray

    @property
    def measure(self) -> float:
        return float(np.hypot(*(self.end - self.start)))


@dataclass(frozen=True)
class AdaptedMesh:
    domain_cells: tuple
    boundary_cells: tuple
    dim: int
    epoch: int | None = None

    @property
    def domain_measure(self) -> float:
        return sum(c.measure for c in self.domain_cells)

    @property
    def boundary_measure(self) -> float:
        return sum(c.measure for c in self.boundary_cells)

    @property
    def median_cell_size(self) -> float:
        return float(np.median([c.measure for c in self.domain_cells]))


# ---------------------------------------------------------------------------
# domains

@dataclass(frozen=True)
class ConvexDomain:
    """Domain given as a union of interior-disjoint convex parts.

    In 2D the boundary edges are the parts' edge portions not shared with
    another part, each with its outward unit normal.  In 1D the parts are
    segments and the boundary is the set of outer endpoints.
    """

    parts: tuple
    dim: int
    boundary_edges: tuple = field(default=())  # 2D: (p0, p1, normal)

    @staticmethod
    def interval(lo: float, hi: float) -> "ConvexDomain":
        return ConvexDomain(parts=(Segment1D(lo, hi),), dim=1)

    @staticmethod
    def from_polygons(polys) -> "ConvexDomain":
        parts = tuple(p if isinstance(p, ConvexPolygon) else ConvexPolygon(p)
                      for p in polys)
        edges = _outer_boundary(parts)
        return ConvexDomain(parts=parts, dim=2, boundary_edges=edges)

    @staticmethod
    def box(lo=(-1.0, -1.0), hi=(1.0, 1.0)) -> "ConvexDomain":
        (x0, y0), (x1, y1) = lo, hi
        return ConvexDomain.from_polygons(
            [[[x0, y0], [x1, y0], [x1, y1], [x0, y1]]])

    @property
    def measure(self) -> float:
        if self.dim == 1:
            return sum(p.length for p in self.parts)
        return sum(p.area for p in self.parts)

    @property
    def boundary_measure(self) -> float:
        if self.dim == 1:
            return float(len(self._outer_points()))
        return sum(float(np.hypot(*(p1 - p0)))
                   for p0, p1, _ in self.boundary_edges)

    def _outer_points(self):
        """1D boundary: endpoints not shared between two parts."""
        eps = 1e-12 * max(p.length for p in self.parts)
        ends: list[float] = []
        for p in self.parts:
            ends.extend((p.lo, p.hi))
        outer = []
        for e in ends:
            if sum(1 for o in ends if abs(o - e) <= eps) == 1:
                outer.append(e)
        return sorted(outer)

    def boundary_point_regions(self):
        eps = 1e-12 * max(p.length for p in self.parts)
        out = []
        for x in self._outer_points():
            # an outer 'lo' endpoint faces left, an outer 'hi' endpoint right
            left = any(abs(p.lo - x) <= eps for p in self.parts)
            n = -1.0 if left else 1.0
            out.append(BoundaryPoint(point=np.array([x]), normal=np.array([n])))
        return out


def _outer_boundary(parts) -> tuple:
    """Part edges minus the portions shared with other parts, with normals."""
    diam = max(p.diameter for p in parts)
    tol = REL_TOL * diam
    edges_all = [p.edges() for p in parts]
    out = []
    for i, edges in enumerate(edges_all):
        for k, (a0, a1) in enumerate(edges):
            d = a1 - a0
            ln = float(np.hypot(*d))
            if ln <= tol:
                continue
            u = d / ln
            covered: list[tuple[float, float]] = []
            for j, other_edges in enumerate(edges_all):
                if j == i:
                    continue
                for ov in collinear_overlaps([(a0, a1)], other_edges, tol):
                    _, _, p, q = ov
                    covered.append((float(np.dot(p - a0, u)),
                                    float(np.dot(q - a0, u))))
            # subtract covered intervals from [0, ln]
            free = [(0.0, ln)]
            for c0, c1 in covered:
                nxt = []
                for f0, f1 in free:
                    lo, hi = max(f0, min(c0, c1)), min(f1, max(c0, c1))
                    if hi - lo > tol:
                        if lo - f0 > tol:
                            nxt.append((f0, lo))
                        if f1 - hi > tol:
                            nxt.append((hi, f1))
                    else:
                        nxt.append((f0, f1))
                free = nxt
            # CCW polygon: outward normal is the right-hand normal of the edge
            normal = np.array([u[1], -u[0]])
            for f0, f1 in free:
                out.append((a0 + f0 * u, a0 + f1 * u, normal))
    return tuple(out)


# ---------------------------------------------------------------------------
# region cutting

def _compose_activation(region: LinearRegion, surrogate: CPWLFunction,
                        probe) -> LinearRegion:
    """Compose the region map with the surrogate, coefficients looked up at
    an interior probe point."""
    h = region.W @ np.asarray(probe, dtype=float) + region.b
    alpha, beta = surrogate.coefficients(h)
    return LinearRegion(cell=region.cell, W=alpha[:, None] * region.W,
                        b=alpha * region.b + beta)


def cut_region_1d(region: LinearRegion, surrogate: CPWLFunction):
    """Cut a 1D region at the breakpoint preimages of each map row.

    Cut abscissae use the normalised coordinate
    t = (2 xi - (h(p+) + h(p-))) / (h(p+) - h(p-)), kept only for |t| < 1;
    sub-segment maps are composed with the surrogate coefficients at the
    sub-segment midpoint.
    """
    seg: Segment1D = region.cell
    w = region.W[:, 0]
    h_lo = w * seg.lo + region.b
    h_hi = w * seg.hi + region.b
    bp = surrogate.breakpoints
    tol_t = 1e-12
    cuts: list[float] = []
    for i in range(w.size):
        a, c = h_lo[i], h_hi[i]
        lo, hi = (a, c) if a <= c else (c, a)
        if hi - lo <= 0.0:
            continue  # constant row: no cuts from it
        j0 = np.searchsorted(bp, lo, side="right")
        j1 = np.searchsorted(bp, hi, side="left")
        for xi in bp[j0:j1]:
            t = (2.0 * xi - (c + a)) / (c - a)
            if abs(t) >= 1.0 - tol_t:
                continue  # breakpoint hits an endpoint: zero-width, dropped
            cuts.append(seg.midpoint + 0.5 * t * seg.length)
    cuts.sort()
    tol_x = REL_TOL * seg.length
    knots = [seg.lo]
    for x in cuts:
        if x - knots[-1] > tol_x and seg.hi - x > tol_x:
            knots.append(x)
    knots.append(seg.hi)
    out = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        sub = LinearRegion(cell=Segment1D(lo, hi), W=region.W, b=region.b)
        out.append(_compose_activation(sub, surrogate,
                                       np.array([0.5 * (lo + hi)])))
    return out


class _VertexPool:
    """Snap nearly identical points to one id (grid hash + 3x3 bin search)."""

    def __init__(self, tol: float):
        self.tol = max(tol, 1e-300)
        self.grid: dict[tuple[int, int], list[int]] = {}
        self.coords: list[np.ndarray] = []

    def add(self, p) -> int:
        p = np.asarray(p, dtype=float)
        cx, cy = int(math.floor(p[0] / self.tol)), int(math.floor(p[1] / self.tol))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for idx in self.grid.get((cx + dx, cy + dy), ()):
                    if np.hypot(*(self.coords[idx] - p)) <= self.tol:
                        return idx
        idx = len(self.coords)
        self.coords.append(p)
        self.grid.setdefault((cx, cy), []).append(idx)
        return idx


def _extract_faces(coords: list[np.ndarray], adjacency: dict[int, set],
                   area_tol: float):
    """Bounded faces of a planar straight-line subdivision.

    Neighbours are sorted by angle; from directed edge (u, v) the face
    continues with the neighbour of v just clockwise of the back edge, which
    traverses every interior face counter-clockwise.  The single clockwise
    (negative-area) cycle is the outer face and is dropped.
    """
    order: dict[int, list[int]] = {}
    for u, nbs in adjacency.items():
        pu = coords[u]
        order[u] = sorted(nbs, key=lambda v: math.atan2(coords[v][1] - pu[1],
                                                        coords[v][0] - pu[0]))
    visited: set[tuple[int, int]] = set()
    faces = []
    for u0 in adjacency:
        for v0 in adjacency[u0]:
            if (u0, v0) in visited:
                continue
            cycle = [u0]
            u, v = u0, v0
            for _ in range(4 * len(visited) + 4 * sum(len(s) for s in adjacency.values()) + 8):
                visited.add((u, v))
                cycle.append(v)
                nbs = order[v]
                k = nbs.index(u)
                u, v = v, nbs[k - 1]
                if (u, v) == (u0, v0):
                    break
            else:
                raise MeshError("face walk failed to close")
            pts = np.asarray([coords[i] for i in cycle[:-1]])
            if len(pts) >= 3 and polygon_area(pts) > area_tol:
                faces.append(pts)
    return faces


def cut_region_2d(region: LinearRegion, surrogate: CPWLFunction):
    """Cut a convex 2D region along the breakpoint lines of each map row.

    (i) clip every line w_i . x + b_i = xi against the cell (edge-coincident
    lines do not cut); (ii) intersect the chords pairwise, skipping pairs
    from the same row, which are parallel; (iii) assemble the subdivision
    graph from the cell edges, the chord endpoints and the crossings;
    (iv) read off its bounded faces and compose each with the surrogate
    coefficients at the face centroid.
    """
    poly: ConvexPolygon = region.cell
    W, b = region.W, region.b
    verts = poly.vertices
    diam = poly.diameter
    tol = REL_TOL * diam
    bp = surrogate.breakpoints

    H = verts @ W.T + b  # (nv, m): each row's range over the cell vertices
    chords = []          # (row, p0, p1)
    for i in range(W.shape[0]):
        lo, hi = float(H[:, i].min()), float(H[:, i].max())
        if hi - lo <= 0.0:
            continue
        j0 = np.searchsorted(bp, lo, side="right")
        j1 = np.searchsorted(bp, hi, side="left")
        for xi in bp[j0:j1]:
            got = clip_line(poly, (W[i], xi - b[i]))
            if got is not None:
                chords.append((i, got[0], got[1]))

    if not chords:
        return [_compose_activation(region, surrogate, poly.centroid)]

    # (ii) pairwise chord crossings (same-row chords are parallel: skipped)
    crossings: list[list[np.ndarray]] = [[] for _ in chords]
    for a in range(len(chords)):
        ra, a0, a1 = chords[a]
        for bidx in range(a + 1, len(chords)):
            rb, b0, b1 = chords[bidx]
            if rb == ra:
                continue
            q = segment_intersection((a0, a1), (b0, b1))
            if q is not None:
                crossings[a].append(q)
                crossings[bidx].append(q)

    # (iii) subdivision graph
    pool = _VertexPool(tol)
    vid = [pool.add(v) for v in verts]
    adjacency: dict[int, set] = {}

    def connect(i, j):
        if i == j:
            return
        adjacency.setdefault(i, set()).add(j)
        adjacency.setdefault(j, set()).add(i)

    chord_ids = []
    for (row, p0, p1) in chords:
        chord_ids.append((pool.add(p0), pool.add(p1)))

    # cell edges, split at the chord endpoints that lie on them
    nv = len(verts)
    endpoint_pts = [(pool.coords[i0], i0) for i0, _ in chord_ids] \
                 + [(pool.coords[i1], i1) for _, i1 in chord_ids]
    for e in range(nv):
        a, c = verts[e], verts[(e + 1) % nv]
        d = c - a
        ln2 = float(np.dot(d, d))
        on_edge = []
        for p, idx in endpoint_pts:
            t = float(np.dot(p - a, d)) / ln2
            if -REL_TOL < t < 1.0 + REL_TOL:
                if abs((p[0] - a[0]) * d[1] - (p[1] - a[1]) * d[0]) <= tol * math.sqrt(ln2):
                    on_edge.append((t, idx))
        chain = [vid[e]]
        for _, idx in sorted(on_edge):
            if idx != chain[-1] and idx != vid[(e + 1) % nv]:
                chain.append(idx)
        chain.append(vid[(e + 1) % nv])
        for i, j in zip(chain[:-1], chain[1:]):
            connect(i, j)

    # chord arcs, split at their interior crossings
    for (row, p0, p1), (i0, i1), pts in zip(chords, chord_ids, crossings):
        d = p1 - p0
        ln2 = float(np.dot(d, d))
        interior = sorted((float(np.dot(q - p0, d)) / ln2, pool.add(q))
                          for q in pts)
        chain = [i0]
        for _, idx in interior:
            if idx != chain[-1] and idx != i1:
                chain.append(idx)
        chain.append(i1)
        for i, j in zip(chain[:-1], chain[1:]):
            connect(i, j)

    faces = _extract_faces(pool.coords, adjacency,
                           area_tol=1e-12 * diam * diam)
    out = []
    total = 0.0
    for pts in faces:
        try:
            cell = ConvexPolygon(pts)
        except PolygonError as exc:
            if abs(polygon_area(pts)) <= 1e-10 * diam * diam:
                continue  # numerically void sliver
            raise MeshError(f"face is not a valid convex cell: {exc}") from exc
        total += cell.area
        sub = LinearRegion(cell=cell, W=W, b=b)
        out.append(_compose_activation(sub, surrogate, cell.centroid))
    if abs(total - poly.area) > 1e-9 * max(poly.area, diam * diam):
        raise MeshError(
            f"cut lost area: faces {total} vs cell {poly.area}")
    return out


def _cut_region(region: LinearRegion, surrogate: CPWLFunction):
    if isinstance(region.cell, Segment1D):
        return cut_region_1d(region, surrogate)
    return cut_region_2d(region, surrogate)


# ---------------------------------------------------------------------------
# the layer walk

def _initial_regions(domain: ConvexDomain):
    regions = []
    for part in domain.parts:
        if domain.dim == 1:
            regions.append(LinearRegion(cell=part, W=np.eye(1), b=np.zeros(1)))
        else:
            regions.append(LinearRegion(cell=part, W=np.eye(2), b=np.zeros(2)))
    return regions


def _walk_layers(regions, weights, biases, surrogate: CPWLFunction):
    """Run the per-layer compose/cut/compose loop on initial regions."""
    n_layers = len(weights)
    for k in range(n_layers):
        Wk, bk = weights[k], biases[k]
        composed = [replace(r, W=Wk @ r.W, b=Wk @ r.b + bk) for r in regions]
        if k == n_layers - 1:
            regions = composed  # no activation after the last linear map
            break
        nxt = []
        for idx, r in enumerate(composed):
            try:
                nxt.extend(_cut_region(r, surrogate))
            except (MeshError, PolygonError, ValueError) as exc:
                raise MeshError(
                    f"layer {k + 1}, region {idx}: {exc}") from exc
        regions = nxt
    return regions


def adaptive_mesh(params, surrogate: CPWLFunction, domain: ConvexDomain,
                  epoch: int | None = None) -> AdaptedMesh:
    """Mesh of maximal regions where the surrogate network is affine.

    Runs independently on every convex part of the domain and concatenates;
    boundary cells are produced by :func:`boundary_mesh`.
    """
    if params.architecture[0] != domain.dim:
        raise ValueError("network input width does not match the domain "
                         f"dimension ({params.architecture[0]} vs {domain.dim})")
    cells = tuple(_walk_layers(_initial_regions(domain), params.weights,
                               params.biases, surrogate))
    bcells = tuple(boundary_mesh(params, surrogate, domain))
    return AdaptedMesh(domain_cells=cells, boundary_cells=bcells,
                       dim=domain.dim, epoch=epoch)


def boundary_mesh(params, surrogate: CPWLFunction, domain: ConvexDomain):
    """Boundary cells adapted to the surrogate network.

    1D domains return the two endpoint regions.  In 2D every boundary edge is
    parametrised by arclength and the network pulled back onto it, which
    reduces the cutting to the 1D case; the sub-segments inherit the edge's
    outward normal.
    """
    if domain.dim == 1:
        return list(domain.boundary_point_regions())
    out = []
    for p0, p1, normal in domain.boundary_edges:
        d = p1 - p0
        length = float(np.hypot(*d))
        u = d / length
        init = LinearRegion(cell=Segment1D(0.0, length),
                            W=u.reshape(2, 1), b=p0.astype(float))
        regions = _walk_layers([init], params.weights, params.biases,
                               surrogate)
        for r in regions:
            seg: Segment1D = r.cell
            out.append(BoundarySegment(start=p0 + seg.lo * u,
                                       end=p0 + seg.hi * u, normal=normal))
    return out


# ---------------------------------------------------------------------------
# merging small cells

def merge_small_cells(mesh: AdaptedMesh, threshold_fraction: float) -> AdaptedMesh:
    """Merge cells smaller than a fraction of the median cell size.

    Small cells are absorbed one at a time, always into the largest
    neighbour; a cell with no neighbour stays.  Merged aggregates drop their
    affine map (they are integration cells only).  The median is that of the
    input mesh and is not updated while merging.
    """
    if threshold_fraction < 0:
        raise ValueError("threshold_fraction must be >= 0")
    if threshold_fraction == 0 or len(mesh.domain_cells) <= 1:
        return mesh
    if mesh.dim == 1:
        cells = _merge_1d(list(mesh.domain_cells), threshold_fraction)
        bcells = mesh.boundary_cells
    else:
        cells = _merge_2d(list(mesh.domain_cells), threshold_fraction)
        bcells = tuple(_merge_boundary(list(mesh.boundary_cells),
                                       threshold_fraction))
    return AdaptedMesh(domain_cells=tuple(cells), boundary_cells=bcells,
                       dim=mesh.dim, epoch=mesh.epoch)


def _merge_1d(cells, fraction):
    sizes = [c.measure for c in cells]
    target = fraction * float(np.median(sizes))
    scale = max(c.cell.hi for c in cells) - min(c.cell.lo for c in cells)
    tol = REL_TOL * scale
    items = [(c.cell.lo, c.cell.hi, c) for c in cells]
    items.sort(key=lambda t: t[0])

    def neighbours(k):
        lo, hi, _ = items[k]
        nbs = []
        for j, (l2, h2, _) in enumerate(items):
            if j != k and (abs(h2 - lo) <= tol or abs(l2 - hi) <= tol):
                nbs.append(j)
        return nbs

    while True:
        order = sorted(range(len(items)), key=lambda k: items[k][1] - items[k][0])
        merged = False
        for k in order:
            lo, hi, reg = items[k]
            if hi - lo >= target:
                break
            nbs = neighbours(k)
            if not nbs:
                continue
            j = max(nbs, key=lambda j: items[j][1] - items[j][0])
            l2, h2, _ = items[j]
            fused = LinearRegion(cell=Segment1D(min(lo, l2), max(hi, h2)),
                                 W=None, b=None)
            items = [it for t, it in enumerate(items) if t not in (k, j)]
            items.append((fused.cell.lo, fused.cell.hi, fused))
            items.sort(key=lambda t: t[0])
            merged = True
            break
        if not merged:
            break
    return [reg for _, _, reg in items]


def _cell_edges(cell):
    v = cell.vertices
    return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]


def _merge_2d(cells, fraction):
    target = fraction * float(np.median([c.measure for c in cells]))
    diam = max(c.cell.diameter for c in cells)
    tol = REL_TOL * diam
    polys = [c.cell for c in cells]
    maps = [(c.W, c.b) for c in cells]

    def bbox(p):
        v = p.vertices
        return v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max()

    boxes = [bbox(p) for p in polys]

    def neighbours(k):
        x0, x1, y0, y1 = boxes[k]
        nbs = []
        for j in range(len(polys)):
            if j == k:
                continue
            u0, u1, v0, v1 = boxes[j]
            if u0 > x1 + tol or u1 < x0 - tol or v0 > y1 + tol or v1 < y0 - tol:
                continue
            if collinear_overlaps(_cell_edges(polys[k]), _cell_edges(polys[j]),
                                  tol):
                nbs.append(j)
        return nbs

    blocked: set[int] = set()
    while True:
        order = sorted(range(len(polys)), key=lambda k: polys[k].area)
        progressed = False
        for k in order:
            if polys[k].area >= target or k in blocked:
                continue
            nbs = neighbours(k)
            if not nbs:
                blocked.add(k)
                continue
            j = max(nbs, key=lambda j: polys[j].area)
            try:
                fused = merge_adjacent(polys[k], polys[j])
            except PolygonError:
                blocked.add(k)  # pinched union: leave this cell alone
                continue
            keepP = [p for t, p in enumerate(polys) if t not in (k, j)]
            keepM = [m for t, m in enumerate(maps) if t not in (k, j)]
            polys = keepP + [fused]
            maps = keepM + [(None, None)]
            boxes = [bbox(p) for p in polys]
            blocked = set()
            progressed = True
            break
        if not progressed:
            break
    return [LinearRegion(cell=p, W=m[0], b=m[1]) for p, m in zip(polys, maps)]


def _merge_boundary(bcells, fraction):
    if not bcells or isinstance(bcells[0], BoundaryPoint):
        return bcells
    target = fraction * float(np.median([c.measure for c in bcells]))
    scale = max(c.measure for c in bcells)
    tol = REL_TOL * max(scale, 1e-300)

    def same_line(a, b):
        da = a.end - a.start
        db = b.end - b.start
        cr = da[0] * db[1] - da[1] * db[0]
        return abs(cr) <= 1e-9 * float(np.hypot(*da)) * float(np.hypot(*db))

    items = list(bcells)
    while True:
        order = sorted(range(len(items)), key=lambda k: items[k].measure)
        merged = False
        for k in order:
            c = items[k]
            if c.measure >= target:
                break
            nbs = [j for j, o in enumerate(items)
                   if j != k and same_line(c, o)
                   and (np.hypot(*(o.start - c.end)) <= tol
                        or np.hypot(*(o.end - c.start)) <= tol)]
            if not nbs:
                continue
            j = max(nbs, key=lambda j: items[j].measure)
            o = items[j]
            if np.hypot(*(o.start - c.end)) <= tol:
                fused = BoundarySegment(start=c.start, end=o.end, normal=c.normal)
            else:
                fused = BoundarySegment(start=o.start, end=c.end, normal=c.normal)
            items = [it for t, it in enumerate(items) if t not in (k, j)]
            items.append(fused)
            merged = True
            break
        if not merged:
            break
    return items


# ---------------------------------------------------------------------------
# quadrature-ready decomposition

def quadrature_ready_cells(mesh: AdaptedMesh):
    """Split the domain cells into segments, triangles and convex quadrangles.

    Convex cells with more than four vertices use the hard splitting rules;
    non-convex merged aggregates are ear-clipped first.  Returns a list of
    (cell, measure) pairs.
    """
    out = []
    for region in mesh.domain_cells:
        cell = region.cell
        if isinstance(cell, Segment1D):
            out.append((cell, cell.length))
            continue
        if isinstance(cell, ConvexPolygon):
            pieces = [cell] if len(cell) <= 4 else split_convex(cell)
        else:
            try:
                convex = ConvexPolygon(cell.vertices)
                pieces = [convex] if len(convex) <= 4 else split_convex(convex)
            except PolygonError:
                pieces = ear_clip(cell)
        for p in pieces:
            out.append((p, p.area))
    return out


def mesh_to_json(mesh: AdaptedMesh, order: int | None = None) -> str:
    """Dump the mesh cells (and point counts if an order is given)."""
    from .quadrature import points_per_cell

    cells = []
    for region in mesh.domain_cells:
        cell = region.cell
        if isinstance(cell, Segment1D):
            entry = {"kind": "segment", "vertices": [cell.lo, cell.hi]}
            if order is not None:
                entry["points"] = points_per_cell("segment", order)
        else:
            entry = {"kind": "polygon", "vertices": cell.vertices.tolist()}
            if order is not None:
                sub = quadrature_ready_cells(
                    AdaptedMesh((region,), (), mesh.dim))
                entry["points"] = sum(
                    points_per_cell("triangle" if len(c) == 3 else "quadrangle",
                                    order)
                    for c, _ in sub)
        cells.append(entry)
    return json.dumps({"dim": mesh.dim, "epoch": mesh.epoch, "cells": cells})
