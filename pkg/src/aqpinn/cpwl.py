"""Continuous piecewise-linear surrogates of a smooth activation.

A surrogate is built by connecting tangents to the activation: tangents at
the inflection points and at the two slant asymptotes are mandatory, the
remaining tangent abscissae are free.  Consecutive tangents inside an
interval of strict convexity/concavity intersect exactly once, and those
intersections are the breakpoints of the surrogate.  The best surrogate in
the L2 sense is found by descending on the free abscissae.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .activation import SmoothActivation

__all__ = [
    "CPWLFunction",
    "tangent",
    "tangent_intersection",
    "build_cpwl",
    "equidistribute_points",
    "best_l2_fit",
    "l2_distance",
]

_INF = math.inf


@dataclass(frozen=True)
class CPWLFunction:
    """Piecewise-linear function given by sorted breakpoints and per-piece maps.

    Piece ``j`` covers ``(breakpoints[j-1], breakpoints[j])`` with value
    ``slopes[j] * x + intercepts[j]``; pieces 0 and K are unbounded.
    """

    breakpoints: np.ndarray          # shape (K,), strictly increasing
    slopes: np.ndarray               # shape (K+1,)
    intercepts: np.ndarray           # shape (K+1,)
    tangent_points: tuple[float, ...] = field(default=())  # provenance, +-inf included

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        sl = np.asarray(self.slopes, dtype=float)
        ic = np.asarray(self.intercepts, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)
        object.__setattr__(self, "intercepts", ic)
        if bp.ndim != 1 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if sl.shape != ic.shape or sl.shape != (bp.size + 1,):
            raise ValueError("need exactly one (slope, intercept) pair per piece")

    @property
    def num_pieces(self) -> int:
        return self.slopes.size

    def piece_index(self, x):
        """Index of the piece containing ``x`` (binary search)."""
        return np.searchsorted(self.breakpoints, np.asarray(x, dtype=float),
                               side="right")

    def eval_with_piece(self, x):
        """Value and piece index at ``x``."""
        x = np.asarray(x, dtype=float)
        j = self.piece_index(x)
        return self.slopes[j] * x + self.intercepts[j], j

    def __call__(self, x):
        return self.eval_with_piece(x)[0]

    def derivative(self, x):
        """Slope of the piece containing ``x``."""
        return self.slopes[self.piece_index(x)]

    def coefficients(self, x):
        """(slope, intercept) arrays of the pieces containing ``x``."""
        j = self.piece_index(x)
        return self.slopes[j], self.intercepts[j]

    def to_json(self) -> str:
        return json.dumps({
            "breakpoints": self.breakpoints.tolist(),
            "slopes": self.slopes.tolist(),
            "intercepts": self.intercepts.tolist(),
            "tangent_points": [str(t) if math.isinf(t) else t
                               for t in self.tangent_points],
        })

    @classmethod
    def from_json(cls, text: str) -> "CPWLFunction":
        data = json.loads(text)
        pts = tuple(float(t) for t in data.get("tangent_points", ()))
        return cls(np.asarray(data["breakpoints"]), np.asarray(data["slopes"]),
                   np.asarray(data["intercepts"]), pts)


def tangent(act: SmoothActivation, x: float) -> tuple[float, float]:
    """Tangent line (slope, intercept) to the activation at ``x``.

    ``x = +-inf`` returns the slant asymptote on that side.
    """
    if math.isinf(x):
        return act.asymptote(x)
    s = float(act.d1(x))
    return s, float(act.eval(x)) - x * s


def tangent_intersection(act: SmoothActivation, x: float, y: float) -> float:
    """Abscissa where the tangents at ``x < y`` intersect.

    Both points must lie in (the closure of) one interval of strict
    convexity/concavity; the tangents must not be parallel.
    """
    if not x < y:
        raise ValueError(f"need x < y, got {x}, {y}")
    for z in act.inflection_zeros:
        if x < z < y:
            raise ValueError(
                f"tangents at {x} and {y} straddle the inflection at {z}")
    ax, bx = tangent(act, x)
    ay, by = tangent(act, y)
    scale = max(abs(ax), abs(ay), 1e-30)
    if abs(ay - ax) <= 1e-14 * scale:
        raise ValueError(f"tangents at {x} and {y} are parallel")
    c = (by - bx) / (ax - ay)
    if not (x < c < y):
        raise ValueError(f"tangent intersection {c} escaped ({x}, {y})")
    return c


def _mandatory_points(act: SmoothActivation) -> tuple[float, ...]:
    return (-_INF, *act.inflection_zeros, _INF)


def min_pieces(act: SmoothActivation) -> int:
    """Smallest admissible surrogate size (tangents at inflections and infinity)."""
    return len(_mandatory_points(act))


def build_cpwl(act: SmoothActivation, tangent_points) -> CPWLFunction:
    """Connect tangents at the given sorted extended-real abscissae.

    The list must contain -inf, +inf and every inflection point; remaining
    entries are free points and must avoid the inflections.  The number of
    pieces equals the number of tangent points.
    """
    pts = [float(t) for t in tangent_points]
    if sorted(pts) != pts or len(set(pts)) != len(pts):
        raise ValueError("tangent points must be strictly increasing")
    mandatory = _mandatory_points(act)
    for m in mandatory:
        if m not in pts:
            raise ValueError(f"mandatory tangent point {m} missing")
    lines = [tangent(act, p) for p in pts]
    breaks = [tangent_intersection(act, pts[k], pts[k + 1])
              for k in range(len(pts) - 1)]
    return CPWLFunction(
        breakpoints=np.asarray(breaks),
        slopes=np.asarray([a for a, _ in lines]),
        intercepts=np.asarray([b for _, b in lines]),
        tangent_points=tuple(pts),
    )


# ---------------------------------------------------------------------------
# quadrature helpers (panels between breakpoints, mapped tails at infinity)

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = roots_legendre(n)
    return _GL_CACHE[n]


def _integrate_panel(f, a: float, b: float, points: int = 24) -> float:
    x, w = _gl(points)
    half = 0.5 * (b - a)
    return half * float(np.dot(w, f(0.5 * (a + b) + half * x)))


def _integrate_tail(f, anchor: float, side: int, points: int = 48) -> float:
    """Integral of ``f`` over (anchor, +inf) or (-inf, anchor) via x = t/(1-t)."""
    x, w = _gl(points)
    t = 0.5 * (x + 1.0)           # nodes in (0, 1)
    wt = 0.5 * w
    s = t / (1.0 - t)
    ds = 1.0 / (1.0 - t) ** 2
    xs = anchor + side * s
    return float(np.dot(wt, f(xs) * ds))


def _piece_bounds(breaks: np.ndarray) -> list[tuple[float, float]]:
    edges = [-_INF, *breaks.tolist(), _INF]
    return [(edges[j], edges[j + 1]) for j in range(len(edges) - 1)]


def _check_asymptotic(act: SmoothActivation, f: CPWLFunction):
    lo_slope, _ = act.asymptote_neg
    hi_slope, _ = act.asymptote_pos
    if (abs(f.slopes[0] - lo_slope) > 1e-12
            or abs(f.slopes[-1] - hi_slope) > 1e-12):
        raise ValueError("unbounded pieces must match the asymptote slopes "
                         "for the L2 distance to be finite")


def l2_distance(act: SmoothActivation, f: CPWLFunction,
                norm: str = "function") -> float:
    """L2(R) distance between the activation (or its derivative) and ``f``.

    The integrand is smooth between breakpoints, so each finite piece gets a
    Gauss panel; the unbounded pieces are mapped to (0, 1) and integrated
    there, which captures the tails to near machine precision.
    """
    if norm == "function":
        def sq(x, j):
            return (act.eval(x) - (f.slopes[j] * x + f.intercepts[j])) ** 2
    elif norm == "derivative":
        def sq(x, j):
            return (act.d1(x) - f.slopes[j]) ** 2
    else:
        raise ValueError(f"norm must be 'function' or 'derivative', got {norm!r}")
    _check_asymptotic(act, f)
    total = 0.0
    bounds = _piece_bounds(f.breakpoints)
    for j, (a, b) in enumerate(bounds):
        if math.isinf(a):
            total += _integrate_tail(lambda x, j=j: sq(x, j), b, side=-1)
        elif math.isinf(b):
            total += _integrate_tail(lambda x, j=j: sq(x, j), a, side=+1)
        else:
            # two panels per piece keep long pieces accurate
            mid = 0.5 * (a + b)
            total += _integrate_panel(lambda x, j=j: sq(x, j), a, mid)
            total += _integrate_panel(lambda x, j=j: sq(x, j), mid, b)
    return math.sqrt(max(total, 0.0))


# ---------------------------------------------------------------------------
# equidistribution of |rho''|^e (initial guess for the fit)

def equidistribute_points(act: SmoothActivation, interval, count: int,
                          exponent: float):
    """Points splitting ``interval`` into pieces of equal |rho''|^exponent mass.

    The cumulative mass is integrated numerically and inverted by root
    finding.  ``interval`` may be unbounded; the activation must not be
    linear on it.
    """
    a, b = float(interval[0]), float(interval[1])
    if not 0.0 < exponent <= 1.0:
        raise ValueError("exponent must lie in (0, 1]")
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return []

    def mass_density(x):
        return abs(float(act.d2(x))) ** exponent

    def _quad(lo, hi):
        # |rho''|^e can decay slowly (e.g. x^-1.2); QUADPACK grumbles about
        # roundoff near its own tolerance while the value is fine at the
        # 1e-9 relative level the construction needs.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            val, _ = quad(mass_density, lo, hi, epsabs=0.0, epsrel=1e-10,
                          limit=500)
        return val

    total = _quad(a, b)
    if total <= 0.0:
        raise ValueError("second derivative vanishes on the interval")

    def cumulative(x):
        return _quad(a, x)

    # finite bracket containing all the quantile points
    lo = a
    if math.isinf(a):
        lo = min(-1.0, b - 1.0 if math.isfinite(b) else -1.0)
        while cumulative(lo) > total / (count + 1) * 0.5:
            lo *= 2.0
    hi = b
    if math.isinf(b):
        hi = max(1.0, a + 1.0 if math.isfinite(a) else 1.0)
        while total - cumulative(hi) > total / (count + 1) * 0.5:
            hi *= 2.0

    points = []
    left = lo
    for k in range(1, count + 1):
        target = k * total / (count + 1)
        xk = brentq(lambda x: cumulative(x) - target, left, hi,
                    xtol=1e-13, rtol=1e-15)
        points.append(float(xk))
        left = xk
    return points


# ---------------------------------------------------------------------------
# best L2 fit over the free tangent abscissae

def _tangent_set(act: SmoothActivation, free) -> list[float]:
    pts = sorted([*free, *act.inflection_zeros])
    return [-_INF, *pts, _INF]


def _objective_and_gradient(act: SmoothActivation, free: np.ndarray):
    """Squared L2 objective and its gradient w.r.t. the free abscissae.

    The integrand is continuous at the breakpoints, so moving-boundary terms
    cancel and dJ/ds_k = -2 rho''(s_k) * int over piece k of
    (rho - T_k)(x - s_k).
    """
    pts = _tangent_set(act, free)
    f = build_cpwl(act, pts)
    free_set = {float(s) for s in free}
    bounds = _piece_bounds(f.breakpoints)
    J = 0.0
    grads = {s: 0.0 for s in free_set}
    for j, (a, b) in enumerate(bounds):
        sj, ij = f.slopes[j], f.intercepts[j]

        def resid(x):
            return act.eval(x) - (sj * x + ij)

        point = pts[j]
        is_free = math.isfinite(point) and float(point) in free_set
        if math.isinf(a):
            J += _integrate_tail(lambda x: resid(x) ** 2, b, side=-1)
        elif math.isinf(b):
            J += _integrate_tail(lambda x: resid(x) ** 2, a, side=+1)
        else:
            mid = 0.5 * (a + b)
            J += _integrate_panel(lambda x: resid(x) ** 2, a, mid)
            J += _integrate_panel(lambda x: resid(x) ** 2, mid, b)
            if is_free:
                g = 0.0
                g += _integrate_panel(lambda x: resid(x) * (x - point), a, mid)
                g += _integrate_panel(lambda x: resid(x) * (x - point), mid, b)
                grads[float(point)] += -2.0 * float(act.d2(point)) * g
    grad = np.array([grads[float(s)] for s in free])
    return J, grad


def _valid_free(act: SmoothActivation, free: np.ndarray) -> bool:
    if np.any(np.diff(free) <= 0):
        return False
    zeros = act.inflection_zeros
    for s in free:
        if not math.isfinite(s):
            return False
        if any(abs(s - z) < 1e-12 for z in zeros):
            return False
    try:
        f = build_cpwl(act, _tangent_set(act, free))
    except ValueError:
        return False
    return bool(np.all(np.diff(f.breakpoints) > 0))


def _symmetrize(free: np.ndarray) -> np.ndarray:
    # families here are symmetric around the origin: the mirrored sorted set
    # is -reversed(free)
    return 0.5 * (free - free[::-1])


def _initial_free_points(act: SmoothActivation, n_free: int):
    intervals = act.compatible_intervals()
    k = len(intervals)
    per = [n_free // k] * k
    for i in range(n_free - sum(per)):
        per[-1 - i] += 1
    free = []
    for (a, b), m in zip(intervals, per):
        if m > 0:
            free.extend(equidistribute_points(act, (a, b), m, exponent=0.4))
    return np.asarray(sorted(free))


def best_l2_fit(act: SmoothActivation, pieces: int,
                max_iter: int = 10_000, tol: float = 1e-12) -> CPWLFunction:
    """Best L2(R) surrogate with the given number of linear pieces.

    Free abscissae start at the equidistribution of |rho''|^(2/5) and descend
    along the analytic gradient with a backtracking line search; steps that
    break the ordering or leave the compatible intervals are rejected.  When
    the configuration is symmetric the iterates are kept exactly symmetric.
    """
    lo = min_pieces(act)
    if pieces < lo:
        raise ValueError(f"{act.name} needs at least {lo} pieces, got {pieces}")
    n_free = pieces - lo
    if n_free == 0:
        return build_cpwl(act, _mandatory_points(act))

    free = _initial_free_points(act, n_free)
    symmetric = np.allclose(free, _symmetrize(free), atol=1e-9)
    if symmetric:
        free = _symmetrize(free)

    J, g = _objective_and_gradient(act, free)
    lr = 0.1 / max(float(np.max(np.abs(g))), 1e-12)
    for _ in range(max_iter):
        accepted = False
        while lr >= 1e-16:
            trial = free - lr * g
            if symmetric:
                trial = _symmetrize(trial)
            if _valid_free(act, trial):
                Jt, gt = _objective_and_gradient(act, trial)
                if Jt <= J - 1e-4 * lr * float(np.dot(g, g)):
                    accepted = True
                    break
            lr *= 0.5
        if not accepted:
            break
        improvement = J - Jt
        free, J, g = trial, Jt, gt
        lr *= 1.25
        if improvement < tol:
            break

    fused = np.asarray(sorted(free))
    keep = np.concatenate([[True], np.diff(fused) > 1e-9])
    if not np.all(keep):
        warnings.warn("fused free tangent points closer than 1e-9; "
                      "the fit has fewer effective pieces", stacklevel=2)
        fused = fused[keep]
    return build_cpwl(act, _tangent_set(act, fused))
