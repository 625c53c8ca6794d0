"""Smooth activation functions with analytic derivatives and asymptote data.

Each activation is a smoothed rectifier (or tanh) that behaves linearly at
infinity.  Besides the function itself, downstream modules need its first
three derivatives in closed form, its slant asymptotes, and the zeros of the
second derivative: those drive the construction of the piecewise-linear
surrogate and the exact Laplacian/gradient propagation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "SmoothActivation",
    "abse",
    "lncosh_relu",
    "erf_relu",
    "tanh_activation",
    "make_activation",
    "DEFAULT_EPSILON",
]

# Repo choice: the experiments never fix the smoothing scale, so configs that
# omit it fall back to this value.
DEFAULT_EPSILON = 1e-2

Affine = tuple[float, float]  # (slope, intercept)


@dataclass(frozen=True)
class SmoothActivation:
    """A C^2 (here C^inf) activation with derivative and asymptote metadata.

    ``d3`` is not part of the public contract of the mesh/loss modules but is
    required to back-propagate through the Laplacian; it is checked against
    finite differences like ``d1`` and ``d2``.

    Immutable; safe to share across threads.
    """

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    d3: Callable[[np.ndarray], np.ndarray]
    asymptote_neg: Affine
    asymptote_pos: Affine
    inflection_zeros: tuple[float, ...] = ()
    epsilon: float | None = None
    # Decay exponent of |x|^(2+alpha) * rho''(x); math.inf means "any".
    alpha: float = math.inf

    def __call__(self, x):
        return self.eval(x)

    def asymptote(self, side: float) -> Affine:
        """Slant asymptote towards ``-inf`` (side < 0) or ``+inf``."""
        return self.asymptote_neg if side < 0 else self.asymptote_pos

    def compatible_intervals(self) -> list[tuple[float, float]]:
        """Maximal intervals where the second derivative keeps one sign."""
        knots = (-math.inf, *self.inflection_zeros, math.inf)
        return [(knots[i], knots[i + 1]) for i in range(len(knots) - 1)]


def _require_positive_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not epsilon > 0.0:
        raise ValueError(f"smoothing scale must be positive, got {epsilon}")
    return epsilon


def abse(epsilon: float) -> SmoothActivation:
    """Smoothed ReLU built from a regularised absolute value.

    With gamma = 2*epsilon,  rho(x) = (x + sqrt(gamma^2 + x^2)) / 2.
    Asymptotes y = 0 and y = x; rho(0) = epsilon; strictly convex.
    """
    eps = _require_positive_epsilon(epsilon)
    g = 2.0 * eps

    def val(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (x + np.hypot(g, x))

    def d1(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (1.0 + x / np.hypot(g, x))

    def d2(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * g * g / np.hypot(g, x) ** 3

    def d3(x):
        x = np.asarray(x, dtype=float)
        return -1.5 * g * g * x / np.hypot(g, x) ** 5

    return SmoothActivation(
        name="abse", eval=val, d1=d1, d2=d2, d3=d3,
        asymptote_neg=(0.0, 0.0), asymptote_pos=(1.0, 0.0),
        epsilon=eps, alpha=1.0,
    )


def lncosh_relu(epsilon: float) -> SmoothActivation:
    """Smoothed ReLU obtained by integrating a tanh sigmoid.

    With gamma = (2/ln 2)*epsilon,  rho(x) = (x + gamma*ln(2 cosh(x/gamma)))/2.
    """
    eps = _require_positive_epsilon(epsilon)
    g = 2.0 / math.log(2.0) * eps

    def _ln2cosh(t):
        # ln(2 cosh t) = |t| + log1p(exp(-2|t|)), overflow-safe
        a = np.abs(t)
        return a + np.log1p(np.exp(-2.0 * a))

    def val(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (x + g * _ln2cosh(x / g))

    def d1(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (1.0 + np.tanh(x / g))

    def d2(x):
        x = np.asarray(x, dtype=float)
        t = np.tanh(x / g)
        return (1.0 - t * t) / (2.0 * g)

    def d3(x):
        x = np.asarray(x, dtype=float)
        t = np.tanh(x / g)
        return -t * (1.0 - t * t) / (g * g)

    return SmoothActivation(
        name="lncosh", eval=val, d1=d1, d2=d2, d3=d3,
        asymptote_neg=(0.0, 0.0), asymptote_pos=(1.0, 0.0),
        epsilon=eps,
    )


def erf_relu(epsilon: float) -> SmoothActivation:
    """Smoothed ReLU obtained by mollifying the second derivative of ReLU.

    With gamma = 2*sqrt(pi)*epsilon,
    rho(x) = (x + x*erf(x/gamma) + gamma/sqrt(pi)*exp(-(x/gamma)^2)) / 2.
    """
    from scipy.special import erf as _erf

    eps = _require_positive_epsilon(epsilon)
    g = 2.0 * math.sqrt(math.pi) * eps
    spi = math.sqrt(math.pi)

    def val(x):
        x = np.asarray(x, dtype=float)
        t = x / g
        return 0.5 * (x + x * _erf(t) + g / spi * np.exp(-t * t))

    def d1(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (1.0 + _erf(x / g))

    def d2(x):
        x = np.asarray(x, dtype=float)
        t = x / g
        return np.exp(-t * t) / (g * spi)

    def d3(x):
        x = np.asarray(x, dtype=float)
        t = x / g
        return -2.0 * t * np.exp(-t * t) / (g * g * spi)

    return SmoothActivation(
        name="erf", eval=val, d1=d1, d2=d2, d3=d3,
        asymptote_neg=(0.0, 0.0), asymptote_pos=(1.0, 0.0),
        epsilon=eps,
    )


def tanh_activation() -> SmoothActivation:
    """Hyperbolic tangent with its derivative chain and asymptotes y = -1, +1."""

    def val(x):
        return np.tanh(np.asarray(x, dtype=float))

    def d1(x):
        t = np.tanh(np.asarray(x, dtype=float))
        return 1.0 - t * t

    def d2(x):
        t = np.tanh(np.asarray(x, dtype=float))
        return -2.0 * t * (1.0 - t * t)

    def d3(x):
        t = np.tanh(np.asarray(x, dtype=float))
        return (6.0 * t * t - 2.0) * (1.0 - t * t)

    return SmoothActivation(
        name="tanh", eval=val, d1=d1, d2=d2, d3=d3,
        asymptote_neg=(0.0, -1.0), asymptote_pos=(0.0, 1.0),
        inflection_zeros=(0.0,),
    )


_FAMILIES = {
    "abse": abse,
    "lncosh": lncosh_relu,
    "erf": erf_relu,
}


def make_activation(name: str, epsilon: float | None = None) -> SmoothActivation:
    """Build an activation from its config name ('abse', 'lncosh', 'erf', 'tanh')."""
    if name == "tanh":
        return tanh_activation()
    if name in _FAMILIES:
        return _FAMILIES[name](DEFAULT_EPSILON if epsilon is None else epsilon)
    raise ValueError(f"unknown activation {name!r}; expected one of "
                     f"{sorted(_FAMILIES) + ['tanh']}")
