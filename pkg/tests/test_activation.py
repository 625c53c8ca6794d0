import math

import mpmath as mp
import numpy as np
import pytest

from aqpinn.activation import (abse, erf_relu, lncosh_relu, make_activation,
                               tanh_activation)

FAMILIES = {
    "abse": abse,
    "lncosh": lncosh_relu,
    "erf": erf_relu,
}


def _mp_eval(name, eps):
    """High-precision reference implementation for derivative checks."""
    if name == "abse":
        g = mp.mpf(2) * eps
        return lambda x: (x + mp.sqrt(g * g + x * x)) / 2
    if name == "lncosh":
        g = mp.mpf(2) / mp.log(2) * eps
        return lambda x: (x + g * mp.log(2 * mp.cosh(x / g))) / 2
    if name == "erf":
        g = mp.mpf(2) * mp.sqrt(mp.pi) * eps
        return lambda x: (x + x * mp.erf(x / g)
                          + g / mp.sqrt(mp.pi) * mp.exp(-(x / g) ** 2)) / 2
    return mp.tanh


@pytest.mark.parametrize("name", ["abse", "lncosh", "erf", "tanh"])
def test_derivatives_match_high_precision_differences(name):
    # central finite differences computed at 50 significant digits
    act = make_activation(name, 0.05)
    f = _mp_eval(name, mp.mpf("0.05"))
    rng = np.random.default_rng(7)
    xs = rng.uniform(-20, 20, size=20)
    with mp.workdps(50):
        for x in xs:
            for order, deriv in ((1, act.d1), (2, act.d2), (3, act.d3)):
                ref = float(mp.diff(f, mp.mpf(float(x)), order))
                got = float(deriv(x))
                assert abs(got - ref) <= 1e-6 * (abs(ref) + 1e-300) or \
                    abs(got - ref) < 1e-12


def test_abse_closed_form_examples():
    a = abse(0.1)
    assert a.eval(0.0) == pytest.approx(0.1, abs=1e-15)
    assert a.eval(1.7) - a.eval(-1.7) == pytest.approx(1.7, abs=1e-12)
    small = abse(0.01)
    # direct evaluation of the closed form at x = 10
    gamma = 0.02
    expected = 0.5 * (10.0 + math.sqrt(gamma ** 2 + 100.0))
    assert small.eval(10.0) == pytest.approx(expected, abs=1e-14)
    assert abs(small.eval(10.0) - 10.0) < 1e-4  # closer to ReLU than 1e-4


@pytest.mark.parametrize("fam", ["lncosh", "erf"])
def test_zero_value_is_epsilon(fam):
    assert FAMILIES[fam](0.1).eval(0.0) == pytest.approx(0.1, rel=1e-12)


def test_lncosh_symmetry():
    act = lncosh_relu(0.05)
    for x in (0.3, 2.0, 8.0):
        assert act.eval(x) - act.eval(-x) == pytest.approx(x, abs=1e-12)


def test_tanh_metadata():
    t = tanh_activation()
    assert t.d1(0.0) == pytest.approx(1.0)
    assert t.d2(0.0) == pytest.approx(0.0, abs=1e-15)
    assert t.asymptote_pos == (0.0, 1.0)
    assert t.asymptote_neg == (0.0, -1.0)
    assert t.inflection_zeros == (0.0,)


@pytest.mark.parametrize("fam", ["abse", "lncosh", "erf"])
@pytest.mark.parametrize("eps", [1e-3, 1e-2, 1e-1])
def test_sup_distance_to_relu_is_epsilon(fam, eps):
    act = FAMILIES[fam](eps)
    xs = np.linspace(-50, 50, 20001)  # includes 0, where the sup is attained
    relu = np.maximum(xs, 0.0)
    gap = act.eval(xs) - relu
    assert np.all(gap >= -1e-12)                    # lies above ReLU
    assert abs(gap.max() - eps) < 1e-12             # sup distance equals eps


def test_abse_alpha_one_membership():
    # x^3 * rho'' must stay bounded out to |x| = 1e3
    act = abse(0.1)
    xs = np.linspace(-1e3, 1e3, 100001)
    vals = np.abs(xs ** 3 * act.d2(xs))
    assert np.isfinite(vals).all()
    assert vals.max() < 1.0


def test_asymptote_approach_monotone():
    for act in (abse(0.05), lncosh_relu(0.05), erf_relu(0.05),
                tanh_activation()):
        for side in (-1.0, 1.0):
            slope, intercept = act.asymptote(side)
            xs = side * np.linspace(20.0, 60.0, 200)
            gap = np.abs(act.eval(xs) - (slope * xs + intercept))
            # monotone up to the rounding of the affine part (~|x| * eps)
            slack = 1e-13 * np.maximum(1.0, np.abs(xs[1:]))
            assert np.all(np.diff(gap) <= slack)


def test_second_derivative_sign_constant_between_inflections():
    t = tanh_activation()
    xs = np.linspace(-8, -1e-6, 1000)
    assert np.all(t.d2(xs) > 0)
    assert np.all(t.d2(-xs) < 0)
    a = abse(0.02)
    xs = np.linspace(-30, 30, 5000)
    assert np.all(a.d2(xs) > 0)


def test_invalid_epsilon_rejected():
    for fam in FAMILIES.values():
        with pytest.raises(ValueError):
            fam(0.0)
        with pytest.raises(ValueError):
            fam(-1e-3)
    with pytest.raises(ValueError):
        make_activation("selu")
