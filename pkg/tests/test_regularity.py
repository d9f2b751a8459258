"""Doubling, strong-doubling and Poincaré constants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbmlab import build_space
from bbmlab.regularity import doubling_constant, poincare_constant, strong_doubling_constant


def ratio_at(space, x, r):
    return space.ball_mass([x], [2 * r])[0] / space.ball_mass([x], [r])[0]


def test_line5_doubling(line5):
    rep = doubling_constant(line5, R=0.2)
    assert rep.constant == pytest.approx(3.0, rel=1e-12)
    # the constant is attained at the recorded witness and also at (0.5, r = 0.1)
    x, r = rep.witness
    assert ratio_at(line5, x, r) == pytest.approx(rep.constant, rel=1e-12)
    assert ratio_at(line5, 2, 0.1) == pytest.approx(3.0, rel=1e-12)
    assert np.all((rep.radius_set > 0) & (rep.radius_set <= 0.2 * (1 + 1e-12)))


def test_single_atom_doubling_is_one(single):
    assert doubling_constant(single, R=5.0).constant == 1.0


def test_interval_interior_doubling_above_resolution():
    n = 1001
    g = build_space({"kind": "interval_grid", "n": n})
    third = g.where(lambda x: (x >= 1 / 3) & (x <= 2 / 3))
    rep = doubling_constant(g, third, 0.1, r_min=10 / n)
    assert rep.constant <= 2 + 10 / n * 20


def test_line5_strong_doubling(line5):
    rep = strong_doubling_constant(line5, R=0.2, radii=[0.2])
    assert rep.constant == pytest.approx(3.0, rel=1e-12)
    assert rep.witness == (0, 0.2)
    # B(0.1, 0.4) has mass 0.6, the shell (0.15, 0.2] around 0.1 is {0.3}
    assert line5.ball_mass([0], [0.4])[0] == pytest.approx(0.6)


def test_line5_empty_shells_are_flagged(line5):
    rep = strong_doubling_constant(line5, R=0.1, radii=[0.1])
    assert rep.constant == 0.0 and rep.witness is None
    assert rep.flags == [{"radius": 0.1, "empty_shells": 5, "first_atom": 0}]


@pytest.mark.xfail(strict=True, reason="one-cell slack on the shell count keeps the discrete "
                                       "ratio above 8.08 at every resolved radius up to R=0.1")
def test_circle_strong_doubling_within_one_percent_of_eight():
    c = build_space({"kind": "circle_grid", "n": 4000})
    assert strong_doubling_constant(c, R=0.1).constant <= 8 * (1 + 0.01)


def test_circle_strong_doubling_approaches_continuum_value():
    c = build_space({"kind": "circle_grid", "n": 4000})
    vals = [strong_doubling_constant(c, R=0.1, r_min=k / 4000).constant for k in (20, 100, 200)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert 8.0 <= vals[-1] <= 8.0 * 1.02


def test_line5_poincare_finite(line5):
    u = line5.coords
    rep = poincare_constant(line5, None, 0.2, 2.0, 1, [u], h=0.2)
    assert 0 < rep.constant < math.inf
    assert rep.label == "lower bound on C_P"
    # mean oscillation of x on B(0.5, 0.2) is (0.2 + 0 + 0.2) / 3
    ball = line5.ball(2, 0.2).ids
    osc = np.mean(np.abs(u[ball] - u[ball].mean()))
    assert osc == pytest.approx(2 / 15)


def test_poincare_constant_field_is_zero(line5):
    assert poincare_constant(line5, None, 0.4, 1.0, 2, [np.full(5, 7.0)]).constant == 0.0


def test_poincare_zero_gradient_with_oscillation_is_infinite(line5):
    u = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    rep = poincare_constant(line5, None, 0.4, 1.0, 1, [u], h=0.1)
    assert rep.constant == math.inf and rep.flags


def test_interval_poincare_below_one():
    g = build_space({"kind": "interval_grid", "n": 1001})
    x = g.coords
    rep = poincare_constant(g, None, 0.05, 1.0, 1, [x, x ** 2, np.sin(2 * np.pi * x)], h=0.002)
    assert rep.constant <= 1.0


def test_regularity_argument_checks(line5):
    with pytest.raises(ValueError):
        doubling_constant(line5, R=0)
    with pytest.raises(ValueError):
        poincare_constant(line5, None, 0.2, 0.5, 1, [line5.coords])
    with pytest.raises(ValueError):
        poincare_constant(line5, None, 0.2, 1.0, 1, [])


# -- invariants -----------------------------------------------------------------

weights = st.lists(st.floats(0.05, 5.0), min_size=4, max_size=12)


@settings(max_examples=30, deadline=None)
@given(w=weights, c=st.floats(0.01, 100.0))
def test_scale_invariance(w, c):
    n = len(w)
    a = build_space({"kind": "weighted_interval", "n": n, "weights": w})
    b = build_space({"kind": "weighted_interval", "n": n, "weights": [c * v for v in w]})
    u = a.coords ** 2
    for fn in (lambda s: doubling_constant(s, R=0.5).constant,
               lambda s: strong_doubling_constant(s, R=0.5).constant,
               lambda s: poincare_constant(s, None, 0.5, 2.0, 1, [u]).constant):
        assert fn(b) == pytest.approx(fn(a), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(w=weights, R1=st.floats(0.05, 0.5), R2=st.floats(0.05, 0.5))
def test_monotone_in_R(w, R1, R2):
    s = build_space({"kind": "weighted_interval", "n": len(w), "weights": w})
    lo, hi = sorted((R1, R2))
    u = np.cos(3 * s.coords)
    assert doubling_constant(s, R=lo).constant <= doubling_constant(s, R=hi).constant
    assert strong_doubling_constant(s, R=lo).constant <= strong_doubling_constant(s, R=hi).constant
    assert (poincare_constant(s, None, lo, 1.5, 1, [u]).constant
            <= poincare_constant(s, None, hi, 1.5, 1, [u]).constant)


@settings(max_examples=30, deadline=None)
@given(w=weights)
def test_doubling_at_least_one_and_below_strong_doubling(w):
    s = build_space({"kind": "weighted_interval", "n": len(w), "weights": w})
    assert doubling_constant(s, R=0.6).constant >= 1.0
    # on the same (x, r) pairs with nonempty shells, the shell is inside the ball
    radii = s.critical_radii(0.6, (1.0, 2.0, 4.0 / 3.0))
    for r in radii:
        shell = s.ball_masses(r) - s.ball_masses(0.75 * r)
        ok = shell > 0
        if np.any(ok):
            sd = strong_doubling_constant(s, R=0.6, radii=[r]).constant
            d = np.max((s.ball_masses(2 * r) / s.ball_masses(r))[ok])
            assert sd >= d * (1 - 1e-12)
