"""Spaces, balls, annuli, enlargements, set distances, measures and averages."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbmlab import Interval, MetricError, SpaceGenerator, SubsetRef, build_space, space_from_json
from conftest import ids_of


def coords(space, S):
    return sorted(round(float(space.coords[i]), 12) for i in S)


# -- construction -------------------------------------------------------------

def test_interval_grid_midpoints(line5):
    assert np.allclose(line5.coords, [0.1, 0.3, 0.5, 0.7, 0.9])
    assert np.allclose(line5.weights, 0.2)
    assert line5.total_mass == pytest.approx(1.0, abs=1e-15)
    assert line5.h_min == pytest.approx(0.2)
    assert line5.diameter == pytest.approx(0.8)


def test_circle_grid_geodesic_distances():
    s = build_space({"kind": "circle_grid", "n": 4})
    d = {round(s.dist(i, j), 12) for i in range(4) for j in range(4) if i != j}
    assert d == {0.25, 0.5}
    assert s.total_mass == 1.0


def test_triangle_violation_names_the_triple():
    m = [[0, 1, 5], [1, 0, 1], [5, 1, 0]]
    with pytest.raises(MetricError, match=r"triangle violation \(1,2,3\)"):
        build_space({"kind": "explicit", "matrix": m})


@pytest.mark.parametrize("matrix,msg", [
    ([[0, 1], [2, 0]], "asymmetry"),
    ([[0, 0], [0, 0]], "distance 0|<= 0"),
    ([[1, 1], [1, 0]], "diagonal"),
])
def test_non_metric_matrices_rejected(matrix, msg):
    with pytest.raises(MetricError, match=msg):
        build_space({"kind": "explicit", "matrix": matrix})


def test_generator_validation():
    with pytest.raises(MetricError):
        build_space({"kind": "interval_grid", "n": 1})
    with pytest.raises(MetricError):
        build_space({"kind": "weighted_interval", "n": 3, "weights": [1, -1, 1]})
    with pytest.raises(MetricError):
        build_space({"kind": "nonsense", "n": 3})


def test_metric_graph_shortest_paths():
    s = build_space({"kind": "metric_graph", "edges": [[0, 1, 1.0], [1, 2, 2.0], [0, 2, 5.0]]})
    assert s.dist(0, 2) == 3.0
    assert s.n == 3


def test_square_grid_and_weighted_interval():
    sq = build_space({"kind": "square_grid", "n": 4})
    assert sq.n == 16 and sq.total_mass == pytest.approx(1.0)
    assert sq.h_min == pytest.approx(0.25)
    wi = build_space({"kind": "weighted_interval", "n": 4, "weights": [1, 2, 0, 1]})
    assert wi.total_mass == pytest.approx(1.0)
    assert list(wi.positive) == [0, 1, 3]


def test_space_json_round_trip():
    doc = {"kind": "interval_grid", "n": 7}
    gen = SpaceGenerator.from_dict(doc)
    assert SpaceGenerator.from_json(json.dumps(gen.to_dict())) == gen
    s = space_from_json(json.dumps(gen.to_dict()))
    assert s.n == 7 and np.allclose(s.coords, (np.arange(7) + 0.5) / 7)


def test_single_atom_space(single):
    assert single.n == 1 and single.diameter == 0.0
    assert list(single.ball(0, 1.0)) == [0]


# -- balls, annuli, enlargements ------------------------------------------------

@pytest.mark.parametrize("x,r,want", [(0.5, 0.2, [0.3, 0.5, 0.7]), (0.1, 0.05, [0.1]),
                                      (0.5, 1.0, [0.1, 0.3, 0.5, 0.7, 0.9])])
def test_ball_examples(line5, x, r, want):
    (i,) = ids_of(line5, [x])
    assert coords(line5, line5.ball(i, r)) == want


@pytest.mark.parametrize("tau,want", [(Interval(0.15, 0.2), [0.3, 0.7]),
                                      (Interval(0.2, 0.4), [0.1, 0.9]),
                                      (Interval(0.0, 0.05), [])])
def test_annulus_examples(line5, tau, want):
    assert coords(line5, line5.annulus(2, tau)) == want


def test_annulus_endpoint_flags(line5):
    assert coords(line5, line5.annulus(2, Interval.closed(0.2, 0.4))) == [0.1, 0.3, 0.7, 0.9]
    assert coords(line5, line5.annulus(2, Interval.open(0.2, 0.4))) == []
    assert 2 in line5.annulus(2, Interval.closed(0.0, 0.1))
    assert 2 not in line5.annulus(2, Interval(0.0, 0.1))


def test_enlarge_examples(line5):
    assert coords(line5, line5.enlarge([0], 0.2)) == [0.1, 0.3]
    assert len(line5.enlarge([], 1.0)) == 0
    assert line5.enlarge(line5.all(), 0.01) == line5.all()


def test_set_distance_examples(line5):
    assert line5.set_distance([0], [4]) == pytest.approx(0.8)
    assert line5.set_distance([0, 1], [1, 2]) == 0.0
    assert line5.set_distance([0], []) == math.inf


def test_measure_and_average_examples(line5):
    u = line5.coords
    assert line5.measure([1, 2, 3]) == pytest.approx(0.6)
    assert line5.measure([]) == 0.0
    assert line5.measure(line5.all()) == pytest.approx(1.0)
    assert line5.average([1, 2, 3], u) == pytest.approx(0.5)
    assert line5.average([], u) == 0.0
    assert line5.average(line5.all(), np.full(5, 3.25)) == pytest.approx(3.25)


def test_subset_ref_is_sorted_and_deduplicated():
    s = SubsetRef([3, 1, 3, 2])
    assert list(s) == [1, 2, 3] and len(s) == 3 and 2 in s and 5 not in s
    assert s.union(SubsetRef([7])) == SubsetRef([1, 2, 3, 7])
    assert s.intersect(SubsetRef([2, 9])) == SubsetRef([2])


# -- invariants -----------------------------------------------------------------

SPACES = [{"kind": "interval_grid", "n": 23}, {"kind": "circle_grid", "n": 19},
          {"kind": "square_grid", "n": 5},
          {"kind": "metric_graph", "edges": [[0, 1, 0.3], [1, 2, 0.2], [2, 3, 0.4], [3, 0, 0.5],
                                             [1, 3, 0.6]]}]


@pytest.mark.parametrize("doc", SPACES)
def test_ball_monotone_over_critical_radii(doc):
    s = build_space(doc)
    radii = s.critical_radii(s.diameter, (1.0,))
    for x in range(s.n):
        prev = SubsetRef()
        for r in radii:
            b = s.ball(x, r)
            assert set(prev) <= set(b) and x in b
            prev = b


@pytest.mark.parametrize("doc", SPACES)
def test_ball_equals_closed_annulus_from_zero(doc):
    s = build_space(doc)
    for x in range(s.n):
        for r in s.critical_radii(s.diameter, (1.0,)):
            assert s.ball(x, r) == s.annulus(x, Interval.closed(0.0, r))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 40), x=st.integers(0, 1000), a=st.floats(0, 0.5), b=st.floats(0, 0.5),
       c=st.floats(0, 0.5))
def test_annulus_additivity(n, x, a, b, c):
    s = build_space({"kind": "interval_grid", "n": n})
    x %= n
    lo, mid, hi = sorted((a, b, c))
    left, right = Interval(lo, mid), Interval(mid, hi)
    whole = Interval(lo, hi)
    got = s.measure(s.annulus(x, left)) + s.measure(s.annulus(x, right))
    assert got == pytest.approx(s.measure(s.annulus(x, whole)), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 60), x=st.integers(0, 1000), r=st.floats(1e-3, 1.5))
def test_ball_mass_matches_direct_sum(n, x, r):
    for doc in ({"kind": "interval_grid", "n": n}, {"kind": "circle_grid", "n": n}):
        s = build_space(doc)
        i = x % n
        direct = s.weights[s.dist_row(i) <= r * (1 + 1e-12)].sum()
        assert s.ball_mass([i], [r])[0] == pytest.approx(direct, abs=1e-14)


def test_lebesgue_averages_converge():
    n = 1001
    s = build_space({"kind": "interval_grid", "n": n})
    u = s.coords
    worst = []
    for r in (0.2, 0.05, 0.01, 2 / n):
        m = s.ball_masses(r)
        avg = s.ball_masses(r, u * s.weights) / m
        worst.append(float(np.max(np.abs(avg - u))))
    assert all(b < a for a, b in zip(worst, worst[1:]))
    assert worst[-1] < 2 / n


def test_critical_radii_realize_every_distinct_ball(line5):
    radii = line5.critical_radii(0.8, (1.0,))
    assert np.all(radii > 0) and np.all(radii <= 0.8 * (1 + 1e-12))
    seen = {line5.ball(2, r) for r in radii}
    fine = {line5.ball(2, r) for r in np.linspace(1e-4, 0.8, 2000)}
    assert fine <= seen
