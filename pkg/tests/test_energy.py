"""Lipschitz fields, energy estimates, averaging operator and Riesz potentials."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbmlab import build_space
from bbmlab.energy import (EnergyDensity, LipschitzDictionary, MetricMap, MetricTarget,
                           averaging_Ap, coordinate_bins, lip_constant, lip_field, metric_energy,
                           pointwise_inequality_check, riesz_many, riesz_Rp, scalar_energy,
                           voronoi_regions)
from bbmlab.regularity import doubling_constant


# -- Lipschitz fields ------------------------------------------------------------

def test_lip_field_examples(line5):
    u = line5.coords
    assert np.allclose(lip_field(line5, u, 0.2), 1.0)
    assert lip_field(line5, u ** 2, 0.2)[2] == pytest.approx(1.2)
    assert np.all(lip_field(line5, np.full(5, 2.0), 0.4) == 0)
    # isolated at scale h: no neighbour within 0.1
    assert np.all(lip_field(line5, u, 0.1) == 0)


def test_lip_constant_examples(line5):
    assert lip_constant(line5, line5.coords) == pytest.approx(1.0)
    ind = np.array([0.2, 0, 0, 0, 0])
    assert lip_constant(line5, ind) == pytest.approx(1.0)
    assert lip_constant(line5, line5.coords, [3]) == 0.0


# -- scalar and metric energies -----------------------------------------------------

def test_scalar_energy_examples(line5):
    est = scalar_energy(line5, line5.all(), line5.coords, 1, 0.2)
    assert est.upper == pytest.approx(1.0) and est.lower == 0.0
    assert scalar_energy(line5, line5.all(), np.full(5, 3.0), 2, 0.4).upper == 0.0
    g = build_space({"kind": "interval_grid", "n": 101})
    assert abs(scalar_energy(g, g.all(), g.coords, 2, 0.02).upper - 1.0) <= 1e-12


def test_scalar_energy_rejects_far_candidates(line5):
    u = line5.coords
    with pytest.raises(ValueError, match="above tol"):
        scalar_energy(line5, line5.all(), u, 1, 0.2, [u, u + 0.1], tol=1e-9)


def test_scalar_energy_takes_best_candidate(line5):
    u = line5.coords
    v = u + 1e-12 * np.array([1, -1, 1, -1, 1])
    est = scalar_energy(line5, line5.all(), u, 1, 0.2, [u, v], tol=1e-9)
    assert est.upper == pytest.approx(1.0)
    assert est.details["argmin"] == 0


def test_circle_metric_energy_lower():
    c = build_space({"kind": "circle_grid", "n": 4000})
    f = MetricMap.identity_circle(c)
    d = LipschitzDictionary.capped_distances(f, 8)
    est = metric_energy(c, c.all(), f, 1, 0.001, d, coordinate_bins(c, c.all(), 8))
    assert est.lower >= 0.99 and est.lower <= est.upper


def test_constant_map_energy_is_zero(line5):
    f = MetricMap.scalar(np.full(5, 1.5))
    d = LipschitzDictionary.capped_distances(f, 4, cap=1.0, identity=True)
    est = metric_energy(line5, line5.all(), f, 2, 0.2, d)
    assert est.lower == est.upper == 0.0


def test_line5_identity_dictionary_reduces_to_scalar(line5):
    f = MetricMap.scalar(line5.coords)
    d = LipschitzDictionary.identity(f.target, 10.0)
    est = metric_energy(line5, line5.all(), f, 1, 0.2, d)
    assert est.lower == pytest.approx(1.0)


def test_overlapping_regions_rejected(line5):
    f = MetricMap.scalar(line5.coords)
    d = LipschitzDictionary.identity(f.target, 10.0)
    with pytest.raises(ValueError, match="overlaps"):
        metric_energy(line5, line5.all(), f, 1, 0.2, d, [[0, 1], [1, 2]])


@settings(max_examples=25, deadline=None)
@given(vals=st.lists(st.floats(-3, 3), min_size=12, max_size=12), k=st.integers(1, 6))
def test_metric_lower_monotone_in_dictionary_and_regions(vals, k):
    s = build_space({"kind": "interval_grid", "n": 12})
    f = MetricMap.scalar(vals)
    small = LipschitzDictionary.capped_distances(f, k)
    big = LipschitzDictionary(small.target, small.members + LipschitzDictionary.capped_distances(
        f, k + 3).members, small.cap)
    coarse = [list(range(0, 6)), list(range(6, 12))]
    fine = [list(range(0, 3)), list(range(3, 6)), list(range(6, 9)), list(range(9, 12))]
    h = 2 * s.h_min
    e_small = metric_energy(s, s.all(), f, 2, h, small, coarse).lower
    e_big = metric_energy(s, s.all(), f, 2, h, big, coarse).lower
    e_fine = metric_energy(s, s.all(), f, 2, h, big, fine).lower
    assert e_small <= e_big * (1 + 1e-12) + 1e-15
    assert e_big <= e_fine * (1 + 1e-12) + 1e-15


@settings(max_examples=25, deadline=None)
@given(labels=st.lists(st.integers(0, 5), min_size=9, max_size=9))
def test_post_composition_contracts_quotients(labels):
    rng = np.random.default_rng(sum(labels))
    pts = rng.uniform(size=(6, 2))
    mat = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    s = build_space({"kind": "interval_grid", "n": 9})
    f = MetricMap.table(labels, mat)
    d = LipschitzDictionary.capped_distances(f, 4)
    d.verify(f.labels)
    I, J = np.triu_indices(9, 1)
    Q = f.quotient(s, I, J)
    for _, phi in d.members:
        g = MetricMap.scalar(f.compose(phi))
        assert np.all(g.quotient(s, I, J) <= Q * (1 + 1e-12) + 1e-15)
    h = 2 * s.h_min
    for _, phi in d.members:
        up = metric_energy(s, s.all(), f, 2, h, d).upper
        assert scalar_energy(s, s.all(), f.compose(phi), 2, h).upper <= up * (1 + 1e-12) + 1e-15


def test_dictionary_verify_catches_bad_member(line5):
    t = MetricTarget("real")
    bad = LipschitzDictionary(t, [("twice", lambda x: 2 * np.asarray(x))], cap=10.0)
    with pytest.raises(ValueError, match="1-Lipschitz"):
        bad.verify(line5.coords)


def test_region_builders_partition_the_domain():
    c = build_space({"kind": "circle_grid", "n": 100})
    for regs in (coordinate_bins(c, c.all(), 8), voronoi_regions(c, c.all(), 8)):
        ids = np.concatenate([r.ids for r in regs])
        assert sorted(ids.tolist()) == list(range(100))


# -- averaging and Riesz potentials ------------------------------------------------

def test_averaging_examples(line5):
    w = line5.weights
    assert averaging_Ap(line5, EnergyDensity(w.copy()), 2, 0.2) == pytest.approx(1.0)
    assert averaging_Ap(line5, EnergyDensity(2 * w), 0, 0.05) == pytest.approx(2.0)
    e = EnergyDensity([0, 0, 0, 0, 0.2])
    assert averaging_Ap(line5, e, 0, 0.2) == 0.0


def test_riesz_examples(line5):
    assert riesz_Rp(line5, EnergyDensity(line5.weights.copy()), 2, 0.2) == pytest.approx(1.0)
    e = EnergyDensity([0, 0, 1.0, 0, 0])
    # A(0.4) = 1, A(0.2) = 1/0.6, A(r <= 0.1) = 1/0.2 on all deeper scales
    series = (1 + (2 / 3) / 0.6 + 3 * (2 / 3) ** 2 * 5) / 3
    assert riesz_Rp(line5, e, 2, 0.4) == pytest.approx(series, rel=1e-12)
    assert series == pytest.approx(2.925925925925926)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 80), c=st.floats(0.01, 50), x=st.integers(0, 10 ** 6),
       r=st.floats(1e-4, 2.0))
def test_riesz_of_constant_density(n, c, x, r):
    s = build_space({"kind": "interval_grid", "n": n})
    assert riesz_Rp(s, EnergyDensity.constant(s, c), x % n, r) == pytest.approx(c, rel=1e-12)


def test_riesz_doubling_inequalities():
    s = build_space({"kind": "interval_grid", "n": 201})
    C_D = doubling_constant(s, R=0.2).constant
    rng = np.random.default_rng(5)
    for _ in range(5):
        e = EnergyDensity(rng.exponential(size=s.n) * s.weights)
        xs = rng.integers(0, s.n, 30)
        r = rng.uniform(4 * s.h_min, 0.2, 30)
        rp = r * rng.uniform(0.5, 1.0, 30)
        assert np.all(riesz_many(s, e, xs, rp) <= C_D * riesz_many(s, e, xs, r) * (1 + 1e-12))
        E = np.unique(rng.integers(0, s.n, 15))
        r0 = 0.05
        lhs = math.fsum(riesz_many(s, e, E, np.full(E.size, r0)) * s.weights[E])
        assert lhs <= C_D * e.of(s.enlarge(E, r0)) * (1 + 1e-12)


def test_riesz_argument_checks(line5):
    e = EnergyDensity(line5.weights.copy())
    with pytest.raises(ValueError):
        riesz_Rp(line5, e, 0, 0.0)
    with pytest.raises(ValueError):
        averaging_Ap(line5, e, 0, -1.0)
    with pytest.raises(ValueError):
        EnergyDensity([-1.0, 0, 0, 0, 0])


# -- pointwise inequality ---------------------------------------------------------

def test_pointwise_interval_value():
    g = build_space({"kind": "interval_grid", "n": 1001})
    interior = g.where(lambda x: (x >= 0.25) & (x <= 0.75))
    rep = pointwise_inequality_check(g, g.coords, EnergyDensity(g.weights.copy()), 1, 1.0,
                                     interior, 0.05)
    assert rep.constant == pytest.approx(0.5, rel=1e-12)


def test_pointwise_constant_map_and_line5(line5):
    e = EnergyDensity(line5.weights.copy())
    assert pointwise_inequality_check(line5, np.ones(5), e, 1, 1.0, line5.all(), 0.4).constant == 0.0
    rep = pointwise_inequality_check(line5, line5.coords, e, 2, 2.0, line5.all(), 0.4)
    assert 0 < rep.constant < math.inf and rep.pairs == 14


def test_pointwise_zero_denominator(line5):
    e = EnergyDensity(np.zeros(5))
    rep = pointwise_inequality_check(line5, line5.coords, e, 1, 1.0, line5.all(), 0.4)
    assert rep.constant == math.inf and rep.witness is not None
