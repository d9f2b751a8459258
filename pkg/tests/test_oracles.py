"""Library values against the frozen brute-force oracle outputs."""

import numpy as np
import pytest

import oracles
from bbmlab import build_space
from bbmlab.approximation import discrete_convolution
from bbmlab.bbm import functional, localized_functional, tail_supremum
from bbmlab.energy import EnergyDensity, lip_field, pointwise_inequality_check, riesz_Rp
from bbmlab.mollifiers import Builtin, dyadic_chain, envelope_extract, lower_sum, upper_sum
from bbmlab.regularity import doubling_constant, poincare_constant, strong_doubling_constant

REL = 1e-12


def close(a, b, rel=REL):
    return abs(a - b) <= rel * max(1.0, abs(b))


def test_fast_oracles_reproduce_frozen_values(frozen):
    fresh = oracles.fast_values()
    for key, val in fresh.items():
        assert close(val, frozen[key]), key


@pytest.mark.parametrize("kappa,delta,p", [(1, 0.5, 2), (2, 0.4, 2), (3, 0.2, 1), (4, 0.4, 1),
                                           (5, 0.1, 1)])
def test_functional_matches_oracle(line5, frozen, kappa, delta, p):
    got = functional(line5, line5.all(), line5.coords, Builtin(kappa, p), delta, p)
    assert close(got, frozen[f"line5.functional.rho{kappa}.delta{delta}.p{p}"])


def test_line5_sums_and_tails(line5, frozen):
    s, u, r3, r5 = line5, line5.coords, Builtin(3), Builtin(5)
    chain = dyadic_chain(0.2)
    got = {
        "line5.localized.center.r0.2.rho3.delta0.2": localized_functional(s, [2], 0.2, u, r3, 0.2, 1),
        "line5.tail.rho5.delta0.1.r0.5": tail_supremum(s, s.all(), 0.5, r5, 0.1, 1),
        "line5.tail.rho3.delta0.2.r0.5": tail_supremum(s, s.all(), 0.5, r3, 0.2, 1),
        "line5.lower_sum.all": lower_sum(s, s.all(), r3, 0.2, chain),
        "line5.lower_sum.center": lower_sum(s, [2], r3, 0.2, chain),
        "line5.upper_sum.all": upper_sum(s, s.all(), r3, 0.2, chain),
        "line5.upper_sum.center": upper_sum(s, [2], r3, 0.2, chain),
    }
    for key, val in got.items():
        assert close(val, frozen[key]), key


def test_line5_regularity_and_energy(line5, frozen):
    s, u = line5, line5.coords
    got = {
        "line5.doubling.R0.2": doubling_constant(s, R=0.2).constant,
        "line5.strong_doubling.r0.2": strong_doubling_constant(s, R=0.2, radii=[0.2]).constant,
        "line5.poincare.R0.2.lam2.p1.h0.2": poincare_constant(s, None, 0.2, 2.0, 1, [u], h=0.2).constant,
        "line5.lip.square.center": lip_field(s, u ** 2, 0.2)[2],
        "line5.riesz.point_mass.center.r0.4": riesz_Rp(s, EnergyDensity([0, 0, 1.0, 0, 0]), 2, 0.4),
        "line5.pointwise.p2.lam2.R0.4": pointwise_inequality_check(
            s, u, EnergyDensity(s.weights.copy()), 2, 2.0, s.all(), 0.4).constant,
    }
    lo, hi = envelope_extract(s, Builtin(3), 0.2, 0.2)
    got["line5.envelope.rho3.delta0.2.bin0.lower"] = lo.values[0]
    got["line5.envelope.rho3.delta0.2.bin0.upper"] = hi.values[0]
    for key, val in got.items():
        assert close(val, frozen[key]), key


def test_convolution_matches_oracle(frozen):
    s = build_space({"kind": "interval_grid", "n": 101, "layout": "nodes"})
    v = discrete_convolution(s, s.all(), 0.32, s.coords).values
    assert close(v[0], frozen["nodes101.convolution.r0.32.at0"])
    assert close(v[50], frozen["nodes101.convolution.r0.32.at0.5"])


def test_grid_constants_match_frozen_oracle(frozen):
    g = build_space({"kind": "interval_grid", "n": 1001})
    third = g.where(lambda x: (x >= 1 / 3) & (x <= 2 / 3))
    for k in (0, 10):
        got = doubling_constant(g, third, 0.1, r_min=k / 1001).constant
        assert close(got, frozen[f"grid1001.doubling.third.R0.1.rmin{k}h"], 1e-11)
    c = build_space({"kind": "circle_grid", "n": 400})
    got = strong_doubling_constant(c, R=0.1).constant
    assert close(got, frozen["circle400.strong_doubling.R0.1"], 1e-11)


def test_oracle_kernels_match_library_eval(line5):
    D, w = oracles.line5()
    for kappa in range(1, 6):
        fam = Builtin(kappa, 2.0)
        for x in range(5):
            for y in range(5):
                if x != y:
                    want = oracles.rho(kappa, 0.3, 2.0, D, w, x, y)
                    assert np.isclose(fam.eval(0.3, line5, x, y), want, rtol=1e-13, atol=0)
