"""Empirical doubling, strong-doubling and Poincaré constants.

Every supremum over a continuum of radii is taken over a finite set of
critical radii: the ratios below only change when some ball crosses a
pairwise distance, so evaluating at each crossing and just below it is an
exact extremisation on a finite space. ``r_min`` lets callers skip radii
below the grid resolution, where a discretised interval stops looking
one-dimensional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from bbmlab.energy import lip_field
from bbmlab.mm_space import Interval, MetricMeasureSpace, as_ids


@dataclass
class RegularityReport:
    """Largest observed ratio, where it occurred, and what was examined."""

    constant: float
    witness: tuple | None
    radius_set: np.ndarray
    flags: list = field(default_factory=list)
    label: str = ""

    def to_dict(self, space: MetricMeasureSpace | None = None) -> dict:
        wit = None
        if self.witness is not None:
            x, *rest = self.witness
            wit = {"atom": int(x), "radius": float(rest[0])}
            if space is not None:
                wit["position"] = space.label(x)
            if len(rest) > 1:
                wit["test"] = int(rest[1])
        return {"constant": self.constant, "witness": wit, "flags": self.flags,
                "radii_examined": int(len(self.radius_set)), "label": self.label}


def _centers(space: MetricMeasureSpace, omega, R: float) -> np.ndarray:
    ids = space.enlarge(omega, R).ids
    return ids[space.weights[ids] > 0]


def _radii(space, R, factors, radii, r_min):
    if radii is not None:
        radii = np.asarray(radii, dtype=float)
        return radii[(radii > 0) & (radii <= R)]
    return space.critical_radii(R, factors, r_min)


def doubling_constant(space: MetricMeasureSpace, omega=None, R: float = 1.0, *,
                      radii=None, r_min: float = 0.0) -> RegularityReport:
    """max of m(B(x,2r)) / m(B(x,r)) over x in B(omega, R), r in (0, R]."""
    if not R > 0:
        raise ValueError("R must be positive")
    omega = space.all() if omega is None else omega
    xs = _centers(space, omega, R)
    rs = _radii(space, R, (1.0, 2.0), radii, r_min)
    best, wit = 1.0 if xs.size else 0.0, None
    for r in rs:
        big = space.ball_mass(xs, 2 * r)
        small = space.ball_mass(xs, r)
        ratio = big / small
        k = int(np.argmax(ratio))
        if ratio[k] > best or wit is None:
            best, wit = max(best, float(ratio[k])), (int(xs[k]), float(r))
    return RegularityReport(best, wit, rs, [], "doubling constant C_D")


def strong_doubling_constant(space: MetricMeasureSpace, V=None, R: float = 1.0, *,
                             radii=None, r_min: float = 0.0) -> RegularityReport:
    """max of m(B(x,2r)) / m(A(x,(3r/4, r])) over x in B(V, R), r in (0, R].

    Radii whose shell is empty at some centre are listed in ``flags`` and
    those (x, r) pairs are left out of the maximum.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    V = space.all() if V is None else V
    xs = _centers(space, V, R)
    rs = _radii(space, R, (1.0, 2.0, 4.0 / 3.0), radii, r_min)
    best, wit, flags = 0.0, None, []
    for r in rs:
        big = space.ball_mass(xs, 2 * r)
        outer = space.ball_mass(xs, r)
        inner = space.ball_mass(xs, 0.75 * r)
        # the shell is (3r/4, r]: the tolerant closed ball at 3r/4 is removed
        shell = outer - inner
        empty = shell <= 0
        if np.any(empty):
            flags.append({"radius": float(r), "empty_shells": int(empty.sum()),
                          "first_atom": int(xs[np.argmax(empty)])})
        if np.all(empty):
            continue
        ratio = np.where(empty, -np.inf, big / np.where(empty, 1.0, shell))
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, wit = float(ratio[k]), (int(xs[k]), float(r))
    return RegularityReport(best, wit, rs, flags, "strong doubling constant C_SD")


def shell(space: MetricMeasureSpace, x: int, r: float):
    """The strong-doubling shell A(x, (3r/4, r])."""
    return space.annulus(x, Interval(0.75 * r, r))


def poincare_constant(space: MetricMeasureSpace, omega=None, R: float = 1.0, lam: float = 1.0,
                      p: float = 1.0, tests=(), h: float | None = None, *,
                      radii=None, r_min: float = 0.0) -> RegularityReport:
    """Lower bound on the Poincaré constant from a finite family of test fields.

    For each test u, centre x in B(omega, R) and radius r, the ratio is
    ``<|u - <u>_B|>_B / (r * <lip_h[u]^p>_{B(x, lam r)}^{1/p})`` with
    B = B(x, r). A vanishing denominator gives 0 when the numerator also
    vanishes and +inf (flagged) otherwise.
    """
    if not tests:
        raise ValueError("need at least one test field")
    if lam < 1 or p < 1 or not R > 0:
        raise ValueError("need lambda >= 1, p >= 1, R > 0")
    h = 2 * space.h_min if h is None else h
    omega = space.all() if omega is None else omega
    xs = _centers(space, omega, R)
    rs = _radii(space, R, (1.0, lam), radii, r_min)
    w = space.weights
    best, wit, flags = 0.0, None, []
    for t, u in enumerate(tests):
        u = np.asarray(u, dtype=float)
        lipp = lip_field(space, u, h) ** p
        for r in rs:
            mB = space.ball_mass(xs, r)
            mean = space.ball_mass(xs, r, u * w) / mB
            # mean oscillation needs the centre-dependent mean: loop over centres
            osc = np.empty(xs.size)
            for k, x in enumerate(xs):
                ids, _ = space.neighbors(int(x), r, include_self=True)
                osc[k] = math.fsum(np.abs(u[ids] - mean[k]) * w[ids]) / mB[k]
            mL = space.ball_mass(xs, lam * r)
            grad = (space.ball_mass(xs, lam * r, lipp * w) / mL) ** (1.0 / p)
            den = r * grad
            zero = den <= 0
            if np.any(zero & (osc > 1e-14)):
                k = int(np.flatnonzero(zero & (osc > 1e-14))[0])
                flags.append({"radius": float(r), "atom": int(xs[k]), "test": t,
                              "reason": "positive oscillation with zero gradient average"})
                return RegularityReport(math.inf, (int(xs[k]), float(r), t), rs, flags,
                                        "lower bound on C_P")
            ratio = np.where(zero, 0.0, osc / np.where(zero, 1.0, den))
            k = int(np.argmax(ratio))
            if ratio[k] > best:
                best, wit = float(ratio[k]), (int(xs[k]), float(r), t)
    return RegularityReport(best, wit, rs, flags, "lower bound on C_P")
