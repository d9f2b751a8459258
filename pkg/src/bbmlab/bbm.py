"""The nonlocal functional F(delta), its localized and tail parts, and sandwich reports.

For a map f, a mollifier family and an exponent p,

    F(delta) = sum over ordered pairs x != x' in O of Q_f(x, x')^p rho_delta(x, x') w(x) w(x').

Pairs are enumerated per block of rows from sorted-coordinate windows (or
dense rows on general metrics) and cut at the family's support radius.
Every block is reduced with ``math.fsum`` and the block sums are combined
with ``math.fsum`` again, so the result does not depend on the number of
worker threads. :func:`functional_naive` is the O(n^2) reference.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from bbmlab.approximation import convolution_floor, discrete_convolution
from bbmlab.energy import (EnergyEstimate, LipschitzDictionary, MetricMap, as_map,
                           coordinate_bins, metric_energy, scalar_energy, voronoi_regions)
from bbmlab.mm_space import MetricMeasureSpace, as_ids
from bbmlab.mollifiers import MollifierFamily, tail_table
from bbmlab.parallel import ordered_map

CSV_COLUMNS = ("delta", "functional", "tail", "energy_lower", "energy_upper",
               "lower_ratio", "upper_ratio", "flags")
TAIL_FLAG_FRACTION = 0.05


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return delta


def _pair_sums(space: MetricMeasureSpace, rows, cols, f: MetricMap, family: MollifierFamily,
               deltas, p: float, hi: float, lo: float = 0.0, block: int = 256) -> list[float]:
    """sum of Q_f^p rho w w over pairs (x in rows, x' in cols, lo < d <= hi), one value per delta."""
    rows = as_ids(rows)
    rows = rows[space.weights[rows] > 0]
    cols = as_ids(cols)
    deltas = [_check_delta(d) for d in deltas]
    w = space.weights

    def run(start: int) -> list[float]:
        rb = rows[start:start + block]
        out = [[] for _ in deltas]
        for I, J, D in space.pair_blocks(rb, hi, lo=lo, block=rb.size, cols=cols):
            base = f.quotient(space, I, J, D) ** p * w[I] * w[J]
            keep = base > 0
            if not np.any(keep):
                continue
            I, J, D, base = I[keep], J[keep], D[keep], base[keep]
            cache: dict = {}
            for a, delta in enumerate(deltas):
                out[a].append(math.fsum(base * family.kernel(space, delta, I, J, D, cache)))
        return [math.fsum(v) for v in out]

    parts = ordered_map(run, range(0, rows.size, block))
    return [math.fsum(part[a] for part in parts) for a in range(len(deltas))]


def functional_schedule(space: MetricMeasureSpace, O, f, family: MollifierFamily, deltas,
                        p: float) -> list[float]:
    """F(delta) for several deltas, sharing the pair enumeration and ball masses."""
    f = as_map(f)
    hi = max(family.support_radius(_check_delta(d)) for d in deltas)
    return _pair_sums(space, O, O, f, family, deltas, p, hi)


def functional(space: MetricMeasureSpace, O, f, family: MollifierFamily, delta: float,
               p: float) -> float:
    """F(delta) on O x O, diagonal omitted."""
    return functional_schedule(space, O, f, family, [delta], p)[0]


def functional_naive(space: MetricMeasureSpace, O, f, family: MollifierFamily, delta: float,
                     p: float) -> float:
    """Reference evaluation over every ordered pair of O, without support cut-off."""
    f = as_map(f)
    delta = _check_delta(delta)
    ids = as_ids(O)
    I, J = np.meshgrid(ids, ids, indexing="ij")
    off = I != J
    I, J = I[off], J[off]
    D = space.dist_pairs(I, J)
    w = space.weights
    terms = f.quotient(space, I, J, D) ** p * family.kernel(space, delta, I, J, D) * w[I] * w[J]
    return math.fsum(terms)


def localized_functional(space: MetricMeasureSpace, Oprime, r: float, f, family: MollifierFamily,
                         delta: float, p: float, O=None) -> float:
    """Sum of the summand over x in O', x' in O with 0 < d(x, x') <= r (O defaults to all atoms)."""
    if not r > 0:
        raise ValueError("r must be positive")
    f = as_map(f)
    hi = min(float(r), family.support_radius(_check_delta(delta)))
    cols = space.all() if O is None else O
    return _pair_sums(space, Oprime, cols, f, family, [delta], p, hi)[0]


def nonlocal_part(space: MetricMeasureSpace, Oprime, r: float, f, family: MollifierFamily,
                  delta: float, p: float, O=None) -> float:
    """Same summand over pairs with d(x, x') > r; adds to :func:`localized_functional`."""
    if not r > 0:
        raise ValueError("r must be positive")
    f = as_map(f)
    hi = family.support_radius(_check_delta(delta))
    if hi <= r:
        return 0.0
    cols = space.all() if O is None else O
    return _pair_sums(space, Oprime, cols, f, family, [delta], p, hi, lo=float(r))[0]


def tail_supremum(space: MetricMeasureSpace, Omega, r: float, family: MollifierFamily,
                  delta: float, p: float) -> float:
    """max over x in Omega of sum_{x' in Omega, d > r} (rho(x,x') + rho(x',x)) d^-p w(x')."""
    if not r > 0:
        raise ValueError("r must be positive")
    return float(tail_table(space, Omega, [r], family, [_check_delta(delta)], p)[0, 0])


def limit_estimates(rows, w: int) -> tuple[float, float]:
    """(min, max) of F over the last ``w`` rows of (delta, F) pairs."""
    rows = list(rows)
    if w < 1 or len(rows) < w:
        raise ValueError(f"need at least w={w} rows, got {len(rows)}")
    vals = [float(F) for _, F in rows[-w:]]
    return min(vals), max(vals)


# -- sandwich reports ----------------------------------------------------------

@dataclass
class DeltaSchedule:
    """Strictly decreasing deltas in (0, 1), the limit window, and the radius grid."""

    deltas: list
    window: int = 3
    radii: list = field(default_factory=list)

    def __post_init__(self):
        self.deltas = [float(d) for d in self.deltas]
        self.radii = [float(r) for r in self.radii]
        if not self.deltas:
            raise ValueError("delta schedule is empty")
        for name, vals in (("delta", self.deltas), ("radius", self.radii)):
            if any(b >= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} schedule not decreasing")
        if not all(0 < d < 1 for d in self.deltas):
            raise ValueError("deltas must lie in (0, 1)")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if self.window < 1:
            raise ValueError("window must be at least 1")

    @property
    def effective_window(self) -> int:
        return min(self.window, len(self.deltas))


@dataclass
class ExperimentReport:
    rows: list                  # dicts keyed by CSV_COLUMNS
    liminf_est: float
    limsup_est: float
    energy: EnergyEstimate
    lower_ratio: float
    upper_ratio: float
    window: int
    flags: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) if c != "flags" else ";".join(row[c])
                             for c in CSV_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"liminf_est": self.liminf_est, "limsup_est": self.limsup_est,
                "energy_lower": self.energy.lower, "energy_upper": self.energy.upper,
                "lower_ratio": self.lower_ratio, "upper_ratio": self.upper_ratio,
                "window": self.window, "flags": self.flags, **self.metadata}


def _fmt(v) -> str:
    """Shortest round-trip decimal form of a float."""
    return repr(float(v))


def _ratio(num: float, den: float, flags: list, name: str) -> float:
    if den > 0:
        return num / den
    if num == 0:
        flags.append(f"{name}:0/0")
        return 0.0
    flags.append(f"{name}:positive/0")
    return math.inf


def energy_bracket(space: MetricMeasureSpace, O, f, p: float, energy_args: dict | None = None,
                   radii=()) -> EnergyEstimate:
    """Lower and upper estimates of the p-energy of f on O.

    ``energy_args`` keys: ``h`` (lip scale, default 2 h_min), ``dictionary``
    (number of capped-distance members, default 8), ``cap``, ``regions``
    (number of disjoint regions for the lower estimate, default 1) and
    ``tol`` (L^p tolerance for approximating candidates, default 1e-9).

    The lower value comes from :func:`metric_energy`. For scalar maps the
    upper value is also bounded by :func:`scalar_energy` with the discrete
    convolutions u^r over ``radii`` as candidates; candidates farther than
    ``tol`` from u are left out and counted in ``details``.
    """
    args = dict(energy_args or {})
    f = as_map(f)
    O_ids = as_ids(O)
    h = args.get("h") or 2 * space.h_min
    k = int(args.get("dictionary", 8))
    nreg = int(args.get("regions", 1))
    tol = float(args.get("tol", 1e-9))
    dictionary = LipschitzDictionary.capped_distances(f, k, args.get("cap"),
                                                      identity=f.is_scalar)
    if nreg > 1:
        if space.coords is not None and space.coords.ndim == 1:
            regions = coordinate_bins(space, O_ids, nreg)
        else:
            regions = voronoi_regions(space, O_ids, nreg)
    else:
        regions = None
    met = metric_energy(space, O_ids, f, p, h, dictionary, regions)
    if not f.is_scalar:
        return met
    u = f.labels.astype(float)
    floor = convolution_floor(space)
    cands, rejected = [u], 0
    for r in radii:
        if r < floor:
            continue
        v = discrete_convolution(space, O_ids, r, u).values
        dist = math.fsum(np.abs(u[O_ids] - v[O_ids]) ** p * space.weights[O_ids]) ** (1 / p)
        if dist <= tol:
            cands.append(v)
        else:
            rejected += 1
    sc = scalar_energy(space, O_ids, u, p, h, cands, tol)
    upper = min(met.upper, sc.upper)
    details = {**met.details, "scalar_upper": sc.upper, "metric_upper": met.upper,
               "rejected_candidates": rejected}
    return EnergyEstimate(met.lower, upper, f"{met.method}; {sc.method}", details)


def sandwich_report(space: MetricMeasureSpace, O, f, family: MollifierFamily, p: float,
                    schedule: DeltaSchedule, energy_args: dict | None = None) -> ExperimentReport:
    """F over the delta schedule, windowed limits, the energy bracket and the ratio constants.

    Each row carries ``F(delta)``, the tail supremum at the smallest radius
    of the schedule, the energy bracket and the row ratios
    ``F / energy.upper`` and ``F / energy.lower``. A row is flagged when its
    tail exceeds 5% of ``F(delta)``. The report ratios use the windowed
    estimates: ``liminf_est / energy.upper`` and ``limsup_est / energy.lower``.
    """
    f = as_map(f)
    O_ids = as_ids(O)
    Fs = functional_schedule(space, O_ids, f, family, schedule.deltas, p)
    energy = energy_bracket(space, O_ids, f, p, energy_args, schedule.radii)
    if schedule.radii:
        r_tail = min(schedule.radii)
        tails = tail_table(space, O_ids, [r_tail], family, schedule.deltas, p)[:, 0]
    else:
        r_tail = None
        tails = np.zeros(len(schedule.deltas))
    rows = []
    for delta, F, tail in zip(schedule.deltas, Fs, tails):
        flags = []
        if tail > TAIL_FLAG_FRACTION * F:
            flags.append("tail>5%F")
        lo = _ratio(F, energy.upper, flags, "lower_ratio")
        hi = _ratio(F, energy.lower, flags, "upper_ratio")
        rows.append({"delta": delta, "functional": F, "tail": float(tail),
                     "energy_lower": energy.lower, "energy_upper": energy.upper,
                     "lower_ratio": lo, "upper_ratio": hi, "flags": flags})
    w = schedule.effective_window
    liminf, limsup = limit_estimates(zip(schedule.deltas, Fs), w)
    flags = []
    lower_ratio = _ratio(liminf, energy.upper, flags, "lower_ratio")
    upper_ratio = _ratio(limsup, energy.lower, flags, "upper_ratio")
    meta = {"space": space.name, "family": family.to_dict(), "p": float(p),
            "tail_radius": r_tail}
    return ExperimentReport(rows, liminf, limsup, energy, lower_ratio, upper_ratio, w,
                            flags, meta)
