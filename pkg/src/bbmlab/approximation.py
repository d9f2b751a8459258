"""Separated sets, Lipschitz partitions of unity and annulus-average convolutions.

The construction at scale r:

* centres: a maximal r/4-separated subset, picked greedily in ascending
  atom id (an atom joins when it is strictly farther than r/4 from every
  centre already chosen);
* tents ``psi_i(x) = max(r/2 - d(c_i, x), 0)`` and the normaliser
  ``Psi = max(sum_i psi_i, r/8)``;
* ``phi_i = psi_i / Psi``, which sums to one within r/16 of the seed set.

The discrete convolution ``u^r`` runs this at the inner scale r' = r/32 and
replaces u by ``sum_i phi_i(x) <u>_{A_i}`` with ``A_i = A(c_i, (18r', 30r']).``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from bbmlab.energy import lip_constant, lip_field
from bbmlab.mm_space import REL_TOL, Interval, MetricMeasureSpace, SubsetRef, as_ids

INNER = 32
ANNULUS = (18, 30)


def separated_set(space: MetricMeasureSpace, S, sep: float) -> list[int]:
    """Greedy maximal sep-separated subset of S in ascending id order."""
    if not sep > 0:
        raise ValueError("sep must be positive")
    ids = as_ids(S)
    if ids.size == 0:
        raise ValueError("S must be nonempty")
    covered = np.zeros(space.n, dtype=bool)
    chosen = []
    for x in ids:
        if covered[x]:
            continue
        chosen.append(int(x))
        near, _ = space.neighbors(int(x), sep, include_self=True)
        covered[near] = True
    return chosen


@dataclass
class PartitionOfUnity:
    """Tents, normaliser and partition functions, stored sparsely per centre."""

    space: MetricMeasureSpace
    r: float
    centers: list
    supports: list          # atom ids with psi_i > 0
    psi: list               # psi_i on its support
    Psi: np.ndarray         # normaliser on every atom
    domain: SubsetRef

    @property
    def phi(self) -> list:
        return [v / self.Psi[s] for s, v in zip(self.supports, self.psi)]

    def phi_field(self, i: int) -> np.ndarray:
        out = np.zeros(self.space.n)
        out[self.supports[i]] = self.psi[i] / self.Psi[self.supports[i]]
        return out

    def psi_field(self, i: int) -> np.ndarray:
        out = np.zeros(self.space.n)
        out[self.supports[i]] = self.psi[i]
        return out

    def sum_phi(self) -> np.ndarray:
        tot = np.zeros(self.space.n)
        for s, ph in zip(self.supports, self.phi):
            np.add.at(tot, s, ph)
        return tot

    def exact_region(self) -> SubsetRef:
        """B(domain, r/16), where the functions must sum to one."""
        return self.space.enlarge(self.domain, self.r / 16)

    def overlap(self) -> int:
        """max over atoms of the number of balls B(c_i, 2r) containing it."""
        count = np.zeros(self.space.n, dtype=int)
        for c in self.centers:
            near, _ = self.space.neighbors(c, 2 * self.r, include_self=True)
            count[near] += 1
        return int(count.max())

    def lip_phi(self) -> np.ndarray:
        """Discrete global Lipschitz constant of every phi_i."""
        return np.array([lip_constant(self.space, self.phi_field(i))
                         for i in range(len(self.centers))])

    def lip_psi(self) -> np.ndarray:
        return np.array([lip_constant(self.space, self.psi_field(i))
                         for i in range(len(self.centers))])

    def lip_Psi(self) -> float:
        return lip_constant(self.space, self.Psi)

    def quotient_rule_bounds(self) -> np.ndarray:
        """Lip[psi_i]/inf Psi + sup psi_i Lip[Psi]/inf(Psi)^2 for every i."""
        inf_Psi = float(self.Psi.min())
        lP = self.lip_Psi()
        sups = np.array([v.max() if v.size else 0.0 for v in self.psi])
        return self.lip_psi() / inf_Psi + sups * lP / inf_Psi ** 2


def _build_partition(space: MetricMeasureSpace, S, r: float) -> PartitionOfUnity:
    ids = as_ids(S)
    ids = ids[space.weights[ids] > 0]
    centers = separated_set(space, ids, r / 4)
    supports, psi = [], []
    total = np.zeros(space.n)
    for c in centers:
        near, d = space.neighbors(c, r / 2, include_self=True)
        vals = np.maximum(r / 2 - d, 0.0)
        keep = vals > 0
        supports.append(near[keep])
        psi.append(vals[keep])
        np.add.at(total, near[keep], vals[keep])
    Psi = np.maximum(total, r / 8)
    return PartitionOfUnity(space, float(r), centers, supports, psi, Psi, SubsetRef(ids))


def partition_of_unity(space: MetricMeasureSpace, S, r: float) -> PartitionOfUnity:
    """Lipschitz partition of unity at scale r on S (requires r >= 4 h_min)."""
    # a lone atom has h_min = inf and nothing to separate
    if math.isfinite(space.h_min) and r < 4 * space.h_min * (1 - REL_TOL):
        raise ValueError(f"r={r:g} is below 4 h_min={4 * space.h_min:g}: r/4-separation unresolvable")
    return _build_partition(space, S, r)


@dataclass
class ConvolutionResult:
    r: float
    r_inner: float
    partition: PartitionOfUnity
    averages: np.ndarray        # <u>_{A_i} per centre
    annulus_mass: np.ndarray    # m(A_i) per centre
    values: np.ndarray          # u^r on every atom
    flagged: np.ndarray = field(default=None)

    @property
    def centers(self):
        return self.partition.centers


def convolution_floor(space: MetricMeasureSpace) -> float:
    """Smallest r whose annuli (18r', 30r'] are at least two grid cells wide."""
    width = (ANNULUS[1] - ANNULUS[0]) / INNER
    return 2 * space.h_min / width


def discrete_convolution(space: MetricMeasureSpace, S, r: float, u) -> ConvolutionResult:
    """u^r(x) = sum_i phi_i(x) <u>_{A_i} with the partition at r' = r/32.

    Centres whose annulus carries no mass get the average 0; atoms touched
    by such a centre, or outside the exact region of the partition, are
    flagged.
    """
    if r < convolution_floor(space) * (1 - REL_TOL):
        raise ValueError(f"r={r:g} is below the resolvability floor {convolution_floor(space):g}")
    u = np.asarray(u, dtype=float)
    rp = r / INNER
    pou = _build_partition(space, S, rp)
    tau = Interval(ANNULUS[0] * rp, ANNULUS[1] * rp)
    w = space.weights
    avgs = np.zeros(len(pou.centers))
    masses = np.zeros(len(pou.centers))
    for i, c in enumerate(pou.centers):
        ids, d = space.neighbors(c, tau.hi)
        ids = ids[tau.contains(d)]
        masses[i] = math.fsum(w[ids])
        avgs[i] = math.fsum(u[ids] * w[ids]) / masses[i] if masses[i] > 0 else 0.0
    values = np.zeros(space.n)
    flagged = np.zeros(space.n, dtype=bool)
    for i, (s, ph) in enumerate(zip(pou.supports, pou.phi)):
        np.add.at(values, s, ph * avgs[i])
        if masses[i] <= 0:
            flagged[s] = True
    flagged |= pou.sum_phi() < 1 - 1e-12
    return ConvolutionResult(r, rp, pou, avgs, masses, values, flagged)


@dataclass
class ApproxErrorReport:
    C0: float
    C1: float
    witness0: int | None
    witness1: int | None
    flags: list


def approx_error_report(space: MetricMeasureSpace, S, r: float, u, p: float,
                        conv: ConvolutionResult | None = None) -> ApproxErrorReport:
    """Empirical constants of the two approximation estimates.

    C0 = max_x |u^r(x) - u(x)|^p / <|u(x) - u(.)|^p>_{B(x,r)}
    C1 = max_x lip_h[u^r](x)^p m(B(x,r)) / sum_{A(x,(r/2,r))} Q_u(x,.)^p w,  h = 2 h_min
    Both use 0/0 = 0; a positive numerator over 0 gives +inf and a flag.
    """
    u = np.asarray(u, dtype=float)
    conv = conv or discrete_convolution(space, S, r, u)
    ids = as_ids(S)
    w = space.weights
    h = 2 * space.h_min
    lip_ur = lip_field(space, conv.values, h, rows=ids)
    open_shell = Interval.open(r / 2, r)
    C0 = C1 = 0.0
    wit0 = wit1 = None
    flags = []
    for x in ids:
        nb, d = space.neighbors(int(x), r, include_self=True)
        mB = math.fsum(w[nb])
        dev = np.abs(u[nb] - u[x]) ** p
        den0 = math.fsum(dev * w[nb]) / mB
        num0 = abs(conv.values[x] - u[x]) ** p
        c0 = _ratio(num0, den0, flags, "C0", int(x))
        if c0 > C0:
            C0, wit0 = c0, int(x)
        sh = open_shell.contains(d) & (d > 0)
        q = np.zeros(int(sh.sum()))
        if q.size:
            q = (np.abs(u[nb[sh]] - u[x]) / d[sh]) ** p
        den1 = math.fsum(q * w[nb[sh]])
        num1 = lip_ur[x] ** p * mB
        c1 = _ratio(num1, den1, flags, "C1", int(x))
        if c1 > C1:
            C1, wit1 = c1, int(x)
    return ApproxErrorReport(C0, C1, wit0, wit1, flags)


def _ratio(num, den, flags, name, x):
    if den > 0:
        return num / den
    if num > 1e-14:
        flags.append({"constant": name, "atom": x, "reason": "positive over zero"})
        return math.inf
    return 0.0


def theoretical_constant(C_SD: float, C_prime: float, p: float) -> float:
    """C = C_SD (32 C'^2)^p from the approximation estimate."""
    return C_SD * (INNER * C_prime ** 2) ** p
