"""Local Lipschitz fields, Cheeger-energy estimates, averaging and Riesz potentials.

Scalar fields are plain float arrays indexed by atom. Maps into a metric
target are :class:`MetricMap` objects: each atom carries a *label* in the
target (a real number, a position on a circle, or a row of a distance
matrix) and ``MetricTarget.dist`` compares labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from bbmlab.mm_space import REL_TOL, MetricMeasureSpace, SubsetRef, as_ids


class MetricTarget:
    """Finite (pseudo)metric target space.

    Parameters
    ----------
    kind : {"real", "circle", "matrix"}
        ``real`` labels are real numbers with ``|a - b|``; ``circle`` labels
        are positions on a circle of length ``circumference`` with arc-length
        distance; ``matrix`` labels are integer ids into ``matrix``.
    """

    def __init__(self, kind: str, *, circumference: float = 1.0, matrix=None):
        if kind not in ("real", "circle", "matrix"):
            raise ValueError(f"unknown target kind {kind!r}")
        self.kind = kind
        self.circumference = float(circumference)
        self.matrix = None if matrix is None else np.asarray(matrix, dtype=float)
        if kind == "matrix":
            m = self.matrix
            if m is None or m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("matrix target needs a square distance matrix")
            if np.any(np.diag(m) != 0) or np.any(np.abs(m - m.T) > 0) or np.any(m < 0):
                raise ValueError("target matrix must be symmetric, nonnegative, zero diagonal")

    def dist(self, a, b) -> np.ndarray:
        if self.kind == "real":
            return np.abs(np.asarray(a, float) - np.asarray(b, float))
        if self.kind == "circle":
            t = np.abs(np.asarray(a, float) - np.asarray(b, float)) % self.circumference
            return np.minimum(t, self.circumference - t)
        return self.matrix[np.asarray(a, dtype=np.intp), np.asarray(b, dtype=np.intp)]

    def diameter(self, labels) -> float:
        pts = np.unique(np.asarray(labels))
        if pts.size < 2:
            return 0.0
        if self.kind == "real":
            return float(pts[-1] - pts[0])
        return float(max(self.dist(pts[i], pts).max() for i in range(pts.size)))


class MetricMap:
    """Map from atoms to a metric target, stored as per-atom labels."""

    def __init__(self, labels, target: MetricTarget):
        self.labels = np.asarray(labels)
        self.target = target
        if self.labels.ndim != 1:
            raise ValueError("labels must be one per atom")

    @classmethod
    def scalar(cls, values) -> "MetricMap":
        v = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field must be finite")
        return cls(v, MetricTarget("real"))

    @classmethod
    def identity_circle(cls, space: MetricMeasureSpace) -> "MetricMap":
        if space.metric != "circle":
            raise ValueError("identity_circle needs a circle space")
        return cls(np.asarray(space.coords, dtype=float),
                   MetricTarget("circle", circumference=space.circumference))

    @classmethod
    def table(cls, assignment, matrix) -> "MetricMap":
        return cls(np.asarray(assignment, dtype=np.intp), MetricTarget("matrix", matrix=matrix))

    @property
    def is_scalar(self) -> bool:
        return self.target.kind == "real"

    def d_f(self, I, J) -> np.ndarray:
        return self.target.dist(self.labels[I], self.labels[J])

    def quotient(self, space: MetricMeasureSpace, I, J, D=None) -> np.ndarray:
        """Q_f on pairs; 0 on the diagonal."""
        if D is None:
            D = space.dist_pairs(I, J)
        num = self.d_f(I, J)
        out = np.zeros_like(D, dtype=float)
        pos = D > 0
        out[pos] = num[pos] / D[pos]
        return out

    def compose(self, phi: Callable) -> np.ndarray:
        return np.asarray(phi(self.labels), dtype=float)


def as_map(f) -> MetricMap:
    return f if isinstance(f, MetricMap) else MetricMap.scalar(f)


# -- dictionaries of bounded 1-Lipschitz functions ------------------------

@dataclass
class LipschitzDictionary:
    """Finite family of bounded 1-Lipschitz functions on a target.

    Each member is ``(name, function of labels)``; ``cap`` bounds ``|phi|``.
    """

    target: MetricTarget
    members: list = field(default_factory=list)
    cap: float = math.inf

    @classmethod
    def capped_distances(cls, f: MetricMap, k: int, cap: float | None = None,
                         identity: bool = False) -> "LipschitzDictionary":
        """``phi_y = min(d_Y(y, .), cap)`` at ``k`` farthest-point centres of f's image.

        ``cap`` defaults to the diameter of the image. With ``identity`` a
        real target also gets the clipped identity ``clip(t, -cap, cap)``.
        """
        pts = np.unique(f.labels)
        tgt = f.target
        if cap is None:
            cap = tgt.diameter(pts)
        cap = float(cap)
        centers = [pts[0]]
        gap = tgt.dist(pts, pts[0])
        while len(centers) < min(k, pts.size):
            j = int(np.argmax(gap))
            if gap[j] <= 0:
                break
            centers.append(pts[j])
            gap = np.minimum(gap, tgt.dist(pts, pts[j]))
        members = []
        for y in centers:
            label = int(y) if tgt.kind == "matrix" else f"{float(y):g}"
            members.append((f"dist[{label}]∧{cap:g}",
                            lambda t, y=y: np.minimum(tgt.dist(y, t), cap)))
        if identity:
            members.extend(cls.identity(tgt, cap).members)
        return cls(tgt, members, cap)

    @classmethod
    def identity(cls, target: MetricTarget, cap: float) -> "LipschitzDictionary":
        if target.kind != "real":
            raise ValueError("the identity member needs a real target")
        cap = float(cap)
        return cls(target, [(f"id∧{cap:g}", lambda t: np.clip(np.asarray(t, float), -cap, cap))], cap)

    def __len__(self) -> int:
        return len(self.members)

    def verify(self, labels, chunk: int = 512) -> None:
        """Check 1-Lipschitz and boundedness exhaustively over all label pairs."""
        pts = np.unique(np.asarray(labels))
        for name, phi in self.members:
            vals = np.asarray(phi(pts), dtype=float)
            if np.any(np.abs(vals) > self.cap * (1 + REL_TOL)):
                raise ValueError(f"dictionary member {name} exceeds its cap")
            for s in range(0, pts.size, chunk):
                a = slice(s, s + chunk)
                dv = np.abs(vals[a, None] - vals[None, :])
                dy = self.target.dist(pts[a, None], pts[None, :])
                if np.any(dv > dy * (1 + 1e-9) + 1e-12):
                    raise ValueError(f"dictionary member {name} is not 1-Lipschitz")


# -- energy measures and estimates -----------------------------------------

@dataclass
class EnergyDensity:
    """Atomic carrier of an energy measure: one nonnegative mass per atom."""

    mass: np.ndarray

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        if np.any(self.mass < 0) or not np.all(np.isfinite(self.mass)):
            raise ValueError("energy density must be finite and nonnegative")

    @classmethod
    def constant(cls, space: MetricMeasureSpace, c: float = 1.0) -> "EnergyDensity":
        return cls(c * space.weights)

    @classmethod
    def from_regions(cls, space: MetricMeasureSpace, regions, totals) -> "EnergyDensity":
        """Spread each region's total over its atoms proportionally to weight."""
        mass = np.zeros(space.n)
        for reg, tot in zip(regions, totals):
            ids = as_ids(reg)
            m = space.measure(ids)
            if m > 0:
                mass[ids] += tot * space.weights[ids] / m
        return cls(mass)

    def of(self, S) -> float:
        return math.fsum(self.mass[as_ids(S)])


@dataclass
class EnergyEstimate:
    lower: float
    upper: float
    method: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "method": self.method}


# -- local Lipschitz constants -------------------------------------------

def _rowwise_max(space: MetricMeasureSpace, rows, h: float, values_of_pairs) -> np.ndarray:
    """max over x' in B(x,h)\\{x} of ``values_of_pairs(I, J, D)``; 0 without neighbours."""
    out = np.zeros(space.n)
    for I, J, D in space.pair_blocks(rows, h):
        if I.size:
            np.maximum.at(out, I, values_of_pairs(I, J, D))
    return out


def lip_field(space: MetricMeasureSpace, u, h: float, rows=None) -> np.ndarray:
    """Discrete local Lipschitz constant lip_h[u].

    At each atom x this is the largest difference quotient
    ``|u(x) - u(x')| / d(x, x')`` with ``0 < d(x, x') <= h``, and 0 when x
    has no other atom within ``h``.
    """
    f = as_map(u)
    rows = np.arange(space.n) if rows is None else as_ids(rows)
    return _rowwise_max(space, rows, h, lambda I, J, D: f.d_f(I, J) / D)


def lip_constant(space: MetricMeasureSpace, u, S=None) -> float:
    """Largest difference quotient over pairs inside S (0 for singletons)."""
    f = as_map(u)
    ids = np.arange(space.n) if S is None else as_ids(S)
    best = 0.0
    for I, J, D in space.pair_blocks(ids, cols=ids):
        if I.size:
            best = max(best, float(np.max(f.d_f(I, J) / D)))
    return best


def local_quotient_bound(space: MetricMeasureSpace, f: MetricMap, h: float, rows=None) -> np.ndarray:
    """max over x' in B(x,h) of Q_f(x, x') (with Q_f(x,x) = 0)."""
    return lip_field(space, f, h, rows)


def _lp_distance(space, O, u, v, p) -> float:
    ids = as_ids(O)
    diff = np.abs(np.asarray(u, float)[ids] - np.asarray(v, float)[ids]) ** p
    return math.fsum(diff * space.weights[ids]) ** (1.0 / p)


def _lip_energy(space, O, v, p, h) -> float:
    ids = as_ids(O)
    lip = lip_field(space, v, h, rows=ids)[ids]
    return math.fsum(lip ** p * space.weights[ids])


def scalar_energy(space: MetricMeasureSpace, O, u, p: float, h: float,
                  candidates: Sequence | None = None, tol: float = 1e-9) -> EnergyEstimate:
    """Upper estimate of the relaxed scalar p-energy of u on O.

    ``upper`` is the smallest ``sum_O lip_h[v]^p w`` over the candidates v
    (u itself is always a candidate). Candidates farther than ``tol`` from
    u in L^p(O) are rejected with ``ValueError``. ``lower`` is 0.
    """
    u = np.asarray(u, dtype=float)
    cands = [u] if candidates is None else [np.asarray(c, float) for c in candidates]
    if not any(np.array_equal(c, u) for c in cands):
        cands.insert(0, u)
    best, arg = math.inf, -1
    for k, v in enumerate(cands):
        dist = _lp_distance(space, O, u, v, p)
        if dist > tol:
            raise ValueError(f"candidate {k} is {dist:.3g} from u in L^p, above tol {tol:g}")
        val = _lip_energy(space, O, v, p, h)
        if val < best:
            best, arg = val, k
    return EnergyEstimate(0.0, best, f"min over {len(cands)} candidates (argmin #{arg}), h={h:g}",
                          {"argmin": arg, "h": h})


def _check_regions(space, O, regions) -> list[np.ndarray]:
    seen = np.zeros(space.n, dtype=bool)
    inside = np.zeros(space.n, dtype=bool)
    inside[as_ids(O)] = True
    out = []
    for k, reg in enumerate(regions):
        ids = as_ids(reg)
        if np.any(seen[ids]):
            raise ValueError(f"region {k} overlaps an earlier region")
        if not np.all(inside[ids]):
            raise ValueError(f"region {k} is not contained in O")
        seen[ids] = True
        out.append(ids)
    return out


def metric_energy(space: MetricMeasureSpace, O, f: MetricMap, p: float, h: float,
                  dictionary: LipschitzDictionary, regions=None) -> EnergyEstimate:
    """Two-sided estimate of the metric-valued p-energy of f on O.

    ``lower`` sums, over the disjoint regions, the best dictionary member's
    lip-energy of ``phi o f``; it is a finite instance of the supremum over
    disjoint families and bounded 1-Lipschitz post-compositions.
    ``upper`` is ``sum_O (max_{B(x,h)} Q_f)^p w``, which dominates every
    post-composition because Q contracts under 1-Lipschitz maps.
    """
    f = as_map(f)
    O_ids = as_ids(O)
    regs = _check_regions(space, O_ids, [O_ids] if regions is None else regions)
    lower_terms, picks = [], []
    for ids in regs:
        best, pick = 0.0, None
        for name, phi in dictionary.members:
            val = _lip_energy(space, ids, f.compose(phi), p, h)
            if val > best:
                best, pick = val, name
        lower_terms.append(best)
        picks.append(pick)
    lower = math.fsum(lower_terms)
    qmax = local_quotient_bound(space, f, h, rows=O_ids)[O_ids]
    upper = math.fsum(qmax ** p * space.weights[O_ids])
    if lower > upper:
        # Q contracts under 1-Lipschitz maps, so only rounding can get here
        if lower > upper * (1 + 1e-9) + 1e-15:
            raise ArithmeticError(f"dictionary lower bound {lower} exceeds the Q_f bound {upper}")
        lower = upper
    return EnergyEstimate(lower, upper,
                          f"{len(regs)} regions x {len(dictionary)} dictionary members, h={h:g}",
                          {"region_lower": lower_terms, "argmax": picks, "h": h})


def voronoi_regions(space: MetricMeasureSpace, O, k: int) -> list[SubsetRef]:
    """Split O into k cells around farthest-point seeds (ties go to the earlier seed)."""
    ids = as_ids(O)
    seeds = [int(ids[0])]
    gap = space.dist_row(seeds[0])[ids].copy()
    while len(seeds) < min(k, ids.size):
        j = int(ids[np.argmax(gap)])
        seeds.append(j)
        gap = np.minimum(gap, space.dist_row(j)[ids])
    D = np.stack([space.dist_row(s)[ids] for s in seeds])
    owner = np.argmin(D, axis=0)
    return [SubsetRef(ids[owner == c]) for c in range(len(seeds))]


def coordinate_bins(space: MetricMeasureSpace, O, k: int) -> list[SubsetRef]:
    """Split a 1-D space into k equal coordinate bins (arcs on a circle)."""
    if space.coords is None or space.coords.ndim != 1:
        raise ValueError("coordinate bins need a line or circle space")
    ids = as_ids(O)
    c = space.coords[ids]
    if space.metric == "circle":
        lo, width = 0.0, space.circumference / k
    else:
        lo, width = c.min(), (c.max() - c.min()) / k
        width = width if width > 0 else 1.0
    idx = np.minimum(((c - lo) / width).astype(int), k - 1)
    return [SubsetRef(ids[idx == b]) for b in range(k) if np.any(idx == b)]


# -- averaging operator and Riesz potential --------------------------------

def averaging_many(space: MetricMeasureSpace, e: EnergyDensity, centers, radii) -> np.ndarray:
    """A_p(x, r) = e(B(x,r)) / m(B(x,r)) for arrays of centres and radii (0 when m = 0)."""
    num = space.ball_mass(centers, radii, e.mass)
    den = space.ball_mass(centers, radii)
    out = np.zeros_like(num)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    return out


def averaging_Ap(space: MetricMeasureSpace, e: EnergyDensity, x: int, r: float) -> float:
    if not r > 0:
        raise ValueError("r must be positive")
    return float(averaging_many(space, e, [x], [r])[0])


def riesz_many(space: MetricMeasureSpace, e: EnergyDensity, centers, radii) -> np.ndarray:
    """R_p(x, r) = (1/3) sum_k (2/3)^k A_p(x, r/2^k), summed exactly.

    Once ``r/2^k < h_min`` every ball is the single atom x, so the rest of
    the series is ``(2/3)^k e(x)/w(x)`` in closed form.
    """
    centers = np.atleast_1d(np.asarray(centers, dtype=np.intp))
    radii = np.atleast_1d(np.asarray(radii, dtype=float)).copy()
    centers, radii = np.broadcast_arrays(centers, radii)
    radii = radii.astype(float).copy()
    w = space.weights[centers]
    atom = np.zeros(centers.shape)
    pos = w > 0
    atom[pos] = e.mass[centers[pos]] / w[pos]
    total = np.zeros(centers.shape)
    weight = np.full(centers.shape, 1.0 / 3.0)
    active = radii >= space.h_min * (1 - REL_TOL)
    while np.any(active):
        a = np.flatnonzero(active)
        total[a] += weight[a] * averaging_many(space, e, centers[a], radii[a])
        radii[a] /= 2.0
        weight[a] *= 2.0 / 3.0
        active[a] = radii[a] >= space.h_min * (1 - REL_TOL)
    # remaining tail: (1/3) sum_{j>=K} (2/3)^j = (2/3)^K = 3 * weight
    return total + 3.0 * weight * atom


def riesz_Rp(space: MetricMeasureSpace, e: EnergyDensity, x: int, r: float,
             tol: float = 1e-12) -> float:
    """Riesz potential at one atom; the closed-form tail makes truncation error zero (<= tol)."""
    if not (r > 0 and tol > 0):
        raise ValueError("r and tol must be positive")
    return float(riesz_many(space, e, [x], [r])[0])


@dataclass
class PointwiseReport:
    constant: float
    witness: tuple | None
    pairs: int


def pointwise_inequality_check(space: MetricMeasureSpace, f, e: EnergyDensity, p: float,
                               lam: float, S, R: float) -> PointwiseReport:
    """Smallest C with Q_f^p <= C (R_p(x, lam d) + R_p(x', lam d)) over x in S, 0 < d <= R."""
    if lam < 1 or not R > 0:
        raise ValueError("need lambda >= 1 and R > 0")
    f = as_map(f)
    best, wit, count = 0.0, None, 0
    for I, J, D in space.pair_blocks(as_ids(S), R):
        if not I.size:
            continue
        count += I.size
        num = f.quotient(space, I, J, D) ** p
        den = riesz_many(space, e, I, lam * D) + riesz_many(space, e, J, lam * D)
        bad = (den <= 0) & (num > 0)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            return PointwiseReport(math.inf, (int(I[k]), int(J[k])), count)
        ratio = np.zeros_like(num)
        pos = den > 0
        ratio[pos] = num[pos] / den[pos]
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, wit = float(ratio[k]), (int(I[k]), int(J[k]))
    return PointwiseReport(best, wit, count)
