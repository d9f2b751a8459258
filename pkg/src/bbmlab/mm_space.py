"""Finite metric measure spaces.

A space is a finite set of weighted atoms together with a distance oracle.
Balls, annuli and set enlargements are closed/half-open exactly as written,
with a relative tolerance of ``REL_TOL`` on every boundary so that grid
distances computed in floating point land on the intended side.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

REL_TOL = 1e-12
CRITICAL_EPS = 1e-9
EXHAUSTIVE_TRIANGLE_LIMIT = 200


class MetricError(ValueError):
    """Raised when a distance matrix or generator does not define a metric space."""


def _tol(v: float) -> float:
    return REL_TOL * abs(v) if math.isfinite(v) else 0.0


@dataclass(frozen=True)
class Interval:
    """Interval of distances with explicit endpoint flags.

    The default ``Interval(a, b)`` is the half-open bin ``(a, b]``.
    """

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = True

    @classmethod
    def closed(cls, lo: float, hi: float) -> "Interval":
        return cls(lo, hi, True, True)

    @classmethod
    def open(cls, lo: float, hi: float) -> "Interval":
        return cls(lo, hi, False, False)

    @property
    def inf(self) -> float:
        return self.lo

    @property
    def sup(self) -> float:
        return self.hi

    def is_empty(self) -> bool:
        if self.lo < self.hi:
            return False
        return not (self.lo == self.hi and self.lo_closed and self.hi_closed)

    def contains(self, d):
        d = np.asarray(d, dtype=float)
        if self.lo_closed:
            above = d >= self.lo - _tol(self.lo)
        else:
            above = d > self.lo + _tol(self.lo)
        if math.isinf(self.hi):
            below = np.ones_like(above)
        elif self.hi_closed:
            below = d <= self.hi + _tol(self.hi)
        else:
            below = d < self.hi - _tol(self.hi)
        return above & below

    def search_range(self, sorted_values: np.ndarray) -> tuple[int, int]:
        """Index range [a, b) of the ascending array whose entries ``contains`` accepts."""
        if self.lo_closed:
            a = np.searchsorted(sorted_values, self.lo - _tol(self.lo), side="left")
        else:
            a = np.searchsorted(sorted_values, self.lo + _tol(self.lo), side="right")
        if math.isinf(self.hi):
            b = sorted_values.size
        elif self.hi_closed:
            b = np.searchsorted(sorted_values, self.hi + _tol(self.hi), side="right")
        else:
            b = np.searchsorted(sorted_values, self.hi - _tol(self.hi), side="left")
        return int(a), int(max(a, b))

    def __str__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo:g}, {self.hi:g}{right}"


class SubsetRef:
    """Sorted, deduplicated set of atom ids."""

    __slots__ = ("ids",)

    def __init__(self, ids: Iterable[int] = ()):
        arr = np.unique(np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids, dtype=np.intp))
        arr.setflags(write=False)
        self.ids = arr

    def __len__(self) -> int:
        return int(self.ids.size)

    def __iter__(self):
        return iter(self.ids.tolist())

    def __contains__(self, i) -> bool:
        k = np.searchsorted(self.ids, i)
        return bool(k < self.ids.size and self.ids[k] == i)

    def __eq__(self, other) -> bool:
        if isinstance(other, SubsetRef):
            return np.array_equal(self.ids, other.ids)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.ids.tobytes())

    def __repr__(self) -> str:
        if len(self) > 8:
            return f"SubsetRef(<{len(self)} atoms>)"
        return f"SubsetRef({self.ids.tolist()})"

    def union(self, other: "SubsetRef") -> "SubsetRef":
        return SubsetRef(np.concatenate([self.ids, other.ids]))

    def intersect(self, other: "SubsetRef") -> "SubsetRef":
        return SubsetRef(np.intersect1d(self.ids, other.ids))


def as_ids(S) -> np.ndarray:
    if isinstance(S, SubsetRef):
        return S.ids
    return SubsetRef(S).ids


class MetricMeasureSpace:
    """Finite metric measure space (atoms, distance oracle, weights).

    Parameters
    ----------
    weights : array_like
        Nonnegative mass of each atom.
    metric : {"line", "circle", "plane", "matrix"}
        How distances are computed. ``line`` and ``circle`` take 1-D
        ``coords``; ``plane`` takes ``(n, 2)`` coords; ``matrix`` takes a
        full symmetric distance matrix.
    circumference : float
        Length of the circle for ``metric="circle"`` (geodesic distance).
    """

    _ROW_CACHE = 256

    def __init__(self, weights, *, metric: str, coords=None, matrix=None,
                 circumference: float = 1.0, name: str = ""):
        w = np.asarray(weights, dtype=float).copy()
        if w.ndim != 1 or w.size == 0:
            raise MetricError("weights must be a nonempty vector")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise MetricError("weights must be finite and nonnegative")
        if not w.sum() > 0:
            raise MetricError("total mass must be positive")
        w.setflags(write=False)
        self.weights = w
        self.n = w.size
        self.metric = metric
        self.name = name
        self.circumference = float(circumference)
        self.coords = None
        self.matrix = None
        if metric in ("line", "circle"):
            c = np.asarray(coords, dtype=float).reshape(-1)
            if metric == "circle":
                c = np.mod(c, self.circumference)
            self.coords = c
            self._order = np.argsort(c, kind="stable")
            self._sorted = c[self._order]
        elif metric == "plane":
            self.coords = np.asarray(coords, dtype=float).reshape(-1, 2)
        elif metric == "matrix":
            m = np.asarray(matrix, dtype=float)
            _check_metric_matrix(m)
            self.matrix = m
        else:
            raise MetricError(f"unknown metric kind {metric!r}")
        if self.coords is not None:
            self.coords.setflags(write=False)
            if self.coords.shape[0] != self.n:
                raise MetricError("coords and weights have different lengths")
        if self.matrix is not None and self.matrix.shape[0] != self.n:
            raise MetricError("matrix and weights have different sizes")
        self._rows: OrderedDict[int, tuple[np.ndarray, np.ndarray]] = OrderedDict()
        if self.h_min <= 0:
            raise MetricError("two distinct atoms are at distance 0")
        # a lone atom is the one degenerate space we accept (diameter 0)
        if self.n > 1 and not self.diameter > 0:
            raise MetricError("space must have positive diameter")

    def __repr__(self) -> str:
        label = self.name or self.metric
        return f"MetricMeasureSpace({label}, n={self.n})"

    # -- distances ---------------------------------------------------------

    def dist_row(self, i: int) -> np.ndarray:
        """Distances from atom ``i`` to every atom."""
        if self.metric == "line":
            return np.abs(self.coords - self.coords[i])
        if self.metric == "circle":
            a = np.abs(self.coords - self.coords[i])
            return np.minimum(a, self.circumference - a)
        if self.metric == "plane":
            diff = self.coords - self.coords[i]
            return np.hypot(diff[:, 0], diff[:, 1])
        return self.matrix[i]

    def dist_pairs(self, I, J) -> np.ndarray:
        """Elementwise distances d(I[k], J[k])."""
        I = np.asarray(I, dtype=np.intp)
        J = np.asarray(J, dtype=np.intp)
        if self.metric == "line":
            return np.abs(self.coords[I] - self.coords[J])
        if self.metric == "circle":
            a = np.abs(self.coords[I] - self.coords[J])
            return np.minimum(a, self.circumference - a)
        if self.metric == "plane":
            diff = self.coords[I] - self.coords[J]
            return np.hypot(diff[:, 0], diff[:, 1])
        return self.matrix[I, J]

    def dist(self, i: int, j: int) -> float:
        return float(self.dist_pairs([i], [j])[0])

    @cached_property
    def h_min(self) -> float:
        """Smallest positive pairwise distance."""
        if self.n == 1:
            return math.inf
        if self.metric == "line":
            gaps = np.diff(self._sorted)
            return float(gaps.min())
        if self.metric == "circle":
            gaps = np.diff(np.append(self._sorted, self._sorted[0] + self.circumference))
            return float(gaps.min())
        best = math.inf
        for i in range(self.n):
            row = self.dist_row(i)
            best = min(best, float(np.delete(row, i).min()))
        return best

    @cached_property
    def diameter(self) -> float:
        if self.n == 1:
            return 0.0
        if self.metric == "line":
            return float(self._sorted[-1] - self._sorted[0])
        return float(max(self.dist_row(i).max() for i in range(self.n)))

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    @property
    def positive(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def all(self) -> SubsetRef:
        return SubsetRef(np.arange(self.n))

    def subset(self, ids) -> SubsetRef:
        s = SubsetRef(ids)
        if len(s) and (s.ids[0] < 0 or s.ids[-1] >= self.n):
            raise IndexError("atom id out of range")
        return s

    def where(self, predicate) -> SubsetRef:
        """Atoms whose coordinates satisfy ``predicate(coords)``."""
        return SubsetRef(np.flatnonzero(predicate(self.coords)))

    def label(self, i: int):
        """Human-readable position of atom ``i`` (coordinate when known)."""
        if self.coords is None:
            return int(i)
        c = self.coords[i]
        return float(c) if np.ndim(c) == 0 else [float(v) for v in c]

    # -- neighbourhoods ----------------------------------------------------

    def neighbors(self, i: int, r: float, *, include_self: bool = False):
        """Atoms within closed distance ``r`` of ``i`` as ``(ids, dists)``, ids ascending."""
        R = r + _tol(r)
        if self.metric == "line" and math.isfinite(R):
            c = self.coords[i]
            lo = np.searchsorted(self._sorted, c - R, side="left")
            hi = np.searchsorted(self._sorted, c + R, side="right")
            ids = np.sort(self._order[lo:hi])
            d = np.abs(self.coords[ids] - c)
            keep = d <= R
            ids, d = ids[keep], d[keep]
        else:
            row = self.dist_row(i)
            ids = np.flatnonzero(row <= R)
            d = row[ids]
        if not include_self:
            keep = ids != i
            ids, d = ids[keep], d[keep]
        return ids, d

    def ball(self, x: int, r: float) -> SubsetRef:
        """Closed ball B(x, r)."""
        return SubsetRef(self.neighbors(x, r, include_self=True)[0])

    def annulus(self, x: int, tau: Interval) -> SubsetRef:
        """A(x, tau) = atoms whose distance to x lies in tau."""
        if tau.is_empty():
            return SubsetRef()
        row = self.dist_row(x)
        return SubsetRef(np.flatnonzero(tau.contains(row)))

    def enlarge(self, S, r: float) -> SubsetRef:
        """B(S, r): atoms within closed distance r of S."""
        ids = as_ids(S)
        if ids.size == 0:
            return SubsetRef()
        return SubsetRef(np.flatnonzero(self.distance_to(ids) <= r + _tol(r)))

    def distance_to(self, S) -> np.ndarray:
        """dist({x}, S) for every atom x; +inf when S is empty."""
        ids = as_ids(S)
        if ids.size == 0:
            return np.full(self.n, math.inf)
        if self.metric == "line":
            sc = np.sort(self.coords[ids])
            k = np.searchsorted(sc, self.coords)
            left = np.abs(self.coords - sc[np.clip(k - 1, 0, sc.size - 1)])
            right = np.abs(sc[np.clip(k, 0, sc.size - 1)] - self.coords)
            return np.minimum(left, right)
        if self.metric == "circle":
            C = self.circumference
            sc = np.sort(self.coords[ids])
            ext = np.concatenate([[sc[-1] - C], sc, [sc[0] + C]])
            k = np.searchsorted(ext, self.coords)
            a = np.abs(self.coords - ext[np.clip(k - 1, 0, ext.size - 1)])
            b = np.abs(ext[np.clip(k, 0, ext.size - 1)] - self.coords)
            near = np.minimum(a, b)
            return np.minimum(near, C - near)
        out = np.full(self.n, math.inf)
        for s in ids:
            np.minimum(out, self.dist_row(s), out=out)
        return out

    def set_distance(self, S1, S2) -> float:
        a, b = as_ids(S1), as_ids(S2)
        if a.size == 0 or b.size == 0:
            return math.inf
        if a.size > b.size:
            a, b = b, a
        return float(self.distance_to(a)[b].min())

    # -- measure -----------------------------------------------------------

    def measure(self, S) -> float:
        ids = as_ids(S)
        return math.fsum(self.weights[ids]) if ids.size else 0.0

    def average(self, S, u) -> float:
        """Weighted mean of ``u`` over S; 0 when m(S) = 0."""
        ids = as_ids(S)
        m = self.measure(ids)
        if m <= 0:
            return 0.0
        u = np.asarray(u, dtype=float)
        return math.fsum(u[ids] * self.weights[ids]) / m

    def ball_mass(self, centers, radii, values=None) -> np.ndarray:
        """Vectorised ``values(B(centers[k], radii[k]))`` (default: ``m``)."""
        centers = np.atleast_1d(np.asarray(centers, dtype=np.intp))
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        centers, radii = np.broadcast_arrays(centers, radii)
        vals = self.weights if values is None else np.asarray(values, dtype=float)
        R = radii + REL_TOL * np.abs(np.where(np.isfinite(radii), radii, 0.0))
        if self.metric == "line":
            prefix = np.concatenate([[0.0], np.cumsum(vals[self._order])])
            c = self.coords[centers]
            lo = np.searchsorted(self._sorted, c - R, side="left")
            hi = np.searchsorted(self._sorted, c + R, side="right")
            return prefix[hi] - prefix[lo]
        if self.metric == "circle":
            C = self.circumference
            ext = np.concatenate([self._sorted - C, self._sorted, self._sorted + C])
            v = vals[self._order]
            prefix = np.concatenate([[0.0], np.cumsum(np.concatenate([v, v, v]))])
            c = self.coords[centers]
            Rc = np.minimum(R, C)
            lo = np.searchsorted(ext, c - Rc, side="left")
            hi = np.searchsorted(ext, c + Rc, side="right")
            out = prefix[hi] - prefix[lo]
            full = R >= C / 2
            out[full] = vals.sum()
            return out
        out = np.empty(centers.shape, dtype=float)
        for c in np.unique(centers):
            sel = centers == c
            order, dsorted = self._sorted_row(int(c))
            prefix = np.concatenate([[0.0], np.cumsum(vals[order])])
            out[sel] = prefix[np.searchsorted(dsorted, R[sel], side="right")]
        return out

    def ball_masses(self, r: float, values=None) -> np.ndarray:
        """values(B(x, r)) for every atom x."""
        return self.ball_mass(np.arange(self.n), np.full(self.n, float(r)), values)

    def _sorted_row(self, i: int):
        hit = self._rows.get(i)
        if hit is not None:
            self._rows.move_to_end(i)
            return hit
        row = self.dist_row(i)
        order = np.argsort(row, kind="stable")
        entry = (order, row[order])
        self._rows[i] = entry
        if len(self._rows) > self._ROW_CACHE:
            self._rows.popitem(last=False)
        return entry

    # -- pair enumeration --------------------------------------------------

    def pair_blocks(self, rows, r: float = math.inf, *, lo: float = 0.0,
                    block: int = 256, cols=None):
        """Yield ``(I, J, D)`` for ordered pairs with ``lo < d(I, J) <= r``, I != J.

        Rows are processed in blocks of ``block`` atoms, in the order given.
        Within a block the pairs are grouped by row. For the line and circle
        metrics with finite ``r`` the candidates come from a sorted-coordinate
        window, so the cost is proportional to the number of pairs returned;
        other metrics scan dense distance rows. ``cols`` restricts the second
        atom to a subset.
        """
        rows = np.asarray(as_ids(rows) if not isinstance(rows, np.ndarray) else rows,
                          dtype=np.intp)
        col_mask = None
        if cols is not None:
            col_mask = np.zeros(self.n, dtype=bool)
            col_mask[as_ids(cols)] = True
        R = r + _tol(r)
        L = lo + _tol(lo) if lo > 0 else -1.0
        windowed = math.isfinite(R) and (
            self.metric == "line" or (self.metric == "circle" and R < 0.49 * self.circumference))
        for start in range(0, rows.size, block):
            rb = rows[start:start + block]
            if windowed:
                I, J = self._window_pairs(rb, R)
                D = self.dist_pairs(I, J)
            else:
                D_block = self._dense_block(rb)
                ii, jj = np.nonzero(D_block <= R)
                I, J = rb[ii], jj.astype(np.intp)
                D = D_block[ii, jj]
            keep = (I != J) & (D <= R) & (D > L)
            if col_mask is not None:
                keep &= col_mask[J]
            yield I[keep], J[keep], D[keep]

    def _dense_block(self, rb: np.ndarray) -> np.ndarray:
        if self.metric == "matrix":
            return self.matrix[rb]
        if self.metric == "plane":
            diff = self.coords[rb][:, None, :] - self.coords[None, :, :]
            return np.hypot(diff[..., 0], diff[..., 1])
        a = np.abs(self.coords[rb][:, None] - self.coords[None, :])
        if self.metric == "circle":
            a = np.minimum(a, self.circumference - a)
        return a

    def _window_pairs(self, rb: np.ndarray, R: float):
        c = self.coords[rb]
        if self.metric == "line":
            ext, ext_ids = self._sorted, self._order
        else:
            C = self.circumference
            ext = np.concatenate([self._sorted - C, self._sorted, self._sorted + C])
            ext_ids = np.tile(self._order, 3)
        lo = np.searchsorted(ext, c - R * (1 + 1e-9), side="left")
        hi = np.searchsorted(ext, c + R * (1 + 1e-9), side="right")
        counts = hi - lo
        I = np.repeat(rb, counts)
        offsets = np.repeat(lo - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
        J = ext_ids[offsets + np.arange(counts.sum())]
        # group by row (in the order given), columns ascending
        rank = np.empty(self.n, dtype=np.intp)
        rank[rb] = np.arange(rb.size)
        order = np.lexsort((J, rank[I]))
        return I[order], J[order]

    # -- critical radii ----------------------------------------------------

    def distinct_distances(self, d_max: float = math.inf) -> np.ndarray:
        """Distinct positive pairwise distances ≤ d_max (merged at 1e-10 relative)."""
        chunks = []
        if self.metric in ("line", "circle"):
            # every distance is a difference of sorted coordinates
            for i in range(self.n):
                row = self.dist_row(i)
                chunks.append(np.unique(row[(row > 0) & (row <= d_max + _tol(d_max))]))
        else:
            for i in range(self.n):
                row = self.dist_row(i)
                chunks.append(np.unique(row[(row > 0) & (row <= d_max + _tol(d_max))]))
        if not chunks:
            return np.empty(0)
        vals = np.unique(np.concatenate(chunks))
        return _merge_close(vals, 1e-10)

    def critical_radii(self, R: float, factors: Sequence[float] = (1.0,),
                       r_min: float = 0.0) -> np.ndarray:
        """Radii in [r_min, R] at which some ball B(x, f·r) changes, plus the
        points just below them; exact extremisation over r ∈ (0, R].

        ``factors`` lists every multiple ``f`` with which a radius enters a
        ball (2 for the doubled ball, 4/3 for the strong-doubling shell, ...).
        A radius r matters when f·r equals a pairwise distance d.
        """
        factors = [float(f) for f in factors]
        dists = self.distinct_distances(R * max(factors))
        cand = []
        for f in factors:
            base = dists / f
            cand.append(base)
            cand.append(base * (1.0 - CRITICAL_EPS))
        radii = np.unique(np.concatenate(cand)) if cand else np.empty(0)
        radii = radii[(radii > 0) & (radii <= R + _tol(R)) & (radii >= r_min)]
        return _merge_close(radii, 1e-12)


def _merge_close(sorted_vals: np.ndarray, rel: float) -> np.ndarray:
    if sorted_vals.size == 0:
        return sorted_vals
    keep = [sorted_vals[0]]
    for v in sorted_vals[1:]:
        if v > keep[-1] * (1 + rel):
            keep.append(v)
    return np.asarray(keep)


def _check_metric_matrix(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise MetricError("distance matrix must be square")
    if np.any(~np.isfinite(m)):
        raise MetricError("distance matrix has non-finite entries (disconnected graph?)")
    n = m.shape[0]
    if np.any(np.diag(m) != 0):
        i = int(np.flatnonzero(np.diag(m) != 0)[0])
        raise MetricError(f"nonzero diagonal at atom {i}")
    asym = np.abs(m - m.T) > REL_TOL * np.maximum(np.abs(m), 1.0)
    if asym.any():
        i, j = map(int, np.argwhere(asym)[0])
        raise MetricError(f"asymmetry at ({i},{j}): {m[i, j]} != {m[j, i]}")
    off = m + np.eye(n)
    if np.any(off <= 0):
        i, j = map(int, np.argwhere(off <= 0)[0])
        raise MetricError(f"dist({i},{j}) <= 0 for distinct atoms")
    if n <= EXHAUSTIVE_TRIANGLE_LIMIT:
        mids = range(n)
    else:
        rng = np.random.default_rng(0)
        mids = rng.choice(n, size=EXHAUSTIVE_TRIANGLE_LIMIT, replace=False)
    for j in mids:
        via = m[:, j][:, None] + m[j, :][None, :]
        bad = m > via * (1 + REL_TOL)
        if bad.any():
            i, k = map(int, np.argwhere(bad)[0])
            j = int(j)
            # atoms are reported with 1-based labels, as a person reads a matrix
            raise MetricError(f"triangle violation ({i + 1},{j + 1},{k + 1}): "
                              f"d({i + 1},{k + 1})={m[i, k]:g} > "
                              f"d({i + 1},{j + 1})+d({j + 1},{k + 1})={via[i, k]:g}")


# -- generators ------------------------------------------------------------

SPACE_KINDS = ("interval_grid", "square_grid", "circle_grid", "weighted_interval",
               "metric_graph", "explicit")


@dataclass
class SpaceGenerator:
    """Recipe for a test space; serialisable to the JSON space description."""

    kind: str
    n: int | None = None
    weights: list | None = None
    edges: list | None = None
    matrix: list | None = None
    layout: str = "midpoint"

    @classmethod
    def from_dict(cls, doc: dict) -> "SpaceGenerator":
        allowed = {"kind", "n", "weights", "edges", "matrix", "layout"}
        unknown = set(doc) - allowed
        if unknown:
            raise MetricError(f"unknown space keys: {sorted(unknown)}")
        if doc.get("kind") not in SPACE_KINDS:
            raise MetricError(f"unknown space kind {doc.get('kind')!r}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "SpaceGenerator":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items()
                if v is not None and not (k == "layout" and v == "midpoint")}


def build_space(gen: SpaceGenerator | dict) -> MetricMeasureSpace:
    if isinstance(gen, dict):
        gen = SpaceGenerator.from_dict(gen)
    kind, n = gen.kind, gen.n
    if kind in ("interval_grid", "square_grid", "circle_grid", "weighted_interval"):
        if n is None or int(n) < 2:
            raise MetricError(f"{kind} needs n >= 2")
        n = int(n)
    if kind == "interval_grid":
        if gen.layout == "nodes":
            coords = np.arange(n) / (n - 1)
        elif gen.layout == "midpoint":
            coords = (np.arange(n) + 0.5) / n
        else:
            raise MetricError(f"unknown layout {gen.layout!r}")
        return MetricMeasureSpace(np.full(n, 1.0 / n), metric="line", coords=coords,
                                  name=f"interval_grid({n})")
    if kind == "weighted_interval":
        prof = np.asarray(gen.weights, dtype=float)
        if prof.shape != (n,):
            raise MetricError("weighted_interval needs one weight per cell")
        if np.any(prof < 0):
            raise MetricError("weights must be nonnegative")
        return MetricMeasureSpace(prof / n, metric="line", coords=(np.arange(n) + 0.5) / n,
                                  name=f"weighted_interval({n})")
    if kind == "square_grid":
        g = (np.arange(n) + 0.5) / n
        xx, yy = np.meshgrid(g, g, indexing="ij")
        coords = np.column_stack([xx.ravel(), yy.ravel()])
        return MetricMeasureSpace(np.full(n * n, 1.0 / (n * n)), metric="plane",
                                  coords=coords, name=f"square_grid({n})")
    if kind == "circle_grid":
        return MetricMeasureSpace(np.full(n, 1.0 / n), metric="circle",
                                  coords=np.arange(n) / n, circumference=1.0,
                                  name=f"circle_grid({n})")
    if kind == "metric_graph":
        edges = np.asarray(gen.edges, dtype=float).reshape(-1, 3)
        nv = int(n) if n is not None else int(edges[:, :2].max()) + 1
        if np.any(edges[:, 2] <= 0):
            raise MetricError("edge lengths must be positive")
        i, j = edges[:, 0].astype(int), edges[:, 1].astype(int)
        graph = coo_matrix((edges[:, 2], (i, j)), shape=(nv, nv)).tocsr()
        dist = shortest_path(graph, directed=False)
        w = np.full(nv, 1.0 / nv) if gen.weights is None else np.asarray(gen.weights, float)
        return MetricMeasureSpace(w, metric="matrix", matrix=dist, name=f"metric_graph({nv})")
    if kind == "explicit":
        m = np.asarray(gen.matrix, dtype=float)
        w = np.full(m.shape[0], 1.0 / m.shape[0]) if gen.weights is None else gen.weights
        return MetricMeasureSpace(w, metric="matrix", matrix=m, name=f"explicit({m.shape[0]})")
    raise MetricError(f"unknown space kind {kind!r}")


def space_from_json(text: str) -> MetricMeasureSpace:
    return build_space(SpaceGenerator.from_json(text))
