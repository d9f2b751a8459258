"""Mollifier families, dyadic admissibility sums and step envelopes.

A family maps ``delta`` and an ordered pair of atoms to a nonnegative
kernel value. Every evaluation here is vectorised over arrays of pairs
``(I, J, D)`` with ``D = d(I, J)``; ball masses that the kernels need are
memoised per pair block in a small dict so that sweeping several ``delta``
values over the same pairs computes them once.

Interval partitions are lists of :class:`~bbmlab.mm_space.Interval` plus an
optional dyadic tail ``(t/2^{j+1}, t/2^j]``, ``j >= 0``, below ``tail_start``;
tail bins below the grid resolution hold no pairs and are skipped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from bbmlab.expr import SafeExpression
from bbmlab.mm_space import REL_TOL, Interval, MetricMeasureSpace, as_ids


# -- families ----------------------------------------------------------------

class MollifierFamily:
    """Base class: ``kernel(space, delta, I, J, D)`` returns rho_delta(I, J)."""

    name = "family"
    p = 1.0

    def kernel(self, space, delta, I, J, D, cache=None) -> np.ndarray:
        raise NotImplementedError

    def support_radius(self, delta: float) -> float:
        """Every pair farther apart than this has kernel value 0."""
        return math.inf

    def eval(self, delta: float, space: MetricMeasureSpace, x: int, xp: int) -> float:
        if x == xp:
            raise ValueError("kernels are evaluated off the diagonal")
        I, J = np.array([x]), np.array([xp])
        return float(self.kernel(space, delta, I, J, space.dist_pairs(I, J))[0])

    def to_dict(self) -> dict:
        raise NotImplementedError


def _ball_mass_cached(space, cache, key, I, radii):
    if cache is None:
        return space.ball_mass(I, radii)
    if key not in cache:
        cache[key] = space.ball_mass(I, radii)
    return cache[key]


def _within(D, r):
    return D <= r + REL_TOL * r


class Builtin(MollifierFamily):
    """The five closed-form families rho^{kappa,p}, kappa = 1..5 (d = d(x, x')).

    1. ``delta d^{p delta} [d <= 1] / m(B(x, 4d))``
    2. ``(d/delta)^p [d <= delta] / m(B(x, delta))``
    3. ``[d <= delta] / m(B(x, delta))``
    4. ``(d/delta)^p [d <= delta] / m(B(x, d))``
    5. ``[delta < d <= 1] / (|ln delta| m(B(x, 4d)))``
    """

    def __init__(self, kappa: int, p: float = 1.0):
        if kappa not in (1, 2, 3, 4, 5):
            raise ValueError("builtin families are numbered 1..5")
        if p < 1:
            raise ValueError("p must be ≥ 1")
        self.kappa = int(kappa)
        self.p = float(p)
        self.name = f"rho{self.kappa}"

    def __repr__(self) -> str:
        return f"Builtin(kappa={self.kappa}, p={self.p:g})"

    def support_radius(self, delta: float) -> float:
        return 1.0 if self.kappa in (1, 5) else float(delta)

    def kernel(self, space, delta, I, J, D, cache=None) -> np.ndarray:
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        D = np.asarray(D, dtype=float)
        k, p = self.kappa, self.p
        out = np.zeros(D.shape)
        if k == 1:
            on = _within(D, 1.0)
            mB = _ball_mass_cached(space, cache, ("B", 4.0), I, 4.0 * D)
            out[on] = delta * D[on] ** (p * delta) / mB[on]
        elif k in (2, 3):
            on = _within(D, delta)
            key = ("Bdelta", delta)
            if cache is not None and key in cache:
                mBd = cache[key]
            else:
                mBd = space.ball_masses(delta)
                if cache is not None:
                    cache[key] = mBd
            val = 1.0 / mBd[np.asarray(I)[on]]
            if k == 2:
                val = val * (D[on] / delta) ** p
            out[on] = val
        elif k == 4:
            on = _within(D, delta)
            mB = _ball_mass_cached(space, cache, ("B", 1.0), I, D)
            out[on] = (D[on] / delta) ** p / mB[on]
        else:
            on = Interval(delta, 1.0).contains(D)
            mB = _ball_mass_cached(space, cache, ("B", 4.0), I, 4.0 * D)
            out[on] = 1.0 / (abs(math.log(delta)) * mB[on])
        return out

    def to_dict(self) -> dict:
        return {"family": self.kappa, "p": self.p}


class ZeroFamily(MollifierFamily):
    name = "zero"

    def __init__(self, p: float = 1.0):
        self.p = float(p)

    def support_radius(self, delta):
        return 0.0

    def kernel(self, space, delta, I, J, D, cache=None):
        return np.zeros(np.shape(D))

    def to_dict(self):
        return {"family": "zero", "p": self.p}


class RadialTable(MollifierFamily):
    """Kernel ``value_k(delta) / m(B(x, d))`` on dyadic bins ``(base/2^{k+1}, base/2^k]``.

    ``bins`` maps each delta to its list of bin values (k = 0, 1, ...); bins
    past the end of a list carry 0, and so does every d > base.
    """

    name = "table"

    def __init__(self, base: float, bins: dict, p: float = 1.0):
        if not base > 0:
            raise ValueError("table base must be positive")
        self.base = float(base)
        self.bins = {float(k): np.asarray(v, dtype=float) for k, v in bins.items()}
        self.p = float(p)
        for v in self.bins.values():
            if np.any(v < 0):
                raise ValueError("table values must be nonnegative")

    def support_radius(self, delta):
        return self.base

    def _values(self, delta):
        for k, v in self.bins.items():
            if math.isclose(k, delta, rel_tol=1e-12):
                return v
        raise KeyError(f"no table row for delta={delta!r}")

    def kernel(self, space, delta, I, J, D, cache=None):
        vals = self._values(delta)
        D = np.asarray(D, dtype=float)
        out = np.zeros(D.shape)
        on = _within(D, self.base) & (D > 0)
        k = bin_index(D[on], self.base)
        ok = k < vals.size
        idx = np.flatnonzero(on)[ok]
        mB = _ball_mass_cached(space, cache, ("B", 1.0), I, D)
        out[idx] = vals[k[ok]] / mB[idx]
        return out

    def to_dict(self):
        return {"family": "table", "base": self.base, "p": self.p,
                "bins": {repr(k): v.tolist() for k, v in self.bins.items()}}


_EXPR_VARS = ("d", "delta", "p", "mB_d", "mB_4d", "mB_delta")


class ExprFamily(MollifierFamily):
    """Kernel given as an arithmetic expression.

    Available names: ``d``, ``delta``, ``p``, ball masses ``mB_d``,
    ``mB_4d``, ``mB_delta`` (balls centred at the first atom) and the
    functions of :data:`bbmlab.expr.FUNCTIONS`. Comparisons yield
    0/1 so indicators can be written as ``(d <= delta)``.
    """

    name = "expr"

    def __init__(self, expr: str, p: float = 1.0, support: float | None = None):
        self.expr = expr
        self._expr = SafeExpression(expr, _EXPR_VARS)
        self._names = self._expr.names
        self.p = float(p)
        self.support = None if support is None else float(support)

    def support_radius(self, delta):
        return math.inf if self.support is None else self.support

    def kernel(self, space, delta, I, J, D, cache=None):
        D = np.asarray(D, dtype=float)
        env = {"d": D, "delta": float(delta), "p": self.p}
        if "mB_d" in self._names:
            env["mB_d"] = _ball_mass_cached(space, cache, ("B", 1.0), I, D)
        if "mB_4d" in self._names:
            env["mB_4d"] = _ball_mass_cached(space, cache, ("B", 4.0), I, 4.0 * D)
        if "mB_delta" in self._names:
            env["mB_delta"] = space.ball_masses(delta)[np.asarray(I)]
        val = np.broadcast_to(self._expr(**env), D.shape).copy()
        if self.support is not None:
            val[D > self.support * (1 + REL_TOL)] = 0.0
        if np.any(val < 0) or np.any(np.isnan(val)):
            raise ValueError("kernel expression produced a negative or undefined value")
        return val

    def to_dict(self):
        d = {"family": "expr", "expr": self.expr, "p": self.p}
        if self.support is not None:
            d["support"] = self.support
        return d


def family_from_dict(doc: dict) -> MollifierFamily:
    """Parse the mollifier JSON description."""
    doc = dict(doc)
    fam = doc.pop("family", None)
    p = float(doc.pop("p", 1.0))
    if p < 1:
        raise ValueError("p must be ≥ 1")
    if fam in (1, 2, 3, 4, 5):
        out = Builtin(int(fam), p)
    elif fam == "zero":
        out = ZeroFamily(p)
    elif fam == "table":
        out = RadialTable(doc.pop("base"), doc.pop("bins"), p)
    elif fam == "expr":
        out = ExprFamily(doc.pop("expr"), p, doc.pop("support", None))
    else:
        raise ValueError(f"unknown mollifier family {fam!r}")
    if doc:
        raise ValueError(f"unknown mollifier keys: {sorted(doc)}")
    return out


def family_from_json(text: str) -> MollifierFamily:
    return family_from_dict(json.loads(text))


# -- interval partitions -----------------------------------------------------

@dataclass
class IntervalPartition:
    """Sequence of distance intervals inside (0, r], plus an optional dyadic tail."""

    intervals: list
    r: float
    tail_start: float | None = None

    def materialize(self, floor: float = 0.0) -> list[Interval]:
        """Listed intervals followed by tail bins whose sup is at least ``floor``."""
        out = list(self.intervals)
        if self.tail_start is not None and floor > 0:
            t = self.tail_start
            while t >= floor * (1 - REL_TOL):
                out.append(Interval(t / 2, t))
                t /= 2
        return out

    @property
    def sup(self) -> float:
        sups = [iv.hi for iv in self.intervals]
        if self.tail_start is not None:
            sups.append(self.tail_start)
        return max(sups) if sups else 0.0


def dyadic_chain(r: float) -> IntervalPartition:
    """(r/2^{k+1}, r/2^k], k >= 0."""
    return IntervalPartition([], float(r), float(r))


def _close(a, b):
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=0.0)


def validate_partition(tau: IntervalPartition, kind: str, depth: int = 8):
    """Check P^L (kind "L") or P^U (kind "U") membership.

    Returns ``(ok, diagnostics)`` where each diagnostic names the clause and
    the interval index. The dyadic tail is valid on its own for both kinds,
    so it is checked through its first ``depth`` bins against the listed
    intervals.
    """
    if kind not in ("L", "U"):
        raise ValueError("kind is 'L' or 'U'")
    r = tau.r
    diags = []
    ivs = list(tau.intervals)
    if tau.tail_start is not None:
        t = tau.tail_start
        for _ in range(depth):
            ivs.append(Interval(t / 2, t))
            t /= 2
    for k, iv in enumerate(ivs):
        if iv.is_empty():
            diags.append(f"interval {k} {iv} is empty")
            continue
        if iv.lo < 0 or (iv.lo == 0 and iv.lo_closed) or iv.hi > r * (1 + 1e-12) or \
                (_close(iv.hi, r) and iv.hi > r and iv.hi_closed):
            diags.append(f"interval {k} {iv} is not inside (0, r]")
        if kind == "L" and 2 * iv.lo > iv.hi * (1 + 1e-12):
            diags.append(f"interval {k} {iv}: 2 inf > sup")
        if kind == "U" and iv.hi > 2 * iv.lo * (1 + 1e-12):
            diags.append(f"interval {k} {iv}: sup > 2 inf")
    if kind == "L":
        for a in range(len(ivs)):
            for b in range(a + 1, len(ivs)):
                if _overlap(ivs[a], ivs[b]):
                    diags.append(f"intervals {a} and {b} overlap")
    else:
        gap = _coverage_gap(tau)
        if gap is not None:
            diags.append(f"union does not cover (0, r]: gap near {gap:g}")
    return (not diags), diags


def _overlap(a: Interval, b: Interval) -> bool:
    lo, lo_in = (a.lo, a.lo_closed) if a.lo > b.lo else (b.lo, b.lo_closed) if b.lo > a.lo \
        else (a.lo, a.lo_closed and b.lo_closed)
    hi, hi_in = (a.hi, a.hi_closed) if a.hi < b.hi else (b.hi, b.hi_closed) if b.hi < a.hi \
        else (a.hi, a.hi_closed and b.hi_closed)
    if _close(lo, hi) or lo == hi:
        return lo_in and hi_in
    return lo < hi


def _coverage_gap(tau: IntervalPartition):
    """First uncovered point of (0, r] (None when covered)."""
    if tau.tail_start is not None:
        pos, pos_in = tau.tail_start, True
    else:
        pos, pos_in = 0.0, True  # (0, ...] needs nothing at 0 itself
    ivs = sorted(tau.intervals, key=lambda iv: (iv.lo, not iv.lo_closed))
    progress = True
    while progress:
        progress = False
        for iv in ivs:
            starts_ok = iv.lo < pos and not _close(iv.lo, pos) or \
                ((iv.lo == pos or _close(iv.lo, pos)) and (pos_in or iv.lo_closed))
            if starts_ok and (iv.hi > pos and not _close(iv.hi, pos) or
                              (_close(iv.hi, pos) and iv.hi_closed and not pos_in)):
                pos, pos_in = iv.hi, iv.hi_closed
                progress = True
    if pos > tau.r or (_close(pos, tau.r) and pos_in):
        return None
    return pos


def _van_der_corput(j: int) -> float:
    x, denom = 0.0, 1.0
    while j:
        denom *= 2
        x += (j & 1) / denom
        j >>= 1
    return x


def lower_candidates(r: float, budget: int, floor: float = 0.0) -> list[IntervalPartition]:
    """Finite P^L family searched by :func:`lower_sum_opt`.

    Dyadic chains at scales ``r 2^{-theta}`` for theta = j/2 and the
    radical-inverse offsets, ratio-4 chains at the same scales, and the
    even/odd thinned subchains of the base chain.
    """
    thetas = []
    for j in range(budget + 1):
        for th in (j / 2, _van_der_corput(j)):
            if not any(_close(th, t) or th == t for t in thetas):
                thetas.append(th)
    cands = []
    for th in thetas:
        s = r * 2.0 ** (-th)
        cands.append(dyadic_chain(s) if th else dyadic_chain(r))
        cands[-1].r = r
        cands.append(IntervalPartition(_ratio_chain(s, 4.0, floor), r))
    base = _ratio_chain(r, 2.0, floor)
    cands.append(IntervalPartition(base[0::2], r))
    cands.append(IntervalPartition(base[1::2], r))
    return cands


def _ratio_chain(s: float, ratio: float, floor: float, n_max: int = 64) -> list[Interval]:
    """(t/ratio, t] for t = s, s/ratio, ... while t >= floor (at most n_max bins)."""
    out, t = [], s
    while len(out) < n_max and t >= floor * (1 - REL_TOL):
        out.append(Interval(t / ratio, t))
        t /= ratio
    return out


def upper_candidates(r: float, budget: int) -> list[IntervalPartition]:
    """Finite P^U family searched by :func:`upper_sum_opt`: a top bin (r 2^{-theta}, r] then a dyadic chain."""
    cands = [dyadic_chain(r)]
    seen = [0.0, 1.0]
    for j in range(1, budget + 1):
        for th in (_van_der_corput(j), j / 2):
            if 0 < th < 1 and not any(_close(th, t) for t in seen):
                seen.append(th)
                s = r * 2.0 ** (-th)
                cands.append(IntervalPartition([Interval(s, r)], r, s))
    return cands


# -- pair sets shared by the sums -------------------------------------------

class PairSet:
    """All ordered pairs (x, x') with x in ``rows``, 0 < d <= r, positive weight at x'.

    Pairs are sorted by (row, distance). Distances are replaced by integer
    codes into the sorted array of distinct values, so an interval selects
    one contiguous index range per row, found with exact integer search;
    sums and minima over those ranges use ``reduceat``. Kernel values in
    both orientations are memoised per delta.
    """

    def __init__(self, space: MetricMeasureSpace, family: MollifierFamily, rows, r: float):
        self.space, self.family, self.r = space, family, float(r)
        self.rows = np.asarray(as_ids(rows), dtype=np.intp)
        blocks = list(space.pair_blocks(self.rows, r))
        cat = lambda k, dt: (np.concatenate([b[k] for b in blocks]) if blocks
                             else np.empty(0, dt))
        I, J, D = cat(0, np.intp), cat(1, np.intp), cat(2, float)
        keep = space.weights[J] > 0
        I, J, D = I[keep], J[keep], D[keep]
        self.values, code = np.unique(D, return_inverse=True)
        self.rank = np.full(space.n, -1, dtype=np.intp)
        self.rank[self.rows] = np.arange(self.rows.size)
        M = self.values.size + 1
        keys = self.rank[I].astype(np.int64) * M + code
        order = np.argsort(keys, kind="stable")
        self.I, self.J, self.D = I[order], J[order], D[order]
        self.keys, self._M = keys[order], M
        self.wJ = space.weights[self.J]
        self._wJ_pad = _pad(self.wJ)
        self._cache_f: dict = {}
        self._cache_b: dict = {}
        self._rho: dict = {}
        self._enlarged: dict = {}

    def rho(self, delta: float):
        if delta not in self._rho:
            f = self.family.kernel(self.space, delta, self.I, self.J, self.D, self._cache_f)
            b = self.family.kernel(self.space, delta, self.J, self.I, self.D, self._cache_b)
            self._rho[delta] = (f, b)
            self._rho[("pad", delta)] = (_pad(f), _pad((f + b) * self.wJ))
        return self._rho[delta]

    def padded(self, delta: float):
        """(rho forward, (rho forward + rho backward) * w) with one trailing pad slot."""
        self.rho(delta)
        return self._rho[("pad", delta)]

    def ranges(self, iv: Interval, row_ids: np.ndarray):
        """Start/end indices of the pairs of each row whose distance lies in iv."""
        a, b = iv.search_range(self.values)
        base = self.rank[row_ids].astype(np.int64) * self._M
        if np.any(base < 0):
            raise ValueError("row outside the pair set")
        return (np.searchsorted(self.keys, base + a, side="left"),
                np.searchsorted(self.keys, base + b, side="left"))

    def reduce(self, ufunc, padded: np.ndarray, starts, ends, empty: float) -> np.ndarray:
        """``ufunc`` over padded[starts[k]:ends[k]] for every k (``empty`` for empty ranges).

        ``padded`` carries one extra trailing slot so that an end index equal
        to the number of pairs is still a valid ``reduceat`` index; that slot
        only enters the discarded odd segments.
        """
        out = np.full(starts.size, empty, dtype=float)
        nonempty = ends > starts
        if not np.any(nonempty):
            return out
        s, e = starts[nonempty], ends[nonempty]
        idx = np.empty(2 * s.size, dtype=np.intp)
        idx[0::2], idx[1::2] = s, e
        out[nonempty] = ufunc.reduceat(padded, idx)[0::2]
        return out

    def enlarge(self, S_ids, radius: float) -> np.ndarray:
        key = float(radius)
        if key not in self._enlarged:
            X = self.space.enlarge(S_ids, radius).ids
            self._enlarged[key] = X[self.space.weights[X] > 0]
        return self._enlarged[key]


def _pad(values: np.ndarray) -> np.ndarray:
    return np.append(np.asarray(values, dtype=float), 0.0)


def _resolution_floor(space):
    return space.h_min * (1 - 1e-9)


def _lower_from_pairs(ps: PairSet, E_ids: np.ndarray, tau: IntervalPartition, delta) -> float:
    space = ps.space
    E_ids = E_ids[space.weights[E_ids] > 0]
    if E_ids.size == 0:
        return 0.0
    rho_f, _ = ps.padded(delta)
    terms = []
    for iv in tau.materialize(_resolution_floor(space)):
        st, en = ps.ranges(iv, E_ids)
        mass = ps.reduce(np.add, ps._wJ_pad, st, en, 0.0)
        mins = ps.reduce(np.minimum, rho_f, st, en, np.inf)
        val = np.where(mass > 0, mass * np.where(np.isinf(mins), 0.0, mins), 0.0)
        terms.append(float(val.min()))
    return math.fsum(terms)


def _upper_from_pairs(ps: PairSet, S_ids: np.ndarray, tau: IntervalPartition, delta) -> float:
    _, contrib = ps.padded(delta)
    terms = []
    for iv in tau.materialize(_resolution_floor(ps.space)):
        X = ps.enlarge(S_ids, iv.hi)
        if X.size == 0:
            continue
        st, en = ps.ranges(iv, X)
        terms.append(float(ps.reduce(np.add, contrib, st, en, 0.0).max()))
    return math.fsum(terms)


def lower_sum(space, E, family, delta, tau: IntervalPartition) -> float:
    """I^L_{E,r}[rho_delta, tau]: sum over k of min over x in E of m(A(x,tau_k)) * min rho.

    An empty annulus contributes 0 for that x (0 times +inf is 0).
    """
    ok, diags = validate_partition(tau, "L")
    if not ok:
        raise ValueError("partition is not in P^L: " + "; ".join(diags))
    E_ids = as_ids(E)
    ps = PairSet(space, family, E_ids, tau.sup)
    return _lower_from_pairs(ps, E_ids, tau, delta)


def upper_sum(space, S, family, delta, tau: IntervalPartition) -> float:
    """I^U_{S,r}[rho_delta, tau]: sum over k of the max over x in B(S, sup tau_k)
    of the two-sided kernel mass of A(x, tau_k)."""
    ok, diags = validate_partition(tau, "U")
    if not ok:
        raise ValueError("partition is not in P^U: " + "; ".join(diags))
    S_ids = as_ids(S)
    rows = space.enlarge(S_ids, tau.sup).ids
    ps = PairSet(space, family, rows[space.weights[rows] > 0], tau.sup)
    return _upper_from_pairs(ps, S_ids, tau, delta)


def lower_sum_opt(space, E, family, delta, r: float, budget: int = 4, pairs=None) -> float:
    """Largest lower sum over :func:`lower_candidates`; a lower bound for the sup over P^L."""
    E_ids = as_ids(E)
    ps = pairs if pairs is not None else PairSet(space, family, E_ids, r)
    cands = lower_candidates(r, budget, _resolution_floor(space))
    return max(_lower_from_pairs(ps, E_ids, tau, delta) for tau in cands)


def upper_sum_opt(space, S, family, delta, r: float, budget: int = 4, pairs=None) -> float:
    """Smallest upper sum over :func:`upper_candidates`; an upper bound for the inf over P^U."""
    S_ids = as_ids(S)
    if pairs is None:
        rows = space.enlarge(S_ids, r).ids
        pairs = PairSet(space, family, rows[space.weights[rows] > 0], r)
    return min(_upper_from_pairs(pairs, S_ids, tau, delta) for tau in upper_candidates(r, budget))


# -- the decay (tail) integral -------------------------------------------------

def tail_table(space: MetricMeasureSpace, Omega, radii, family: MollifierFamily, deltas,
               p: float, block: int = 128) -> np.ndarray:
    """``T[i, j]`` = max over x in Omega of sum_{x' in Omega, d > radii[j]}
    (rho(x,x') + rho(x',x)) / d^p w(x'), at ``deltas[i]``.

    Ball masses shared by the kernels are computed once per block of rows
    for all deltas.
    """
    ids = as_ids(Omega)
    rows = ids[space.weights[ids] > 0]
    radii = np.asarray(radii, dtype=float)
    deltas = list(deltas)
    best = np.zeros((len(deltas), radii.size))
    r0 = float(radii.min())
    for I, J, D in space.pair_blocks(rows, math.inf, lo=r0, block=block, cols=ids):
        if not I.size:
            continue
        wJ = space.weights[J]
        cf, cb = {}, {}
        local = np.unique(I)
        for a, delta in enumerate(deltas):
            rho = family.kernel(space, delta, I, J, D, cf) + family.kernel(space, delta, J, I, D, cb)
            c = rho / D ** p * wJ
            for b, r in enumerate(radii):
                m = D > r * (1 + REL_TOL)
                tot = np.bincount(I[m], weights=c[m], minlength=space.n)
                best[a, b] = max(best[a, b], float(tot[local].max()))
    return best


# -- limit admissibility -------------------------------------------------------

@dataclass
class AdmissibilityReport:
    """Admissibility sums on a (delta, r) grid and their windowed limits."""

    deltas: list
    radii: list
    lower: np.ndarray          # [margin, r, delta]
    upper: np.ndarray          # [r, delta]
    decay: np.ndarray          # [r, delta]
    margins: list
    window: int
    I_L: float
    I_U: float
    decay_by_r: list
    lower_floor: float
    upper_cap: float
    labels: dict = field(default_factory=lambda: {
        "I_L": "lower bound (finite partition search)",
        "I_U": "upper bound (finite partition search)"})

    @property
    def lower_admissible(self) -> bool:
        return self.I_L >= self.lower_floor and self.I_L > 0

    @property
    def upper_admissible(self) -> bool:
        return math.isfinite(self.I_U) and self.I_U <= self.upper_cap

    def rows(self):
        """(delta, r, I_L, I_U, decay) with I_L taken at the best margin."""
        out = []
        for b, r in enumerate(self.radii):
            for a, d in enumerate(self.deltas):
                out.append((d, r, float(self.lower[:, b, a].max()), float(self.upper[b, a]),
                            float(self.decay[b, a])))
        return out

    def to_dict(self) -> dict:
        return {"I_L": self.I_L, "I_U": self.I_U, "decay_by_r": self.decay_by_r,
                "window": self.window, "margins": self.margins,
                "lower_admissible": self.lower_admissible,
                "upper_admissible": self.upper_admissible,
                "labels": self.labels}


def _check_schedule(values, name, floor):
    vals = [float(v) for v in values]
    if any(b >= a for a, b in zip(vals, vals[1:])):
        raise ValueError(f"{name} schedule not decreasing")
    if vals and vals[-1] < floor:
        raise ValueError(f"{name} schedule reaches {vals[-1]:g}, below the resolution floor {floor:g}")
    return vals


def limit_admissibility(space: MetricMeasureSpace, family: MollifierFamily, V, E_margins,
                        delta_schedule, radius_schedule, budget: int = 4, window: int = 3,
                        lower_floor: float = 1e-12, upper_cap: float = 1e12,
                        decay: bool = True) -> AdmissibilityReport:
    """Windowed estimates of the lower/upper admissibility limits and the decay integral.

    ``I_L`` is the max over margins m of B(V, m), of the window max over r
    of the window min over delta of :func:`lower_sum_opt`. ``I_U`` is the
    window min over r of the window max over delta of :func:`upper_sum_opt`
    with S = V. The decay value at each r is the window max over delta of
    :func:`tail_table` on Omega = V.
    """
    floor = 4 * space.h_min
    deltas = _check_schedule(delta_schedule, "delta", floor)
    radii = _check_schedule(radius_schedule, "radius", floor)
    margins = [float(m) for m in E_margins] or [0.0]
    V_ids = as_ids(V)
    w = min(window, len(deltas), len(radii))
    Es = [space.enlarge(V_ids, m).ids if m > 0 else V_ids for m in margins]
    lower = np.zeros((len(margins), len(radii), len(deltas)))
    upper = np.zeros((len(radii), len(deltas)))
    res = _resolution_floor(space)
    for b, r in enumerate(radii):
        lcands = lower_candidates(r, budget, res)
        ucands = upper_candidates(r, budget)
        rows = space.enlarge(V_ids, r + max(margins)).ids
        ps = PairSet(space, family, rows[space.weights[rows] > 0], r)
        for a, delta in enumerate(deltas):
            for c, E in enumerate(Es):
                lower[c, b, a] = max(_lower_from_pairs(ps, E, tau, delta)
                                     for tau in lcands)
            upper[b, a] = min(_upper_from_pairs(ps, V_ids, tau, delta) for tau in ucands)
    if decay:
        dec = tail_table(space, V_ids, radii, family, deltas, family.p).T
    else:
        dec = np.zeros((len(radii), len(deltas)))
    lw = lower[:, -w:, -w:]
    I_L = float(lw.min(axis=2).max(axis=1).max())
    I_U = float(upper[-w:, -w:].max(axis=1).min())
    decay_by_r = [float(v) for v in dec[:, -w:].max(axis=1)]
    return AdmissibilityReport(deltas, radii, lower, upper, dec, margins, w, I_L, I_U,
                               decay_by_r, lower_floor, upper_cap)


# -- step envelopes ------------------------------------------------------------

def bin_index(d, base: float) -> np.ndarray:
    """k with d in (base/2^{k+1}, base/2^k], for 0 < d <= base."""
    d = np.asarray(d, dtype=float)
    k = np.floor(np.log2(base / d)).astype(int)
    # repair floating rounding at bin edges so that the right end stays closed
    hi = base / 2.0 ** k
    k = np.where(d > hi * (1 + REL_TOL), k - 1, k)
    lo = base / 2.0 ** (k + 1)
    k = np.where(d <= lo * (1 + REL_TOL), k + 1, k)
    return np.maximum(k, 0)


def above_index(d, base: float) -> np.ndarray:
    """k with d in (2^k base, 2^{k+1} base], for d > base."""
    d = np.asarray(d, dtype=float)
    k = np.floor(np.log2(d / base)).astype(int)
    lo = base * 2.0 ** k
    k = np.where(d <= lo * (1 + REL_TOL), k - 1, k)
    hi = base * 2.0 ** (k + 1)
    k = np.where(d > hi * (1 + REL_TOL), k + 1, k)
    return np.maximum(k, 0)


@dataclass
class StepEnvelope:
    """Step function on dyadic bins around a base radius.

    ``values[k]`` is the value on (base/2^{k+1}, base/2^k]; every deeper bin
    takes ``tail_value``. ``above[k]`` is the value on (2^k base, 2^{k+1} base]
    and bins past the list are 0.
    """

    base: float
    values: list
    tail_value: float = 0.0
    above: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if not self.base > 0:
            raise ValueError("envelope base must be positive")
        if any(v < 0 for v in list(self.values) + list(self.above)) or self.tail_value < 0:
            raise ValueError("envelope values must be nonnegative")

    def at(self, t: float) -> float:
        if t > self.base:
            k = int(above_index(t, self.base))
            return float(self.above[k]) if k < len(self.above) else 0.0
        k = int(bin_index(t, self.base))
        return float(self.values[k]) if k < len(self.values) else self.tail_value


def envelope_extract(space: MetricMeasureSpace, family: MollifierFamily, delta: float,
                     rbar: float, region=None):
    """Per-bin min and max of ``rho(x,x') m(B(x,d))`` over x in region.

    Bins below ``rbar`` run down to the grid resolution; above ``rbar`` the
    upper envelope records ``rho(x,x') m(B(x,4d))`` on (2^k rbar, 2^{k+1} rbar]
    for the decay condition. Empty bins hold 0 and are flagged.
    """
    ids = space.all().ids if region is None else as_ids(region)
    rows = ids[space.weights[ids] > 0]
    K = max(int(math.floor(math.log2(rbar / space.h_min) + 1e-9)) + 1, 1)
    diam = space.diameter
    Ka = int(math.ceil(math.log2(diam / rbar))) if diam > rbar else 0
    lo = np.full(K, np.inf)
    hi = np.zeros(K)
    seen = np.zeros(K, dtype=bool)
    up_above = np.zeros(Ka)
    seen_above = np.zeros(Ka, dtype=bool)
    for I, J, D in space.pair_blocks(rows, math.inf):
        keep = space.weights[J] > 0
        I, J, D = I[keep], J[keep], D[keep]
        if not I.size:
            continue
        cache = {}
        rho = family.kernel(space, delta, I, J, D, cache)
        below = _within(D, rbar)
        if np.any(below):
            prod = rho[below] * space.ball_mass(I[below], D[below])
            k = np.minimum(bin_index(D[below], rbar), K - 1)
            np.minimum.at(lo, k, prod)
            np.maximum.at(hi, k, prod)
            seen[np.unique(k)] = True
        if Ka and np.any(~below):
            prod4 = rho[~below] * space.ball_mass(I[~below], 4.0 * D[~below])
            k = np.minimum(above_index(D[~below], rbar), Ka - 1)
            np.maximum.at(up_above, k, prod4)
            seen_above[np.unique(k)] = True
    lo[~seen] = 0.0
    flags = [f"bin {k} empty" for k in np.flatnonzero(~seen)]
    flags += [f"above-bin {k} empty" for k in np.flatnonzero(~seen_above)]
    lower = StepEnvelope(rbar, lo.tolist(), 0.0, [], flags)
    upper = StepEnvelope(rbar, hi.tolist(), 0.0, up_above.tolist(), list(flags))
    return lower, upper


def _log_integral(env: StepEnvelope, r: float) -> float:
    if not 0 < r <= env.base * (1 + REL_TOL):
        raise ValueError("need 0 < r <= base")
    if env.tail_value > 0:
        return math.inf
    terms = []
    for k, v in enumerate(env.values):
        inf, sup = env.base / 2 ** (k + 1), env.base / 2 ** k
        top = min(sup, r)
        if v > 0 and top > inf:
            terms.append(v * math.log(top / inf))
    return math.fsum(terms)


def envelope_lower_integral(env: StepEnvelope, r: float) -> float:
    """Exact int_(0,r] env(t)/t dt (+inf when the tail value is positive)."""
    return _log_integral(env, r)


def envelope_upper_integral(env: StepEnvelope, r: float) -> float:
    """Exact int_(0,r] env(t)/t dt for an upper envelope."""
    return _log_integral(env, r)


def envelope_decay_integral(env: StepEnvelope, r: float, p: float) -> float:
    """Exact int_(r,inf) env(t)/t^{p+1} dt, bin by bin: value (inf^{-p} - sup^{-p}) / p."""
    if not r > 0 or p < 1:
        raise ValueError("need r > 0 and p >= 1")
    terms = []

    def piece(v, a, b):
        a = max(a, r)
        if v > 0 and b > a:
            terms.append(v * (a ** -p - b ** -p) / p)

    n_below = len(env.values)
    for k, v in enumerate(env.values):
        piece(v, env.base / 2 ** (k + 1), env.base / 2 ** k)
    if env.tail_value > 0:
        # bins k >= n_below form (0, base/2^{n_below}]
        piece(env.tail_value, 0.0, env.base / 2 ** n_below)
    for k, v in enumerate(env.above):
        piece(v, env.base * 2 ** k, env.base * 2 ** (k + 1))
    return math.fsum(terms)


def admissibility_constants(C_minus: float, C_plus: float, C_SD: float, C_D: float) -> dict:
    """C_M^L = C^- / (ln 2 C_SD) and C_M^U = 2 C_D C^+ / ln 2 from the envelope bounds."""
    return {"C_M_L": C_minus / (math.log(2) * C_SD), "C_M_U": 2 * C_D * C_plus / math.log(2)}
