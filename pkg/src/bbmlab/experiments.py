"""Configuration-driven pipelines and the named library suites.

Every pipeline returns a :class:`PipelineResult`: named scalars (recorded
in golden files), a CSV table whose bytes are hashed for determinism
checks, and a JSON-ready report.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from bbmlab.approximation import approx_error_report, discrete_convolution, partition_of_unity
from bbmlab.bbm import (DeltaSchedule, functional, functional_naive, localized_functional,
                        sandwich_report, tail_supremum)
from bbmlab.config import ExperimentConfig
from bbmlab.energy import EnergyDensity, riesz_many
from bbmlab.mm_space import build_space
from bbmlab.mollifiers import Builtin, dyadic_chain, limit_admissibility, lower_sum, upper_sum
from bbmlab.regularity import doubling_constant, strong_doubling_constant


@dataclass
class PipelineResult:
    scalars: dict
    csv: str
    report: dict = field(default_factory=dict)


def table_csv(header, rows) -> str:
    """CSV with floats in shortest round-trip form."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    return buf.getvalue()


def _scalar_csv(scalars: dict) -> str:
    return table_csv(("name", "value"), sorted(scalars.items()))


# -- pipelines -------------------------------------------------------------------

def run_sandwich(cfg: ExperimentConfig) -> PipelineResult:
    space = cfg.build_space()
    sch = cfg.schedules
    schedule = DeltaSchedule(sch["delta"], sch["window"], sch["radius"])
    rep = sandwich_report(space, cfg.domain_ids(space), cfg.build_map(space), cfg.family(),
                          cfg.p, schedule, cfg.energy)
    scalars = {k: float(v) for k, v in rep.summary().items()
               if isinstance(v, (int, float)) and not isinstance(v, bool) and k != "window"}
    for row in rep.rows:
        scalars[f"F[{row['delta']!r}]"] = row["functional"]
        scalars[f"tail[{row['delta']!r}]"] = row["tail"]
    return PipelineResult(scalars, rep.to_csv(), rep.summary())


def run_audit(cfg: ExperimentConfig) -> PipelineResult:
    space = cfg.build_space()
    sch, aud = cfg.schedules, cfg.audit
    rep = limit_admissibility(space, cfg.family(), cfg.domain_ids(space),
                              aud.get("margins", [0.0]), sch["delta"], sch["radius"],
                              budget=int(aud.get("budget", 4)), window=sch["window"],
                              decay=bool(aud.get("decay", True)))
    scalars = {"I_L": rep.I_L, "I_U": rep.I_U}
    for r, v in zip(rep.radii[-rep.window:], rep.decay_by_r):
        scalars[f"decay[{r!r}]"] = v
    text = table_csv(("delta", "r", "lower", "upper", "decay"), rep.rows())
    return PipelineResult(scalars, text, rep.to_dict())


def run_suite(cfg: ExperimentConfig) -> PipelineResult:
    params = dict(cfg.suite)
    name = params.pop("name")
    scalars = SUITES[name](cfg, **params)
    return PipelineResult(scalars, _scalar_csv(scalars), {"suite": name, **scalars})


def run_pipeline(cfg: ExperimentConfig) -> PipelineResult:
    if cfg.pipeline == "space":
        raise ValueError("config describes a space only and has no pipeline to run")
    return {"run": run_sandwich, "audit": run_audit, "suite": run_suite}[cfg.pipeline](cfg)


# -- suites ----------------------------------------------------------------------

def line5_oracle(cfg: ExperimentConfig) -> dict:
    """The small-space values: functional, dyadic sums, doubling constants, tails."""
    s = cfg.build_space()
    u = s.coords
    r3, r5 = Builtin(3, cfg.p), Builtin(5, cfg.p)
    chain = dyadic_chain(0.2)
    return {
        "functional_rho3": functional(s, s.all(), u, r3, 0.2, cfg.p),
        "functional_rho3_naive": functional_naive(s, s.all(), u, r3, 0.2, cfg.p),
        "functional_rho5": functional(s, s.all(), u, r5, 0.1, cfg.p),
        "functional_rho5_naive": functional_naive(s, s.all(), u, r5, 0.1, cfg.p),
        "localized_center": localized_functional(s, [2], 0.2, u, r3, 0.2, cfg.p),
        "tail_rho5": tail_supremum(s, s.all(), 0.5, r5, 0.1, cfg.p),
        "lower_sum": lower_sum(s, s.all(), r3, 0.2, chain),
        "upper_sum": upper_sum(s, s.all(), r3, 0.2, chain),
        "doubling": doubling_constant(s, R=0.2).constant,
        "strong_doubling": strong_doubling_constant(s, R=0.2, radii=[0.2]).constant,
    }


def partition_suite(cfg: ExperimentConfig, r: float = 0.1) -> dict:
    """Exactness, overlap and Lipschitz bounds of the scale-r partition of unity."""
    s = cfg.build_space()
    S = cfg.domain_ids(s)
    pou = partition_of_unity(s, S, r)
    total = pou.sum_phi()
    exact = pou.exact_region().ids
    C_SD = strong_doubling_constant(s, S, R=2 * r).constant
    lip = pou.lip_phi()
    qbound = pou.quotient_rule_bounds()
    phis = np.concatenate(pou.phi)
    return {
        "centers": float(len(pou.centers)),
        "sum_error_exact_region": float(np.max(np.abs(total[exact] - 1.0))),
        "sum_max": float(total.max()),
        "overlap": float(pou.overlap()),
        "C_SD": C_SD,
        "max_lip_times_r": float(lip.max() * r),
        "quotient_rule_slack": float(np.min(qbound - lip)),
        "phi_min": float(phis.min()),
        "phi_max": float(phis.max()),
    }


def convolution_suite(cfg: ExperimentConfig, r: float = 0.32, sizes=(101, 201, 401),
                      fields: int = 100, seed: int = 0) -> dict:
    """u^r at the centre and the end point, linearity/range on random fields, C0 and C1."""
    base = cfg.build_space()
    out = {}
    for n in sizes:
        s = build_space({**cfg.space, "n": int(n)})
        u = np.asarray(s.coords, dtype=float)
        conv = discrete_convolution(s, s.all(), r, u)
        half = int(np.argmin(np.abs(u - 0.5)))
        zero = int(np.argmin(np.abs(u - 0.0)))
        rep = approx_error_report(s, s.all(), r, u, cfg.p, conv)
        out[f"u_r_half[{n}]"] = float(conv.values[half])
        out[f"u_r_zero[{n}]"] = float(conv.values[zero])
        out[f"C0[{n}]"] = rep.C0
        out[f"C1[{n}]"] = rep.C1
    rng = np.random.default_rng(seed)
    lin_err, range_excess = 0.0, -math.inf
    for _ in range(fields):
        a, b = rng.normal(size=2)
        u, v = rng.normal(size=(2, base.n))
        cu = discrete_convolution(base, base.all(), r, u)
        cv = discrete_convolution(base, base.all(), r, v).values
        cw = discrete_convolution(base, base.all(), r, a * u + b * v).values
        lin_err = max(lin_err, float(np.max(np.abs(cw - (a * cu.values + b * cv)))))
        ok = ~cu.flagged
        if np.any(ok):
            excess = max(float(np.max(cu.values[ok] - u.max())), float(np.max(u.min() - cu.values[ok])))
            range_excess = max(range_excess, excess)
    out["linearity_error"] = lin_err
    out["range_excess"] = range_excess
    return out


def riesz_suite(cfg: ExperimentConfig, densities: int = 20, points: int = 50, R: float = 0.2,
                seed: int = 0) -> dict:
    """Constant-density reproduction and the two doubling-type inequalities for R_p."""
    s = cfg.build_space()
    rng = np.random.default_rng(seed)
    lo = 4 * s.h_min
    xs = rng.integers(0, s.n, size=points)
    rs = rng.uniform(lo, R, size=points)
    c = float(rng.uniform(0.5, 2.0))
    const = riesz_many(s, EnergyDensity.constant(s, c), xs, rs)
    C_D = doubling_constant(s, R=R).constant
    ratio1 = ratio2 = 0.0
    for _ in range(densities):
        e = EnergyDensity(rng.exponential(size=s.n) * s.weights)
        x = rng.integers(0, s.n, size=points)
        r = rng.uniform(lo, R, size=points)
        rp = r * rng.uniform(0.5, 1.0, size=points)
        big = riesz_many(s, e, x, r)
        small = riesz_many(s, e, x, rp)
        ratio1 = max(ratio1, float(np.max(small / big)))
        for _ in range(3):
            E = np.unique(rng.integers(0, s.n, size=int(rng.integers(1, 40))))
            r0 = float(rng.uniform(lo, R))
            lhs = math.fsum(riesz_many(s, e, E, np.full(E.size, r0)) * s.weights[E])
            rhs = e.of(s.enlarge(E, r0))
            ratio2 = max(ratio2, lhs / rhs)
    return {"density": c, "constant_error": float(np.max(np.abs(const - c))),
            "C_D": C_D, "max_ratio_scale": ratio1, "max_ratio_sum": ratio2}


SUITES = {
    "line5_oracle": line5_oracle,
    "partition": partition_suite,
    "convolution": convolution_suite,
    "riesz": riesz_suite,
}
