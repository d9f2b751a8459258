"""Strict JSON experiment configuration.

A configuration names a space, a pipeline and whatever that pipeline
needs. Unknown keys are errors, and every violation found is reported at
once. Schedules have no defaults; only tolerances, the limit window and
the energy estimator settings do.

Pipelines
---------
``run``    the sandwich report (needs map, mollifier, schedules);
``audit``  the admissibility audit of a mollifier (needs mollifier, schedules);
``suite``  one of the named library suites in :mod:`bbmlab.experiments`;
``space``  no pipeline: the config only describes a space (for ``space`` and ``check``).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bbmlab.energy import MetricMap
from bbmlab.expr import SafeExpression
from bbmlab.mm_space import MetricError, MetricMeasureSpace, SpaceGenerator, SubsetRef, build_space
from bbmlab.mollifiers import MollifierFamily, family_from_dict

PIPELINES = ("run", "audit", "suite", "space")
TOP_KEYS = {"space", "pipeline", "domain", "map", "mollifier", "p", "schedules", "energy",
            "audit", "suite", "tolerances", "output"}
SCHEDULE_KEYS = {"delta", "radius", "window"}
ENERGY_KEYS = {"h", "dictionary", "cap", "regions", "tol"}
AUDIT_KEYS = {"margins", "budget", "decay"}
OUTPUT_KEYS = {"csv", "json", "golden"}
MAP_KINDS = ("scalar_expr", "identity_circle", "table")
DEFAULT_WINDOW = 3
DEFAULT_TOLERANCE = 1e-12


class ConfigError(ValueError):
    """Validation failure; ``errors`` lists every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    space: dict
    pipeline: str = "run"
    domain: list | None = None
    map: dict | None = None
    mollifier: dict | None = None
    p: float = 1.0
    schedules: dict | None = None
    energy: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    suite: dict | None = None
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: str = field(default=".", compare=False)

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        out = {"space": self.space, "pipeline": self.pipeline, "p": self.p}
        for key in ("domain", "map", "mollifier", "schedules", "suite"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        for key in ("energy", "audit", "tolerances", "output"):
            val = getattr(self, key)
            if val:
                out[key] = val
        return copy.deepcopy(out)

    def hash(self) -> str:
        """sha256 of the canonical JSON of everything except output paths."""
        doc = self.to_dict()
        doc.pop("output", None)
        return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()

    # -- materialisation ---------------------------------------------------

    def build_space(self) -> MetricMeasureSpace:
        return build_space(self.space)

    def domain_ids(self, space: MetricMeasureSpace) -> SubsetRef:
        """Atoms whose coordinate lies in the closed range ``domain`` (all atoms if unset)."""
        if self.domain is None:
            return space.all()
        lo, hi = self.domain
        return space.where(lambda c: (c >= lo) & (c <= hi))

    def family(self) -> MollifierFamily:
        return family_from_dict(self.mollifier)

    def build_map(self, space: MetricMeasureSpace) -> MetricMap:
        return map_from_dict(self.map, space, self.base_dir)

    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, self.tolerances.get("default", DEFAULT_TOLERANCE)))

    def path(self, key: str) -> Path | None:
        val = self.output.get(key)
        if val is None:
            return None
        return (Path(self.base_dir) / val).resolve()


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def serialize(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def map_from_dict(doc: dict, space: MetricMeasureSpace, base_dir: str = ".") -> MetricMap:
    kind = doc["kind"]
    if kind == "identity_circle":
        return MetricMap.identity_circle(space)
    if kind == "scalar_expr":
        expr = SafeExpression(doc["expr"], ("x", "y", "i", "n"))
        env = {"i": np.arange(space.n, dtype=float), "n": float(space.n)}
        if space.coords is not None:
            c = np.asarray(space.coords, dtype=float)
            if c.ndim == 1:
                env["x"] = c
            else:
                env["x"], env["y"] = c[:, 0], c[:, 1]
        missing = expr.names & {"x", "y"} - set(env)
        if missing:
            raise ValueError(f"space has no coordinate {sorted(missing)}")
        vals = np.broadcast_to(expr(**env), (space.n,)).copy()
        return MetricMap.scalar(vals)
    if kind == "table":
        src = doc
        if "file" in doc:
            src = json.loads((Path(base_dir) / doc["file"]).read_text(encoding="utf-8"))
        assignment = np.asarray(src["assignment"], dtype=np.intp)
        if assignment.shape != (space.n,):
            raise ValueError("table map needs one target point per atom")
        return MetricMap.table(assignment, src["matrix"])
    raise ValueError(f"unknown map kind {kind!r}")


# -- validation ----------------------------------------------------------------

def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_keys(doc, allowed, where, errors) -> bool:
    if not isinstance(doc, dict):
        errors.append(f"{where} must be an object")
        return False
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        errors.append(f"unknown {where} keys: {unknown}")
    return True


def _check_decreasing(vals, name, errors, upper=None) -> None:
    if not isinstance(vals, list) or not vals or not all(_is_number(v) for v in vals):
        errors.append(f"{name} schedule must be a nonempty list of numbers")
        return
    if any(b >= a for a, b in zip(vals, vals[1:])):
        errors.append(f"{name} schedule not decreasing")
    if any(v <= 0 for v in vals) or (upper is not None and any(v >= upper for v in vals)):
        errors.append(f"{name} schedule values must lie in (0, {upper if upper else 'inf'})")


def _validate(doc: dict, base_dir: str) -> tuple[dict, list]:
    errors: list[str] = []
    if not _check_keys(doc, TOP_KEYS, "config", errors):
        return {}, errors
    out = {}
    pipeline = doc.get("pipeline", "run")
    if pipeline not in PIPELINES:
        errors.append(f"pipeline must be one of {list(PIPELINES)}")
    out["pipeline"] = pipeline

    if "space" not in doc:
        errors.append("missing space")
    else:
        try:
            out["space"] = SpaceGenerator.from_dict(doc["space"]).to_dict()
        except (MetricError, TypeError) as exc:
            errors.append(f"space: {exc}")

    p = doc.get("p", 1.0)
    if not _is_number(p):
        errors.append("p must be a number")
    elif p < 1:
        errors.append("p must be ≥ 1")
    out["p"] = float(p) if _is_number(p) else p

    if "domain" in doc:
        dom = doc["domain"]
        if (not isinstance(dom, list) or len(dom) != 2 or not all(_is_number(v) for v in dom)
                or dom[0] > dom[1]):
            errors.append("domain must be [lo, hi] with lo <= hi")
        out["domain"] = dom

    needs_mollifier = pipeline in ("run", "audit")
    if "mollifier" in doc:
        moll = dict(doc["mollifier"]) if isinstance(doc["mollifier"], dict) else doc["mollifier"]
        if isinstance(moll, dict):
            moll.setdefault("p", out["p"])
        try:
            family_from_dict(moll)
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(f"mollifier: {exc}")
        out["mollifier"] = moll
    elif needs_mollifier:
        errors.append(f"pipeline {pipeline!r} needs a mollifier")

    if "map" in doc:
        m = doc["map"]
        if _check_keys(m, {"kind", "expr", "assignment", "matrix", "file"}, "map", errors):
            kind = m.get("kind")
            if kind not in MAP_KINDS:
                errors.append(f"map kind must be one of {list(MAP_KINDS)}")
            elif kind == "scalar_expr":
                try:
                    SafeExpression(m.get("expr", ""), ("x", "y", "i", "n"))
                except (ValueError, SyntaxError) as exc:
                    errors.append(f"map expression: {exc}")
            elif kind == "table" and "file" in m:
                if not (Path(base_dir) / m["file"]).is_file():
                    errors.append(f"map file not found: {m['file']}")
            elif kind == "table" and not {"assignment", "matrix"} <= set(m):
                errors.append("table map needs assignment and matrix (or file)")
        out["map"] = m
    elif pipeline == "run":
        errors.append("pipeline 'run' needs a map")

    if "schedules" in doc:
        sch = doc["schedules"]
        if _check_keys(sch, SCHEDULE_KEYS, "schedules", errors):
            if "delta" not in sch or "radius" not in sch:
                errors.append("schedules need both delta and radius lists")
            else:
                _check_decreasing(sch["delta"], "delta", errors, upper=1.0)
                _check_decreasing(sch["radius"], "radius", errors)
            win = sch.get("window", DEFAULT_WINDOW)
            if not isinstance(win, int) or isinstance(win, bool) or win < 1:
                errors.append("window must be a positive integer")
            out["schedules"] = {**sch, "window": win}
    elif needs_mollifier:
        errors.append(f"pipeline {pipeline!r} needs schedules")

    if "energy" in doc and _check_keys(doc["energy"], ENERGY_KEYS, "energy", errors):
        out["energy"] = doc["energy"]
    if "audit" in doc and _check_keys(doc["audit"], AUDIT_KEYS, "audit", errors):
        out["audit"] = doc["audit"]
    if "output" in doc and _check_keys(doc["output"], OUTPUT_KEYS, "output", errors):
        out["output"] = doc["output"]
    if "tolerances" in doc:
        tol = doc["tolerances"]
        if not isinstance(tol, dict) or not all(_is_number(v) and v >= 0 for v in tol.values()):
            errors.append("tolerances must map names to nonnegative numbers")
        out["tolerances"] = tol

    if pipeline == "suite":
        s = doc.get("suite")
        if not isinstance(s, dict) or "name" not in s:
            errors.append("pipeline 'suite' needs suite.name")
        else:
            from bbmlab.experiments import SUITES
            if s["name"] not in SUITES:
                errors.append(f"unknown suite {s['name']!r}; known: {sorted(SUITES)}")
        out["suite"] = s
    elif "suite" in doc:
        errors.append("suite is only valid with pipeline 'suite'")
    return out, errors


def parse_config(text: str, base_dir: str | Path = ".") -> ExperimentConfig:
    """Parse and validate a JSON configuration; raises :class:`ConfigError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from None
    fields, errors = _validate(doc, str(base_dir))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(**fields, base_dir=str(base_dir))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent)
