"""Command line interface.

Exit codes: 0 on success, 1 on validation errors, 2 on golden mismatches.
Diagnostics go to standard error as one JSON object.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from bbmlab import __version__
from bbmlab.config import ConfigError, ExperimentConfig, parse_config, serialize
from bbmlab.mm_space import MetricError

__all__ = ["main", "parse_config", "serialize"]

EXIT_OK, EXIT_INVALID, EXIT_GOLDEN = 0, 1, 2
GOLDEN_DIR = Path(__file__).parent / "golden"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default, allow_nan=True)


def _fail(code: int, kind: str, messages, **extra):
    click.echo(json.dumps({"error": kind, "messages": list(messages), **extra},
                          default=_json_default), err=True)
    sys.exit(code)


def _load(path: str) -> ExperimentConfig:
    """A full experiment config, or a bare space description wrapped into one."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        _fail(EXIT_INVALID, "validation", [f"cannot read config: {exc}"])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        _fail(EXIT_INVALID, "validation", [f"invalid JSON: {exc}"])
    if isinstance(doc, dict) and "space" not in doc and "kind" in doc:
        text = json.dumps({"space": doc, "pipeline": "space"})
    try:
        return parse_config(text, p.parent)
    except ConfigError as exc:
        _fail(EXIT_INVALID, "validation", exc.errors)


def _write(path: Path | None, text: str) -> None:
    if path is None:
        click.echo(text, nl=False)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


class _Group(click.Group):
    """Turns library validation errors raised inside commands into exit code 1."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (ValueError, MetricError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                _fail(EXIT_INVALID, "validation", exc.errors)
            _fail(EXIT_INVALID, "validation", [str(exc)])


@click.group(cls=_Group)
@click.version_option(version=__version__, prog_name="bbmlab")
def main():
    """Nonlocal functionals, energies and regularity checks on finite metric measure spaces."""


# -- space -------------------------------------------------------------------------

@main.group(cls=_Group)
def space():
    """Build and describe test spaces."""


@space.command("build")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--atoms", type=click.Path(dir_okay=False), help="Write coordinates and weights as JSON.")
def space_build(config_path, atoms):
    """Build the space of a config and print its summary."""
    cfg = _load(config_path)
    s = cfg.build_space()
    summary = {"name": s.name, "n": s.n, "metric": s.metric, "h_min": s.h_min,
               "diameter": s.diameter, "total_mass": s.total_mass,
               "positive_atoms": int(s.positive.size)}
    click.echo(_dumps(summary))
    if atoms:
        doc = {"weights": s.weights, "coords": s.coords}
        _write(Path(atoms), _dumps(doc) + "\n")


# -- check -------------------------------------------------------------------------

@main.group(cls=_Group)
def check():
    """Empirical doubling, strong-doubling and Poincaré constants."""


def _region(cfg, s):
    return cfg.domain_ids(s)


@check.command("doubling")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--R", "R", required=True, type=float)
@click.option("--r-min", type=float, default=0.0, show_default=True)
def check_doubling(config_path, R, r_min):
    """Largest m(B(x,2r))/m(B(x,r)) over the config's domain."""
    from bbmlab.regularity import doubling_constant

    cfg = _load(config_path)
    s = cfg.build_space()
    click.echo(_dumps(doubling_constant(s, _region(cfg, s), R, r_min=r_min).to_dict(s)))


@check.command("strong-doubling")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--R", "R", required=True, type=float)
@click.option("--r-min", type=float, default=0.0, show_default=True)
def check_strong_doubling(config_path, R, r_min):
    """Largest m(B(x,2r))/m(A(x,(3r/4,r])) over the config's domain."""
    from bbmlab.regularity import strong_doubling_constant

    cfg = _load(config_path)
    s = cfg.build_space()
    click.echo(_dumps(strong_doubling_constant(s, _region(cfg, s), R, r_min=r_min).to_dict(s)))


@check.command("poincare")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--R", "R", required=True, type=float)
@click.option("--lam", type=float, default=1.0, show_default=True)
@click.option("--r-min", type=float, default=0.0, show_default=True)
def check_poincare(config_path, R, lam, r_min):
    """Lower bound on the Poincaré constant from coordinate and distance test fields."""
    from bbmlab.regularity import poincare_constant

    cfg = _load(config_path)
    s = cfg.build_space()
    tests = [s.dist_row(0), s.dist_row(s.n // 2)]
    if cfg.map is not None and cfg.map.get("kind") == "scalar_expr":
        tests.insert(0, cfg.build_map(s).labels)
    rep = poincare_constant(s, _region(cfg, s), R, lam, cfg.p, tests, r_min=r_min)
    click.echo(_dumps(rep.to_dict(s)))


# -- mollifier / energy --------------------------------------------------------------

@main.group(cls=_Group)
def mollifier():
    """Admissibility audits of mollifier families."""


@mollifier.command("audit")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
def mollifier_audit(config_path):
    """Windowed admissibility sums and decay values; CSV to output.csv when set."""
    from bbmlab.experiments import run_audit

    cfg = _load(config_path)
    if cfg.mollifier is None or cfg.schedules is None:
        _fail(EXIT_INVALID, "validation", ["audit needs mollifier and schedules"])
    res = run_audit(cfg)
    if cfg.path("csv"):
        _write(cfg.path("csv"), res.csv)
    click.echo(_dumps(res.report))


@main.group(cls=_Group)
def energy():
    """Energy estimates."""


@energy.command("estimate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
def energy_estimate(config_path):
    """Lower/upper p-energy of the config's map on its domain."""
    from bbmlab.bbm import energy_bracket

    cfg = _load(config_path)
    if cfg.map is None:
        _fail(EXIT_INVALID, "validation", ["energy estimate needs a map"])
    s = cfg.build_space()
    radii = (cfg.schedules or {}).get("radius", [])
    est = energy_bracket(s, cfg.domain_ids(s), cfg.build_map(s), cfg.p, cfg.energy, radii)
    click.echo(_dumps(est.to_dict()))


# -- run / golden ----------------------------------------------------------------------

@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="CSV path (overrides output.csv).")
def run(config_path, out):
    """Run the config's pipeline; CSV to --out, output.csv or standard output."""
    from bbmlab.experiments import run_pipeline

    cfg = _load(config_path)
    res = run_pipeline(cfg)
    _write(Path(out) if out else cfg.path("csv"), res.csv)
    if cfg.path("json"):
        _write(cfg.path("json"), _dumps(res.report) + "\n")


def golden_path(cfg: ExperimentConfig, config_path: str, override: str | None) -> Path:
    if override:
        return Path(override)
    if cfg.path("golden"):
        return cfg.path("golden")
    return GOLDEN_DIR / f"{Path(config_path).stem}.json"


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def golden_record_doc(cfg: ExperimentConfig, res) -> dict:
    return {"config_hash": cfg.hash(),
            "scalars": {k: float(v) for k, v in res.scalars.items()},
            "tolerances": {k: cfg.tolerance(k) for k in res.scalars},
            "csv_sha256": _sha(res.csv)}


def golden_diff(old: dict, new: dict) -> list[str]:
    """Mismatches between a stored golden record and a fresh one."""
    out = []
    if old.get("config_hash") != new["config_hash"]:
        out.append("config hash differs")
    for k, v_old in old.get("scalars", {}).items():
        if k not in new["scalars"]:
            out.append(f"{k}: missing")
            continue
        v_new = new["scalars"][k]
        tol = float(old.get("tolerances", {}).get(k, 0.0))
        same = (v_old == v_new) or (math.isfinite(v_old) and math.isfinite(v_new)
                                    and abs(v_new - v_old) <= tol)
        if not same:
            out.append(f"{k}: {v_old!r} -> {v_new!r} (tol {tol:g})")
    extra = sorted(set(new["scalars"]) - set(old.get("scalars", {})))
    if extra:
        out.append(f"new scalars not in golden file: {extra}")
    if old.get("csv_sha256") != new["csv_sha256"]:
        out.append("CSV bytes differ")
    return out


@main.group(cls=_Group)
def golden():
    """Record and compare golden results."""


@golden.command("record")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--golden", "golden_file", type=click.Path(dir_okay=False))
def golden_record(config_path, golden_file):
    """Run the pipeline and store scalars, tolerances and the CSV hash."""
    from bbmlab.experiments import run_pipeline

    cfg = _load(config_path)
    res = run_pipeline(cfg)
    path = golden_path(cfg, config_path, golden_file)
    _write(path, _dumps(golden_record_doc(cfg, res)) + "\n")
    click.echo(_dumps({"recorded": str(path), "scalars": len(res.scalars)}))


@golden.command("compare")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--golden", "golden_file", type=click.Path(dir_okay=False))
def golden_compare(config_path, golden_file):
    """Rerun the pipeline and compare with the stored record (exit 2 on mismatch)."""
    from bbmlab.experiments import run_pipeline

    cfg = _load(config_path)
    path = golden_path(cfg, config_path, golden_file)
    if not path.is_file():
        _fail(EXIT_INVALID, "validation", [f"no golden file at {path}"])
    old = json.loads(path.read_text(encoding="utf-8"))
    new = golden_record_doc(cfg, run_pipeline(cfg))
    diffs = golden_diff(old, new)
    if diffs:
        _fail(EXIT_GOLDEN, "golden mismatch", diffs, golden=str(path))
    click.echo(_dumps({"golden": str(path), "status": "match", "scalars": len(new["scalars"])}))


if __name__ == "__main__":
    main()
