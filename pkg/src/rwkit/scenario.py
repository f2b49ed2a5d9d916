"""Scenario configs, the end-to-end pipeline and report files.

A scenario is one JSON document (schema in ``data/scenario.schema.json``).
Loading validates it, reads the market curve and expands the sparse targets
onto every grid date, so a :class:`ScenarioSpec` is ready to run.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import re
from dataclasses import dataclass, field, replace
from importlib import metadata, resources
from pathlib import Path

import jsonschema
import numpy as np

from . import svg
from .cirpp import CirParams, NovikovReport, hazard_from_spread, novikov_check, spread_from_hazard
from .estimator import RealWorldCalibrator
from .exceptions import (
    GridMismatch,
    NonPositiveSpread,
    ParseError,
    RwkitError,
    StageError,
    ValidationError,
)
from .market_curve import BP, MarketCurve, ingest_spread_curve
from .mc_engine import PathGrid, summarize
from .measure_change import StepAlpha, TargetSet

DEFAULT_MATURITIES = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0)
SPREAD_UNITS = ("bp-spread", "bp")
SE_MULTIPLE = 3.0
TRACKING_COLUMNS = ["t_years", "target_bp", "mean_bp", "se_bp", "q10_bp", "q90_bp"]


def _schema() -> dict:
    text = resources.files("rwkit").joinpath("data/scenario.schema.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class TargetPoint:
    date: float
    value: float
    unit: str

    @property
    def is_spread(self) -> bool:
        return self.unit in SPREAD_UNITS


@dataclass(frozen=True)
class ScenarioSpec:
    model: CirParams
    curve_file: Path
    scenario_kind: str
    target_maturity: float
    targets: tuple
    target_fill: str
    seed: int
    grid_step: float = 1.0 / 52.0
    horizon: float = 1.0
    n_paths: int = 20000
    report_maturities: tuple = DEFAULT_MATURITIES
    snapshot_dates: tuple = ()
    output_dir: Path = Path("out")
    strict_domain: bool = False
    name: str = "scenario"
    as_of_date: str | None = None
    config_sha256: str = ""
    # derived at load time
    curve: MarketCurve | None = field(default=None, repr=False, compare=False)
    hazard_values: tuple = ()
    expanded: TargetSet | None = field(default=None, repr=False, compare=False)

    @property
    def grid(self) -> PathGrid:
        return PathGrid.covering(self.horizon, self.grid_step)


def translate_relative_forecast(index_path, issuer_anchor):
    """Apply an index's relative moves to an issuer spread.

    ``index_path`` is a list of ``(date, spread_bp)`` whose first entry is the
    current level. Returns ``(date, round(anchor * index_i / index_0))`` for the
    remaining entries, rounding half away from zero.
    """
    path = [(float(d), float(v)) for d, v in index_path]
    if len(path) < 2:
        raise ValueError("index path needs a current level and at least one forecast")
    if issuer_anchor <= 0 or any(v <= 0 for _, v in path):
        raise NonPositiveSpread("index levels and issuer anchor must be > 0")
    base = path[0][1]
    return [(d, float(math.floor(issuer_anchor * v / base + 0.5))) for d, v in path[1:]]


def _spread_bp_at(curve: MarketCurve, tenor: float) -> float:
    lam = curve.cumulative_hazard(tenor)
    return float(spread_from_hazard(lam, curve.recovery_delta, 0.0, tenor)) / BP


def _to_hazard(values, spread_unit: bool, tenor: float, delta: float) -> np.ndarray:
    values = np.asarray(values, float)
    if spread_unit:
        return np.atleast_1d(hazard_from_spread(values * BP, delta, 0.0, tenor))
    return values


def expand_targets(targets, fill: str, grid: PathGrid, curve: MarketCurve,
                   target_maturity: float) -> TargetSet:
    """Spread the configured targets over every grid date in ``(0, t_last]``.

    ``hold-previous`` gives each date the value of the first target at or after
    it, so a forecast is in force from the step after the previous one.
    ``linear-ramp`` interpolates linearly from the market value at ``t = 0``
    through the configured points, in the targets' own unit.
    """
    dates = np.array([p.date for p in targets])
    values = np.array([p.value for p in targets])
    spread_unit = targets[0].is_spread
    order = np.argsort(dates, kind="stable")
    dates, values = dates[order], values[order]
    times = grid.times
    fill_dates = times[(times > grid.start + 1e-12) & (times <= dates[-1] + 1e-9)]
    if fill == "hold-previous":
        pick = np.searchsorted(dates, fill_dates - 1e-9, side="left")
        filled = values[pick]
    elif fill == "linear-ramp":
        if spread_unit:
            anchor = _spread_bp_at(curve, target_maturity)
        else:
            anchor = float(curve.cumulative_hazard(target_maturity))
        filled = np.interp(fill_dates, np.concatenate([[grid.start], dates]),
                           np.concatenate([[anchor], values]))
    else:
        raise ValueError(f"unknown target_fill {fill!r}")
    delta = curve.recovery_delta
    hazards = _to_hazard(filled, spread_unit, target_maturity, delta)
    return TargetSet(target_maturity, fill_dates, hazards, filled if spread_unit else None)


def _schema_error(err: jsonschema.ValidationError) -> ValidationError:
    path = ".".join(str(p) for p in err.absolute_path)
    field_name = path or None
    if err.validator == "required":
        m = re.match(r"'([^']+)' is a required property", err.message)
        if m:
            field_name = f"{path}.{m.group(1)}" if path else m.group(1)
    elif err.validator == "oneOf" and not path:
        field_name = "targets"
    elif err.validator == "additionalProperties" and not path:
        m = re.search(r"\('([^']+)'", err.message)
        field_name = m.group(1) if m else None
    return ValidationError(f"{field_name or 'config'}: {err.message}", field=field_name)


def _fail(field_name, message):
    raise ValidationError(f"{field_name}: {message}", field=field_name)


def parse_scenario(doc: dict, base_dir: Path = Path("."), config_sha256: str = "") -> ScenarioSpec:
    """Validate an already decoded config document."""
    validator = jsonschema.Draft202012Validator(_schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is not None:
        raise _schema_error(err)

    m = doc["model"]
    try:
        model = CirParams(m["kappa"], m["theta"], m["sigma"], m["y0"], m.get("recovery_delta", 0.4))
    except ValueError as exc:
        raise ValidationError(f"model: {exc}", field="model") from None

    curve_path = Path(doc["curve_file"])
    if not curve_path.is_absolute():
        curve_path = (base_dir / curve_path).resolve()
    if not curve_path.is_file():
        _fail("curve_file", f"no such file {curve_path}")
    curve = ingest_spread_curve(curve_path, model.recovery_delta, doc.get("as_of_date"))

    grid_step = float(doc.get("grid_step", 1.0 / 52.0))
    horizon = float(doc.get("horizon", 1.0))
    try:
        grid = PathGrid.covering(horizon, grid_step)
    except GridMismatch as exc:
        raise ValidationError(f"horizon: {exc}", field="horizon") from None

    if "targets" in doc:
        points = [TargetPoint(float(t["date"]), float(t["value"]), t["unit"]) for t in doc["targets"]]
    else:
        rf = doc["relative_forecast"]
        if len(rf["dates"]) != len(rf["index_bp"]):
            _fail("relative_forecast", "dates and index_bp must have the same length")
        try:
            moved = translate_relative_forecast(zip(rf["dates"], rf["index_bp"]),
                                                rf["issuer_anchor_bp"])
        except RwkitError as exc:
            raise ValidationError(f"relative_forecast: {exc}", field="relative_forecast") from None
        points = [TargetPoint(d, v, "bp-spread") for d, v in moved]

    dates = np.array([p.date for p in points])
    if len({p.is_spread for p in points}) > 1:
        _fail("targets", "all targets must share one unit family (spread or hazard)")
    if np.any(dates <= 0) or np.any(dates > horizon + 1e-9):
        _fail("targets", f"target dates must lie in (0, {horizon}]")
    if np.unique(dates).size != dates.size:
        _fail("targets", "duplicate target dates")
    try:
        grid.index_of(dates)
    except GridMismatch as exc:
        raise ValidationError(f"targets: {exc}", field="targets") from None

    target_maturity = float(doc["target_maturity"])
    if target_maturity > curve.last_tenor:
        _fail("target_maturity", f"{target_maturity} exceeds the curve span {curve.last_tenor}")
    if horizon + target_maturity > curve.last_tenor + 1e-9:
        _fail("target_maturity", f"horizon + target_maturity exceeds the curve span {curve.last_tenor}")
    maturities = tuple(float(x) for x in doc.get("report_maturities", DEFAULT_MATURITIES))
    if horizon + max(maturities) > curve.last_tenor + 1e-9:
        _fail("report_maturities", f"horizon + maturity exceeds the curve span {curve.last_tenor}")
    if any(b <= a for a, b in zip(maturities, maturities[1:])):
        _fail("report_maturities", "must be strictly increasing")

    snapshots = doc.get("snapshot_dates")
    if snapshots is None:
        snapshots = [0.0] + sorted(set(float(d) for d in dates))
    snapshots = tuple(float(s) for s in snapshots)
    try:
        grid.index_of(snapshots)
    except GridMismatch as exc:
        raise ValidationError(f"snapshot_dates: {exc}", field="snapshot_dates") from None

    try:
        hazard_values = tuple(float(v) for v in _to_hazard(
            [p.value for p in points], points[0].is_spread, target_maturity, model.recovery_delta))
    except RwkitError as exc:
        raise ValidationError(f"targets: {exc}", field="targets") from None
    expanded = expand_targets(points, doc["target_fill"], grid, curve, target_maturity)

    return ScenarioSpec(
        model=model,
        curve_file=curve_path,
        scenario_kind=doc["scenario_kind"],
        target_maturity=target_maturity,
        targets=tuple(points),
        target_fill=doc["target_fill"],
        seed=int(doc["seed"]),
        grid_step=grid_step,
        horizon=horizon,
        n_paths=int(doc.get("n_paths", 20000)),
        report_maturities=maturities,
        snapshot_dates=snapshots,
        output_dir=Path(doc.get("output_dir", "out")),
        strict_domain=bool(doc.get("strict_domain", False)),
        name=doc.get("name", "scenario"),
        as_of_date=doc.get("as_of_date"),
        config_sha256=config_sha256,
        curve=curve,
        hazard_values=hazard_values,
        expanded=expanded,
    )


def load_scenario(path) -> ScenarioSpec:
    """Read, validate and expand a scenario JSON file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    return parse_scenario(doc, path.parent, hashlib.sha256(raw).hexdigest())


def with_overrides(spec: ScenarioSpec, n_paths=None, seed=None, output_dir=None) -> ScenarioSpec:
    changes = {}
    if n_paths is not None:
        if n_paths < 100:
            raise ValidationError("n_paths: must be >= 100", field="n_paths")
        changes["n_paths"] = int(n_paths)
    if seed is not None:
        changes["seed"] = int(seed)
    if output_dir is not None:
        changes["output_dir"] = Path(output_dir)
    return replace(spec, **changes) if changes else spec


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class Summary:
    """Mean, SE and quantiles over paths for a grid of cells."""

    mean: np.ndarray
    se: np.ndarray
    q10: np.ndarray
    q90: np.ndarray

    @classmethod
    def of(cls, values, scale=1.0):
        s = summarize(values)
        return cls(s.mean * scale, s.se * scale, s.q10 * scale, s.q90 * scale)


@dataclass
class ReportBundle:
    name: str
    times: np.ndarray
    alpha: StepAlpha
    f_at_knots: np.ndarray
    f_on_grid: np.ndarray
    targets: TargetSet
    market_target_bp: float
    market_target_hazard: float
    spread_tracking: Summary  # Sp*(t, t + T~) in bp, per grid date
    hazard_tracking: Summary  # Lambda*(t, t + T~), per grid date
    rn_spread_mean: np.ndarray
    rn_hazard_mean: np.ndarray
    hit: np.ndarray  # per expanded target
    z_scores: np.ndarray
    snapshot_dates: np.ndarray
    maturities: np.ndarray
    term_structure: Summary  # (snapshots, maturities) in bp
    rn_term_structure_mean: np.ndarray
    violations: np.ndarray  # per grid date
    negative_hazard: int
    negative_hazard_by_date: dict
    novikov: NovikovReport
    provenance: dict
    warnings: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return bool(np.all(self.hit))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise StageError(name, exc) from exc


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "scikit-learn", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def make_estimator(spec: ScenarioSpec, n_workers=None) -> RealWorldCalibrator:
    p = spec.model
    return RealWorldCalibrator(
        kappa=p.kappa, theta=p.theta, sigma=p.sigma, y0=p.y0, recovery_delta=p.recovery_delta,
        curve=spec.curve, target_maturity=spec.target_maturity, grid_step=spec.grid_step,
        horizon=spec.horizon, n_paths=spec.n_paths, seed=spec.seed, n_workers=n_workers,
        strict_domain=spec.strict_domain,
    )


def calibrate_scenario(spec: ScenarioSpec, n_workers=None) -> RealWorldCalibrator:
    """Simulate and calibrate ``alpha``; stops short of the reports."""
    est = make_estimator(spec, n_workers)
    _stage("simulate", est.simulate)
    _stage("calibrate", est.calibrate, spec.expanded)
    return est


def run_scenario(spec: ScenarioSpec, n_workers=None) -> ReportBundle:
    """Run ingest, simulation, calibration, the real-world shift and the summaries."""
    est = calibrate_scenario(spec, n_workers)
    T = spec.target_maturity
    delta = spec.model.recovery_delta

    track = _stage("rw_transform", est.rw_functionals, [T])
    snaps = np.asarray(spec.snapshot_dates, float)
    surface = _stage("rw_transform", est.rw_functionals, list(spec.report_maturities), snaps)

    def _summaries():
        sp = Summary.of(track.Sp_star[:, :, 0], 1.0 / BP)
        lam = Summary.of(track.Lambda_star[:, :, 0])
        ts = Summary.of(surface.Sp_star, 1.0 / BP)
        return sp, lam, ts

    sp_stats, lam_stats, ts_stats = _stage("summarize", _summaries)

    idx = est.grid_.index_of(spec.expanded.dates)
    gap = lam_stats.mean[idx] - spec.expanded.values
    se = lam_stats.se[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, gap / se, np.where(gap == 0, 0.0, np.inf))
    hit = np.abs(gap) <= SE_MULTIPLE * se

    warnings = []
    violations = track.violations
    if violations.sum():
        warnings.append(f"{int(violations.sum())} path-date cells floored where sqrt(y) + f < 0")
    neg_by_date = {}
    for times, counts in ((track.times, track.negative_hazard.sum(axis=1)),
                          (surface.times, surface.negative_hazard.sum(axis=1))):
        for tt, c in zip(times, counts):
            if c:
                key = _num(tt)
                neg_by_date[key] = neg_by_date.get(key, 0) + int(c)
    neg = int(sum(neg_by_date.values()))
    if neg:
        warnings.append(f"{neg} path-cells with negative Lambda*")

    market_h = float(spec.curve.cumulative_hazard(T))
    provenance = {
        "config_sha256": spec.config_sha256,
        "seed": spec.seed,
        "n_paths": spec.n_paths,
        "grid_step": spec.grid_step,
        "horizon": spec.horizon,
        "curve_file": spec.curve_file.name,
        "versions": _versions(),
    }
    return ReportBundle(
        name=spec.name,
        times=track.times,
        alpha=est.alpha_,
        f_at_knots=est.f_at_knots_,
        f_on_grid=track.f,
        targets=spec.expanded,
        market_target_bp=_spread_bp_at(spec.curve, T),
        market_target_hazard=market_h,
        spread_tracking=sp_stats,
        hazard_tracking=lam_stats,
        rn_spread_mean=track.Sp[:, :, 0].mean(axis=0) / BP,
        rn_hazard_mean=track.Lambda[:, :, 0].mean(axis=0),
        hit=hit,
        z_scores=z,
        snapshot_dates=surface.times,
        maturities=surface.maturities,
        term_structure=ts_stats,
        rn_term_structure_mean=surface.Sp.mean(axis=0) / BP,
        violations=violations,
        negative_hazard=neg,
        negative_hazard_by_date=neg_by_date,
        novikov=novikov_check(spec.model),
        provenance=provenance,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# output files


def _num(v) -> str:
    v = float(v)
    return format(v, ".12g") if math.isfinite(v) else ""


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _num(c) for c in row])


def _target_on_grid(bundle: ReportBundle, values, at_zero):
    out = np.full(bundle.times.shape, np.nan)
    out[0] = at_zero
    pos = np.searchsorted(bundle.times, bundle.targets.dates - 1e-9)
    out[pos] = values
    return out


def write_alpha_csv(path, alpha: StepAlpha, f_at_knots):
    ends = np.append(alpha.knot_times[1:], np.nan)
    _write_csv(Path(path), ["knot_years", "alpha", "f_end", "interval_end_years"],
               zip(alpha.knot_times, alpha.values, f_at_knots, ends))


def emit_reports(bundle: ReportBundle, spec: ScenarioSpec, out_dir=None) -> dict:
    """Write the CSV, JSON and SVG artifacts; returns ``{name: path}``."""
    out = Path(out_dir or spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    t = bundle.times
    sp, lam = bundle.spread_tracking, bundle.hazard_tracking

    target_bp = np.full(t.shape, np.nan)
    if bundle.targets.source_spreads_bp is not None:
        target_bp = _target_on_grid(bundle, bundle.targets.source_spreads_bp, bundle.market_target_bp)
    else:
        # hazard targets: report their spread equivalent
        conv = spread_from_hazard(bundle.targets.values, spec.model.recovery_delta, 0.0,
                                  spec.target_maturity) / BP
        target_bp = _target_on_grid(bundle, conv, bundle.market_target_bp)
    target_h = _target_on_grid(bundle, bundle.targets.values, bundle.market_target_hazard)

    files["target_tracking.csv"] = out / "target_tracking.csv"
    _write_csv(files["target_tracking.csv"], TRACKING_COLUMNS,
               zip(t, target_bp, sp.mean, sp.se, sp.q10, sp.q90))

    files["hazard_tracking.csv"] = out / "hazard_tracking.csv"
    _write_csv(files["hazard_tracking.csv"],
               ["t_years", "target_hazard", "mean", "se", "q10", "q90", "rn_mean", "f"],
               zip(t, target_h, lam.mean, lam.se, lam.q10, lam.q90, bundle.rn_hazard_mean,
                   bundle.f_on_grid))

    ts = bundle.term_structure
    rows = []
    for i, d in enumerate(bundle.snapshot_dates):
        for j, m in enumerate(bundle.maturities):
            rows.append((d, m, ts.mean[i, j], ts.se[i, j], ts.q10[i, j], ts.q90[i, j],
                         bundle.rn_term_structure_mean[i, j]))
    files["term_structure.csv"] = out / "term_structure.csv"
    _write_csv(files["term_structure.csv"],
               ["t_years", "maturity_years", "mean_bp", "se_bp", "q10_bp", "q90_bp", "rn_mean_bp"],
               rows)

    files["alpha.csv"] = out / "alpha.csv"
    write_alpha_csv(files["alpha.csv"], bundle.alpha, bundle.f_at_knots)

    nov = bundle.novikov
    diagnostics = {
        "scenario": bundle.name,
        "scenario_kind": spec.scenario_kind,
        "target_fill": spec.target_fill,
        "target_maturity_years": spec.target_maturity,
        "success": bundle.success,
        "targets_hit": int(bundle.hit.sum()),
        "targets_total": int(bundle.hit.size),
        "max_abs_z": float(np.max(np.abs(bundle.z_scores))),
        "expectation_measure": "risk-neutral ensemble (E Lambda and E sqrt(y) for alpha)",
        "violations_total": int(bundle.violations.sum()),
        "violations_by_date": {_num(tt): int(c) for tt, c in zip(t, bundle.violations) if c},
        "negative_lambda_star_cells": bundle.negative_hazard,
        "negative_lambda_star_by_date": bundle.negative_hazard_by_date,
        "warnings": bundle.warnings,
        "novikov": {
            "gamma": nov.gamma,
            "exponent_mu": nov.exponent_mu,
            "domain_boundary": nov.domain_boundary,
            "passes": nov.passes,
            "transform_finite": nov.transform_finite,
        },
        "provenance": bundle.provenance,
    }
    files["diagnostics.json"] = out / "diagnostics.json"
    with open(files["diagnostics.json"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")

    chart = svg.Chart(f"{bundle.name}: {spec.target_maturity:g}y spread", "t (years)", "spread (bp)")
    chart.add("target", t, target_bp, color="#000000")
    chart.add("mean Sp*", t, sp.mean)
    chart.add("q10", t, sp.q10, dashed=True)
    chart.add("q90", t, sp.q90, dashed=True)
    chart.add("mean Sp (RN)", t, bundle.rn_spread_mean, dashed=True, color="#7f7f7f")
    files["target_tracking.svg"] = out / "target_tracking.svg"
    svg.write(chart, files["target_tracking.svg"])

    chart = svg.Chart(f"{bundle.name}: mean real-world term structure", "maturity (years)",
                      "spread (bp)")
    for i, d in enumerate(bundle.snapshot_dates):
        chart.add(f"t = {d:.4g}", bundle.maturities, ts.mean[i])
    files["term_structure.svg"] = out / "term_structure.svg"
    svg.write(chart, files["term_structure.svg"])
    return files


def emit_rn_reports(est: RealWorldCalibrator, spec: ScenarioSpec, out_dir=None) -> dict:
    """Risk-neutral-only tables for the ``simulate`` command."""
    out = Path(out_dir or spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    track = est.rn_functionals([spec.target_maturity])
    sp = Summary.of(track.Sp[:, :, 0], 1.0 / BP)
    files = {"rn_tracking.csv": out / "rn_tracking.csv",
             "rn_term_structure.csv": out / "rn_term_structure.csv"}
    _write_csv(files["rn_tracking.csv"], ["t_years", "mean_bp", "se_bp", "q10_bp", "q90_bp"],
               zip(track.times, sp.mean, sp.se, sp.q10, sp.q90))
    surf = est.rn_functionals(list(spec.report_maturities), np.asarray(spec.snapshot_dates))
    ts = Summary.of(surf.Sp, 1.0 / BP)
    rows = [(d, m, ts.mean[i, j], ts.se[i, j], ts.q10[i, j], ts.q90[i, j])
            for i, d in enumerate(surf.times) for j, m in enumerate(surf.maturities)]
    _write_csv(files["rn_term_structure.csv"],
               ["t_years", "maturity_years", "mean_bp", "se_bp", "q10_bp", "q90_bp"], rows)
    return files
