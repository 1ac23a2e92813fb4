"""File formats: point CSVs, region GeoJSON, design YAML, result exports.

All numeric output uses 17 significant digits, '.' decimals, UTF-8 and
LF line endings, so byte-identical reruns are possible from a manifest.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import yaml
from shapely.geometry import shape

from .design import DesignSpec
from .envelope import EnvelopeResult
from .errors import ConfigError, InputError
from .fitting import FitResult
from .geometry import Window
from .intensity import IntensitySurface
from .pattern import MarkedPointPattern, Region, RegionSet
from .summaries import SummaryCurve

FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


def _open_write(path):
    return open(path, "w", encoding="utf-8", newline="\n")


# ----------------------------------------------------------------------
# ingestion
# ----------------------------------------------------------------------


def read_points_csv(path) -> tuple:
    """Read an ``x,y,mark`` CSV (1-based integer marks)."""
    points, marks = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["x", "y", "mark"]:
            raise InputError(f"{path}: expected header 'x,y,mark'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                points.append((float(row[0]), float(row[1])))
                marks.append(int(row[2]))
            except (ValueError, IndexError):
                raise InputError(f"{path}:{lineno}: cannot parse point row {row!r}") from None
    return np.asarray(points, dtype=float).reshape(-1, 2), np.asarray(marks, dtype=int)


def write_points_csv(path, points, marks):
    with _open_write(path) as fh:
        fh.write("x,y,mark\n")
        for (x, y), m in zip(points, marks):
            fh.write(f"{_fmt(x)},{_fmt(y)},{int(m)}\n")


def read_regions_geojson(path) -> RegionSet:
    """Read a FeatureCollection into a RegionSet.

    Every feature needs an ``id`` plus ``population`` or ``density`` in
    its properties; remaining numeric properties become raw covariates.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("type") != "FeatureCollection":
        raise InputError(f"{path}: expected a GeoJSON FeatureCollection")
    regions = []
    for k, feature in enumerate(data.get("features", [])):
        props = dict(feature.get("properties") or {})
        rid = props.pop("id", feature.get("id"))
        if rid is None:
            raise InputError(f"{path}: feature {k} lacks an 'id'")
        population = props.pop("population", None)
        density = props.pop("density", None)
        geom = feature.get("geometry")
        if geom is None:
            raise InputError(f"{path}: feature id={rid} lacks geometry")
        covariates = {}
        for name, value in props.items():
            try:
                covariates[name] = float(value)
            except (TypeError, ValueError):
                continue  # non-numeric properties are carried by the file only
        try:
            regions.append(Region(id=int(rid), polygon=shape(geom),
                                  population=population, density=density,
                                  covariates=covariates))
        except InputError as exc:
            raise InputError(f"{path}: feature id={rid}: {exc}") from None
    return RegionSet(regions)


def write_regions_geojson(path, regions: RegionSet):
    from shapely.geometry import mapping

    features = []
    for r in regions.regions:
        props = {"id": int(r.id), "population": float(r.population)}
        props.update({k: float(v) for k, v in r.covariates.items()})
        features.append({"type": "Feature", "properties": props,
                         "geometry": mapping(r.polygon)})
    with _open_write(path) as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh)
        fh.write("\n")


def read_design_yaml(path) -> DesignSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            config = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        return DesignSpec.from_config(config)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def read_coefficients_json(path, spec: DesignSpec) -> np.ndarray:
    """Read a full coefficient vector keyed by mark name.

    Format: ``{"coefficients": {"<mark>": [b_i values, intercept first]}}``.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    table = data.get("coefficients")
    if not isinstance(table, dict):
        raise ConfigError(f"{path}: expected a 'coefficients' mapping")
    beta = np.zeros(spec.p)
    for i, mark in enumerate(spec.marks):
        if mark not in table:
            raise ConfigError(f"{path}: no coefficients for mark {mark!r}")
        vec = np.asarray(table[mark], dtype=float)
        if vec.size != spec.b[i]:
            raise ConfigError(
                f"{path}: mark {mark!r} needs {spec.b[i]} values, got {vec.size}")
        beta[spec.mark_slice(i)] = vec
    return beta


# ----------------------------------------------------------------------
# exports
# ----------------------------------------------------------------------


def write_curve_csv(path, curve: SummaryCurve):
    with _open_write(path) as fh:
        fh.write("r,value\n")
        for r, v in zip(curve.r, curve.value):
            fh.write(f"{_fmt(r)},{_fmt(v)}\n")


def write_envelope_csv(path, result: EnvelopeResult):
    with _open_write(path) as fh:
        fh.write("r,observed,lower,upper,significant\n")
        for k in range(result.r.size):
            fh.write(",".join([
                _fmt(result.r[k]), _fmt(result.observed[k]), _fmt(result.lower[k]),
                _fmt(result.upper[k]), str(int(result.significant[k])),
            ]) + "\n")


def write_surface_csv(path, surface: IntensitySurface):
    """Raster rows as ``x,y,value`` (in-window cells only)."""
    raster = surface.raster
    with _open_write(path) as fh:
        fh.write("x,y,value\n")
        for iy in range(raster.ny):
            for ix in range(raster.nx):
                if raster.mask[iy, ix]:
                    fh.write(f"{_fmt(raster.xs[ix])},{_fmt(raster.ys[iy])},"
                             f"{_fmt(surface.values[iy, ix])}\n")


def write_surface_ascii(path, surface: IntensitySurface, nodata: float = -1.0):
    """Plain-text grid: header lines then rows top-down, nodata off-window."""
    raster = surface.raster
    with _open_write(path) as fh:
        fh.write(f"ncols {raster.nx}\n")
        fh.write(f"nrows {raster.ny}\n")
        fh.write(f"xllcorner {_fmt(raster.x0)}\n")
        fh.write(f"yllcorner {_fmt(raster.y0)}\n")
        fh.write(f"dx {_fmt(raster.dx)}\n")
        fh.write(f"dy {_fmt(raster.dy)}\n")
        fh.write(f"nodata_value {_fmt(nodata)}\n")
        for iy in range(raster.ny - 1, -1, -1):
            row = [
                _fmt(surface.values[iy, ix]) if raster.mask[iy, ix] else _fmt(nodata)
                for ix in range(raster.nx)
            ]
            fh.write(" ".join(row) + "\n")


def write_coefficients_csv(path, result: FitResult):
    spec = result.spec
    names = spec.coefficient_names
    group_of = spec.group_of()
    with _open_write(path) as fh:
        fh.write("name,mark,group,estimate,se,ci_lo,ci_hi,selected\n")
        for l in range(spec.p):
            mark, name = names[l]
            label = spec.groups[group_of[l]].label if group_of[l] >= 0 else ""
            se = result.standard_errors[l] if result.standard_errors is not None else np.nan
            lo = result.ci_lower[l] if result.ci_lower is not None else np.nan
            hi = result.ci_upper[l] if result.ci_upper is not None else np.nan
            fh.write(",".join([
                name, str(mark), label, _fmt(result.beta[l]),
                "" if np.isnan(se) else _fmt(se),
                "" if np.isnan(lo) else _fmt(lo),
                "" if np.isnan(hi) else _fmt(hi),
                str(int(result.active[l])),
            ]) + "\n")


def write_path_csv(path, result: FitResult):
    with _open_write(path) as fh:
        fh.write("lambda,df,bic\n")
        for rec in result.path.records:
            fh.write(f"{_fmt(rec.lam)},{rec.df},{_fmt(rec.bic)}\n")


def fit_result_to_dict(result: FitResult) -> dict:
    spec = result.spec

    def arr(a):
        return None if a is None else [None if np.isnan(v) else float(v) for v in a]

    return {
        "coefficients": [float(v) for v in result.beta],
        "coefficient_names": [list(t) for t in spec.coefficient_names],
        "active": [bool(v) for v in result.active],
        "df": result.df,
        "lambda_best": float(result.path.lambda_best),
        "bic_path": [
            {"lambda": float(r.lam), "df": int(r.df), "bic": float(r.bic)}
            for r in result.path.records
        ],
        "unpenalized": [float(v) for v in result.beta_unpenalized],
        "covariance": None if result.covariance is None
        else [[float(v) for v in row] for row in result.covariance],
        "ci_level": result.ci_level,
        "ci_lower": arr(result.ci_lower),
        "ci_upper": arr(result.ci_upper),
        "standard_errors": arr(result.standard_errors),
        "objective": result.objective,
        "kkt_residual": result.kkt_residual,
        "covariance_mode": result.covariance_mode,
        "truncation_radius": result.truncation_radius,
        "split": {
            "training_fraction": result.split.training_fraction,
            "validation_fraction": result.split.validation_fraction,
            "seed": result.split.seed,
        } if result.split else None,
    }


def write_fit_json(path, result: FitResult):
    with _open_write(path) as fh:
        json.dump(fit_result_to_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_to_dict(report) -> dict:
    def arr(a):
        if a is None:
            return None
        a = np.asarray(a)
        if a.ndim == 1:
            return [None if np.isnan(v) else float(v) for v in a]
        return [[None if np.isnan(v) else float(v) for v in row] for row in a]

    # runtime is reported on the console only: exported files must be
    # byte-reproducible from a manifest
    return {
        "kind": report.kind,
        "scales": [float(s) for s in report.scales],
        "expected_counts": [float(m) for m in report.expected_counts],
        "replicates": report.replicates,
        "mean_error": arr(report.mean_error),
        "slope": report.slope,
        "zero_frequency": arr(report.zero_frequency),
        "degenerate": [int(d) for d in report.degenerate],
        "seed": report.seed,
    }


def write_report_json(path, report):
    with _open_write(path) as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(path, report):
    """Long-format CSV: one row per (scale, statistic)."""
    with _open_write(path) as fh:
        if report.kind == "consistency":
            fh.write("scale,mu,replicates,degenerate,mean_error\n")
            for k, s in enumerate(report.scales):
                fh.write(",".join([
                    _fmt(s), _fmt(report.expected_counts[k]), str(report.replicates),
                    str(int(report.degenerate[k])), _fmt(report.mean_error[k]),
                ]) + "\n")
        else:
            fh.write("scale,mu,replicates,degenerate,coefficient,zero_frequency\n")
            for k, s in enumerate(report.scales):
                for l in range(report.zero_frequency.shape[1]):
                    fh.write(",".join([
                        _fmt(s), _fmt(report.expected_counts[k]),
                        str(report.replicates), str(int(report.degenerate[k])),
                        str(l), _fmt(report.zero_frequency[k, l]),
                    ]) + "\n")


def write_manifest(path, payload: dict):
    with _open_write(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_config(path) -> dict:
    """YAML or JSON mapping used to pre-fill CLI options."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of option names")
    return data


def load_pattern(points_path, regions: RegionSet = None, window: Window = None,
                 mark_count=None) -> MarkedPointPattern:
    points, marks = read_points_csv(points_path)
    if window is None:
        if regions is None:
            raise InputError("a window or a region set is required to frame the points")
        window = regions.window()
    return MarkedPointPattern(points, marks, window, mark_count=mark_count)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
