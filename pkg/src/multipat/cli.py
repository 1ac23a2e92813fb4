"""Command line interface.

Every run writes its resolved configuration (plus seed and tool
version) to ``manifest.json`` in the output directory; re-running with
``--config manifest.json`` reproduces the outputs byte for byte.
Explicit flags always win over config-file values.  Exit codes: 0 on
success, 1 on input errors, 2 on numerical failures.
"""

from __future__ import annotations

import importlib.metadata
import sys
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import fileio
from .envelope import envelope_test
from .errors import ConfigError, InputError, MultipatError, NumericalError
from .experiments import consistency_experiment, default_scenario, selection_experiment
from .fitting import SplitSpec, predict_intensity, rasterize_region_values, two_step_fit
from .geometry import Window
from .intensity import adaptive_intensity, adaptive_intensity_at_points, kernel_intensity
from .parallel import resolve_threads
from .pattern import MarkedPointPattern
from .simulate import SyntheticScenario, simulate_inhom_poisson, simulate_scenario, stream_rng
from .summaries import center_l, default_r_grid, inhom_cross_k, inhom_k

try:
    __version__ = importlib.metadata.version("multipat")
except importlib.metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

_META_KEYS = {"config"}


def _resolve_config(ctx: click.Context) -> dict:
    """Merge config-file values under explicit CLI flags."""
    params = dict(ctx.params)
    config_path = params.get("config")
    if config_path:
        data = fileio.read_config(config_path)
        if "parameters" in data and isinstance(data["parameters"], dict):
            data = data["parameters"]
        for key, value in data.items():
            name = str(key).replace("-", "_")
            if name in _META_KEYS:
                continue
            if name not in params:
                raise ConfigError(f"unknown config key {key!r} for this subcommand")
            if ctx.get_parameter_source(name) == ParameterSource.DEFAULT:
                if isinstance(params[name], tuple) and isinstance(value, list):
                    value = tuple(value)
                params[name] = value
    return params


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _write_manifest(outdir: Path, subcommand: str, params: dict):
    payload = {
        "tool": "multipat",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": {k: _jsonable(v) for k, v in params.items() if k not in _META_KEYS},
    }
    fileio.write_manifest(outdir / "manifest.json", payload)



def _require(params: dict, *names: str):
    missing = [n for n in names if params.get(n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise InputError(f"missing required option(s): {flags}")

def _load_frame(params):
    """Region set and window from --regions / --window options."""
    regions = None
    if params.get("regions"):
        regions = fileio.read_regions_geojson(params["regions"])
    window = None
    if params.get("window"):
        x0, y0, x1, y1 = params["window"]
        window = Window.rectangle(x0, y0, x1, y1)
    elif regions is not None:
        window = regions.window()
    if window is None:
        raise InputError("provide --regions or --window to frame the pattern")
    return regions, window


def _load_pattern(params, window) -> MarkedPointPattern:
    points, marks = fileio.read_points_csv(params["points"])
    return MarkedPointPattern(points, marks, window)


def _r_grid(pattern, params):
    return default_r_grid(pattern.window, n_steps=params["r_steps"],
                          r_max=params["r_max"])


def _rho_values(pattern, mark, params):
    if params["intensity"] == "constant":
        lam = len(pattern.points_of_mark(mark)) / pattern.window.area
        return np.full(len(pattern.points_of_mark(mark)), lam)
    return np.maximum(adaptive_intensity_at_points(
        pattern, mark=mark, pilot_bandwidth=params["pilot_bandwidth"],
        grid=(params["grid"], params["grid"]),
        bw_grid=(params["bw_grid"], params["bw_grid"])), 1e-300)


@click.group(name="multipat")
@click.version_option(version=__version__)
def cli():
    """Multitype spatial point pattern analysis."""


def _common(fn):
    fn = click.option("--output", type=click.Path(path_type=Path), default=Path("."),
                      show_default=True, help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--threads", type=int, default=0,
                      help="Worker threads (0 = all cores).")(fn)
    fn = click.option("--config", type=click.Path(exists=True, path_type=Path),
                      default=None, help="YAML/JSON file (or manifest) pre-filling options.")(fn)
    return fn


# ----------------------------------------------------------------------


@cli.command()
@click.option("--points", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--regions", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--window", type=float, nargs=4, default=None,
              help="Rectangle x0 y0 x1 y1 (alternative to --regions).")
@click.option("--mark", type=int, multiple=True,
              help="Marks to estimate (default: all).")
@click.option("--bandwidth", type=float, default=None,
              help="Fixed bandwidth; omit for adaptive estimation.")
@click.option("--pilot-bandwidth", type=float, default=None,
              help="Adaptive pilot bandwidth (rule of thumb when omitted).")
@click.option("--grid", type=int, default=256, show_default=True)
@click.option("--bw-grid", type=int, default=16, show_default=True)
@_common
@click.pass_context
def intensity(ctx, **_kwargs):
    """Kernel intensity surfaces per mark (CSV raster + ASCII grid)."""
    params = _resolve_config(ctx)
    _require(params, "points")
    _, window = _load_frame(params)
    pattern = _load_pattern(params, window)
    outdir = fileio.ensure_dir(params["output"])
    marks = params["mark"] or tuple(range(1, pattern.mark_count + 1))
    for mk in marks:
        if params["bandwidth"] is not None:
            surface = kernel_intensity(pattern, mark=mk, bandwidth=params["bandwidth"],
                                       grid=(params["grid"], params["grid"]))
        else:
            surface = adaptive_intensity(pattern, mark=mk,
                                         pilot_bandwidth=params["pilot_bandwidth"],
                                         bw_grid=(params["bw_grid"], params["bw_grid"]),
                                         grid=(params["grid"], params["grid"]))
        fileio.write_surface_csv(outdir / f"intensity_mark{mk}.csv", surface)
        fileio.write_surface_ascii(outdir / f"intensity_mark{mk}.asc", surface)
        click.echo(f"intensity mark {mk}: n={len(pattern.points_of_mark(mk))} "
                   f"mass={surface.integral():.6g} max={surface.max_value():.6g}")
    _write_manifest(outdir, "intensity", params)


@cli.command()
@click.option("--points", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--regions", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--window", type=float, nargs=4, default=None)
@click.option("--mark", type=int, default=None, help="Mark for a same-type K.")
@click.option("--cross", type=int, nargs=2, default=None,
              help="Pair of marks for a cross-K.")
@click.option("--r-max", type=float, default=None)
@click.option("--r-steps", type=int, default=512, show_default=True)
@click.option("--correction", type=click.Choice(["translation", "border"]),
              default="translation", show_default=True)
@click.option("--intensity", type=click.Choice(["adaptive", "constant"]),
              default="adaptive", show_default=True)
@click.option("--pilot-bandwidth", type=float, default=None)
@click.option("--grid", type=int, default=256, show_default=True)
@click.option("--bw-grid", type=int, default=16, show_default=True)
@_common
@click.pass_context
def kfun(ctx, **_kwargs):
    """Inhomogeneous K and centered L curves (CSV)."""
    params = _resolve_config(ctx)
    _require(params, "points")
    _, window = _load_frame(params)
    pattern = _load_pattern(params, window)
    outdir = fileio.ensure_dir(params["output"])
    r = _r_grid(pattern, params)
    if params["cross"]:
        a, b = params["cross"]
        curve = inhom_cross_k(pattern, a, b, _rho_values(pattern, a, params),
                              _rho_values(pattern, b, params), r_grid=r,
                              correction=params["correction"])
        stem = f"kfun_cross_{a}_{b}"
    elif params["mark"] is not None:
        mk = params["mark"]
        curve = inhom_k(pattern, mk, _rho_values(pattern, mk, params), r_grid=r,
                        correction=params["correction"])
        stem = f"kfun_mark{mk}"
    else:
        raise InputError("provide --mark or --cross")
    centered = center_l(curve)
    fileio.write_curve_csv(outdir / f"{stem}.csv", curve)
    fileio.write_curve_csv(outdir / f"{stem}_centered_l.csv", centered)
    click.echo(f"{stem}: r_max={r[-1]:.6g} max_centered_l={centered.value.max():.6g}")
    _write_manifest(outdir, "kfun", params)


@cli.command()
@click.option("--points", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--regions", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--window", type=float, nargs=4, default=None)
@click.option("--mark", type=int, default=None)
@click.option("--cross", type=int, nargs=2, default=None)
@click.option("--sims", type=int, default=999, show_default=True)
@click.option("--level", type=float, default=0.95, show_default=True)
@click.option("--r-max", type=float, default=None)
@click.option("--r-steps", type=int, default=512, show_default=True)
@click.option("--correction", type=click.Choice(["translation", "border"]),
              default="translation", show_default=True)
@click.option("--intensity", type=click.Choice(["adaptive", "constant"]),
              default="adaptive", show_default=True)
@click.option("--pilot-bandwidth", type=float, default=None)
@click.option("--grid", type=int, default=256, show_default=True)
@click.option("--bw-grid", type=int, default=16, show_default=True)
@click.option("--reestimate/--no-reestimate", default=True, show_default=True,
              help="Re-estimate the intensity on every simulated pattern.")
@_common
@click.pass_context
def envelope(ctx, **_kwargs):
    """Global envelope test of the inhomogeneous Poisson null."""
    params = _resolve_config(ctx)
    _require(params, "points")
    _, window = _load_frame(params)
    pattern = _load_pattern(params, window)
    outdir = fileio.ensure_dir(params["output"])
    if params["cross"]:
        marks = tuple(params["cross"])
        stem = f"envelope_cross_{marks[0]}_{marks[1]}"
    elif params["mark"] is not None:
        marks = params["mark"]
        stem = f"envelope_mark{params['mark']}"
    else:
        raise InputError("provide --mark or --cross")
    result = envelope_test(
        pattern, marks, n_sims=params["sims"], level=params["level"],
        r_grid=_r_grid(pattern, params), intensity=params["intensity"],
        pilot_bandwidth=params["pilot_bandwidth"],
        grid=(params["grid"], params["grid"]),
        bw_grid=(params["bw_grid"], params["bw_grid"]),
        reestimate=params["reestimate"], correction=params["correction"],
        seed=params["seed"], threads=resolve_threads(params["threads"]))
    fileio.write_envelope_csv(outdir / f"{stem}.csv", result)
    p_lo, p_hi = result.p_interval
    click.echo(f"{stem}: level={result.level} p=[{p_lo:.6g}, {p_hi:.6g}] "
               f"significant_r={int(result.significant.sum())}/{result.r.size}")
    _write_manifest(outdir, "envelope", params)


@cli.command()
@click.option("--points", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--regions", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--design", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--n-lambdas", type=int, default=100, show_default=True)
@click.option("--lambda-min-ratio", type=float, default=1e-4, show_default=True)
@click.option("--train-fraction", type=float, default=1.0 / 3.0, show_default=True)
@click.option("--ci-level", type=float, default=0.90, show_default=True)
@click.option("--covariance", type=click.Choice(["second_order", "poisson", "none"]),
              default="second_order", show_default=True)
@click.option("--truncation-radius", type=float, default=None,
              help="Second-order truncation radius (auto when omitted).")
@click.option("--surface-grid", type=int, default=256, show_default=True)
@_common
@click.pass_context
def fit(ctx, **_kwargs):
    """Two-step sparse-group-lasso intensity fit."""
    params = _resolve_config(ctx)
    _require(params, "points", "regions", "design")
    regions = fileio.read_regions_geojson(params["regions"])
    spec = fileio.read_design_yaml(params["design"])
    window = regions.window()
    points, marks = fileio.read_points_csv(params["points"])
    pattern = MarkedPointPattern(points, marks, window, mark_count=spec.M)
    outdir = fileio.ensure_dir(params["output"])
    mode = None if params["covariance"] == "none" else params["covariance"]
    result = two_step_fit(
        pattern, regions, spec,
        split=SplitSpec(training_fraction=params["train_fraction"],
                        seed=params["seed"]),
        alpha=params["alpha"], level=params["ci_level"],
        n_lambdas=params["n_lambdas"],
        lambda_min_ratio=params["lambda_min_ratio"], covariance_mode=mode,
        truncation_radius=params["truncation_radius"], seed=params["seed"],
        threads=resolve_threads(params["threads"]))
    fileio.write_coefficients_csv(outdir / "coefficients.csv", result)
    fileio.write_path_csv(outdir / "path.csv", result)
    fileio.write_fit_json(outdir / "fit.json", result)
    rates = predict_intensity(result.beta, regions, spec)
    for i, mark in enumerate(spec.marks):
        surface = rasterize_region_values(
            regions, rates[i], grid=(params["surface_grid"], params["surface_grid"]),
            window=window)
        fileio.write_surface_csv(outdir / f"fitted_intensity_{mark}.csv", surface)
    click.echo(f"fit: p={spec.p} selected={result.df} lambda={result.path.lambda_best:.6g} "
               f"kkt={result.kkt_residual:.3g}")
    _write_manifest(outdir, "fit", params)


@cli.command()
@click.option("--regions", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--design", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--coefficients", type=click.Path(exists=True, path_type=Path), default=None,
              help="JSON file with per-mark coefficient vectors.")
@click.option("--scale", type=float, default=1.0, show_default=True)
@click.option("--window", type=float, nargs=4, default=None)
@click.option("--rate", type=float, default=None,
              help="Constant intensity (homogeneous single-mark simulation).")
@_common
@click.pass_context
def simulate(ctx, **_kwargs):
    """Simulate an inhomogeneous Poisson pattern to points.csv."""
    params = _resolve_config(ctx)
    outdir = fileio.ensure_dir(params["output"])
    if params["rate"] is not None:
        if not params["window"]:
            raise InputError("--rate needs --window")
        x0, y0, x1, y1 = params["window"]
        window = Window.rectangle(x0, y0, x1, y1)
        pts = simulate_inhom_poisson(params["rate"], window,
                                     rng=stream_rng(params["seed"], 0))
        marks = np.ones(len(pts), dtype=int)
    else:
        if not (params["regions"] and params["design"] and params["coefficients"]):
            raise InputError("scenario simulation needs --regions, --design "
                             "and --coefficients (or use --rate with --window)")
        regions = fileio.read_regions_geojson(params["regions"])
        spec = fileio.read_design_yaml(params["design"])
        beta = fileio.read_coefficients_json(params["coefficients"], spec)
        scenario = SyntheticScenario(regions=regions, spec=spec, coefficients=beta,
                                     scale=params["scale"])
        pattern = simulate_scenario(scenario, seed=params["seed"])
        pts, marks = pattern.points, pattern.marks
    fileio.write_points_csv(outdir / "points.csv", pts, marks)
    click.echo(f"simulate: n={len(pts)}")
    _write_manifest(outdir, "simulate", params)


@cli.command()
@click.option("--experiment", type=click.Choice(["consistency", "selection"]),
              default=None)
@click.option("--scales", type=float, multiple=True, default=(1.0, 4.0, 16.0),
              show_default=True)
@click.option("--reps", type=int, default=50, show_default=True)
@click.option("--base-count", type=float, default=2500.0, show_default=True,
              help="Expected total count of the built-in scenario at scale 1.")
@click.option("--scenario-seed", type=int, default=0, show_default=True)
@_common
@click.pass_context
def validate(ctx, **_kwargs):
    """Monte Carlo checks of consistency and selection (report.json/csv)."""
    params = _resolve_config(ctx)
    _require(params, "experiment")
    outdir = fileio.ensure_dir(params["output"])
    scenario = default_scenario(seed=params["scenario_seed"],
                                base_count=params["base_count"])
    runner = (consistency_experiment if params["experiment"] == "consistency"
              else selection_experiment)
    report = runner(scenario, scales=tuple(params["scales"]), reps=params["reps"],
                    seed=params["seed"], threads=resolve_threads(params["threads"]))
    fileio.write_report_json(outdir / "report.json", report)
    fileio.write_report_csv(outdir / "report.csv", report)
    if report.kind == "consistency":
        click.echo(f"validate consistency: slope={report.slope:.4f} "
                   f"errors={np.array2string(report.mean_error, precision=4)} "
                   f"({report.runtime_seconds:.1f}s)")
    else:
        zeros = scenario.coefficients == 0
        freq = report.zero_frequency[-1][zeros]
        click.echo(f"validate selection: zero-freq(largest scale)="
                   f"{np.array2string(freq, precision=3)} "
                   f"({report.runtime_seconds:.1f}s)")
    _write_manifest(outdir, "validate", params)


def main(argv=None) -> int:
    """Entry point with spec'd exit codes (0 ok, 1 input, 2 numerical)."""
    try:
        cli.main(args=argv, prog_name="multipat", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 2
    except (InputError, MultipatError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
