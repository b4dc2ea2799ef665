"""Command-line front end for the simulation and tomography pipeline.

Five subcommands mirror the stages: ``simulate`` writes segment batches,
``extract`` turns them into calibrated quadratures, ``reconstruct`` fits
photon statistics, ``analyze`` maps the Wigner function with a bootstrap
error bar, and ``reproduce`` chains everything from one seed and scores
the result.

Option values resolve as: command-line flag (or environment variable for
the output directory), then the JSON config file (per-command section or
top level), then the built-in default.  Exit codes: 0 success, 1 failed
reproduction checks, 2 bad input or configuration, 3 no signal found,
4 reconstruction failure.
"""

from __future__ import annotations

import functools
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import HeraldyneError, InputFormatError
from .fock import PhotonNumberDistribution, wigner_origin
from .pipeline import (
    calibrate,
    compute_variance_trace,
    extract_mode_function,
    project_quadratures,
    read_quadrature_csv,
    write_mode_csv,
    write_quadrature_csv,
    write_variance_csv,
)
from .reconstruct import (
    EM_DEFAULT_MAX_ITER,
    EM_DEFAULT_TOL,
    build_histogram,
    em_reconstruct,
    fit_mixture_ls,
    read_reconstruction_json,
    reconstruction_record,
    write_reconstruction_json,
)
from .segio import read_batch, read_sidecar, write_batch
from .simulate import (
    DEFAULT_TRUE_P,
    KIND_HERALDED,
    KIND_VACUUM,
    SimulationConfig,
    generate_batch,
)
from .wigner import (
    bootstrap_negativity,
    wigner_grid,
    write_bootstrap_json,
    write_wigner_csv,
    write_wigner_pgm,
)
from .workflow import ReproductionConfig, run_reproduction

#: Below this replica count the bootstrap standard deviation is itself so
#: noisy that the quoted error bar should not be trusted.
MIN_RELIABLE_REPLICAS = 30


def _cli_errors(fn):
    """Map toolkit exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HeraldyneError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
        except ValueError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _resolve(ctx: click.Context, command: str, **params):
    """Apply flag > config-file > default precedence to ``params``."""
    file_cfg = ctx.obj["file_cfg"]
    section = file_cfg.get(command)
    if not isinstance(section, dict):
        section = {}
    resolved = {}
    for name, value in params.items():
        source = ctx.get_parameter_source(name)
        if source in (
            click.core.ParameterSource.COMMANDLINE,
            click.core.ParameterSource.ENVIRONMENT,
        ):
            resolved[name] = value
        elif name in section:
            resolved[name] = section[name]
        elif name in file_cfg and not isinstance(file_cfg[name], dict):
            resolved[name] = file_cfg[name]
        else:
            resolved[name] = value
    return resolved


def _from_default(ctx: click.Context, command: str, name: str) -> bool:
    """True when neither a flag nor the config file set this option."""
    if ctx.get_parameter_source(name) in (
        click.core.ParameterSource.COMMANDLINE,
        click.core.ParameterSource.ENVIRONMENT,
    ):
        return False
    file_cfg = ctx.obj["file_cfg"]
    section = file_cfg.get(command)
    if isinstance(section, dict) and name in section:
        return False
    return not (name in file_cfg and not isinstance(file_cfg[name], dict))


def _out_dir(ctx: click.Context) -> Path:
    out = Path(ctx.obj["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_weights(ctx, param, value):
    if value is None:
        return None
    try:
        return tuple(float(token) for token in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def _true_p(weights) -> PhotonNumberDistribution:
    if weights is None:
        weights = DEFAULT_TRUE_P
    return PhotonNumberDistribution(np.asarray(weights, dtype=float))


_SEED_COMMENT = re.compile(r"^#\s*rng_seed\s*=\s*(\d+)\s*$")


def _scrape_seed(path) -> int | None:
    """Recover an ``rng_seed`` comment from a CSV header, if present."""
    try:
        with Path(path).open() as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                matched = _SEED_COMMENT.match(line.strip())
                if matched:
                    return int(matched.group(1))
    except OSError:
        return None
    return None


@click.group()
@click.version_option(__version__)
@click.option(
    "--out-dir",
    envvar="HERALDYNE_OUTDIR",
    default=".",
    type=click.Path(file_okay=False),
    help="Directory for output artifacts (env: HERALDYNE_OUTDIR).",
)
@click.option(
    "--config",
    "config_file",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file of option defaults (flags override it).",
)
@click.pass_context
def main(ctx, out_dir, config_file):
    """Heralded homodyne simulation and phase-randomized tomography."""
    file_cfg = {}
    if config_file is not None:
        try:
            file_cfg = json.loads(Path(config_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            click.echo(f"error: cannot read config {config_file}: {exc}", err=True)
            sys.exit(2)
        if not isinstance(file_cfg, dict):
            click.echo(f"error: config {config_file} must hold a JSON object", err=True)
            sys.exit(2)
    if (
        ctx.get_parameter_source("out_dir") == click.core.ParameterSource.DEFAULT
        and isinstance(file_cfg.get("out_dir"), str)
    ):
        out_dir = file_cfg["out_dir"]
    ctx.obj = {"out_dir": out_dir, "file_cfg": file_cfg}


@main.command()
@click.option("--segments", default=50_000, show_default=True, help="Heralded trigger count.")
@click.option("--vacuum-segments", default=10_000, show_default=True, help="Vacuum calibration trigger count.")
@click.option("--samples", default=1000, show_default=True, help="Samples per segment.")
@click.option("--true-p", callback=_parse_weights, default=None, help="Comma-separated photon-number weights [default: benchmark mixture].")
@click.option("--signal-gain", default=25.0, show_default=True, help="Quadrature-to-instrument gain kappa.")
@click.option("--background-variance", default=1.0, show_default=True, help="Raw per-sample noise variance.")
@click.option("--peak-offset", default=-10e-9, show_default=True, help="Mode peak time relative to trigger (s).")
@click.option("--seed", default=0, show_default=True, help="Master RNG seed.")
@click.pass_context
@_cli_errors
def simulate(ctx, **params):
    """Synthesize heralded and vacuum segment batches."""
    opts = _resolve(ctx, "simulate", **params)
    out = _out_dir(ctx)
    heralded_cfg = SimulationConfig(
        true_p=_true_p(opts["true_p"]),
        segments=opts["segments"],
        samples_per_segment=opts["samples"],
        peak_offset=opts["peak_offset"],
        background_variance=opts["background_variance"],
        signal_gain=opts["signal_gain"],
        rng_seed=opts["seed"],
    )
    vacuum_cfg = replace(heralded_cfg, segments=opts["vacuum_segments"])
    for kind, cfg, name in (
        (KIND_HERALDED, heralded_cfg, "heralded.hseg"),
        (KIND_VACUUM, vacuum_cfg, "vacuum.hseg"),
    ):
        batch = generate_batch(cfg, kind)
        path = write_batch(out / name, batch, cfg)
        click.echo(
            f"{kind}: {path} ({cfg.segments} segments x {cfg.samples_per_segment} "
            f"samples, fingerprint {batch.config_fingerprint})"
        )


@main.command()
@click.option("--heralded", "heralded_path", type=click.Path(), default=None, help="Heralded batch file [default: OUT_DIR/heralded.hseg].")
@click.option("--vacuum", "vacuum_path", type=click.Path(), default=None, help="Vacuum batch file [default: OUT_DIR/vacuum.hseg].")
@click.option("--baseline-fraction", default=0.1, show_default=True, help="Fraction of each segment edge used for the variance baseline.")
@click.option("--detection-sigma", default=5.0, show_default=True, help="Baseline exceedance threshold in noise-floor units.")
@click.pass_context
@_cli_errors
def extract(ctx, **params):
    """Extract the temporal mode and calibrated quadratures from batches."""
    opts = _resolve(ctx, "extract", **params)
    out = _out_dir(ctx)
    heralded_file = Path(opts["heralded_path"] or out / "heralded.hseg")
    vacuum_file = Path(opts["vacuum_path"] or out / "vacuum.hseg")
    heralded_batch = read_batch(heralded_file)
    vacuum_batch = read_batch(vacuum_file)

    trace = compute_variance_trace(heralded_batch, opts["baseline_fraction"])
    mode = extract_mode_function(trace, opts["detection_sigma"])
    vacuum_ds, heralded_ds = calibrate(
        project_quadratures(vacuum_batch, mode),
        project_quadratures(heralded_batch, mode),
    )

    sidecar = read_sidecar(heralded_file)
    generating = (sidecar or {}).get("config") or {}
    interval = float(generating.get("sample_interval", 0.5e-9))
    meta = {}
    if "rng_seed" in generating:
        meta["rng_seed"] = generating["rng_seed"]
    write_variance_csv(out / "variance.csv", trace, interval, heralded_batch.trigger_index, meta)
    write_mode_csv(out / "mode.csv", mode, interval, heralded_batch.trigger_index, meta)
    write_quadrature_csv(out / "vacuum_quadratures.csv", vacuum_ds, meta)
    write_quadrature_csv(out / "heralded_quadratures.csv", heralded_ds, meta)
    click.echo(
        f"mode peak at sample {mode.peak_index}; calibration scale "
        f"{heralded_ds.calibration_scale:.6g}; vacuum variance "
        f"{float(np.var(vacuum_ds.values, ddof=1)):.6g}"
    )
    click.echo(f"wrote mode.csv, variance.csv, and quadrature CSVs to {out}")


@main.command()
@click.option("--data", "data_path", type=click.Path(), default=None, help="Calibrated quadrature CSV [default: OUT_DIR/heralded_quadratures.csv].")
@click.option("--cutoff", default=5, show_default=True, help="Largest photon number in the fit.")
@click.option("--bins", default=100, show_default=True, help="Histogram bins for the least-squares fit.")
@click.option("--hist-range", nargs=2, type=float, default=(-5.0, 5.0), show_default=True, help="Histogram range.")
@click.option("--tol", default=EM_DEFAULT_TOL, show_default=True, help="EM relative log-likelihood tolerance.")
@click.option("--max-iter", default=EM_DEFAULT_MAX_ITER, show_default=True, help="EM iteration cap.")
@click.pass_context
@_cli_errors
def reconstruct(ctx, **params):
    """Fit photon-number weights by least squares and maximum likelihood."""
    opts = _resolve(ctx, "reconstruct", **params)
    out = _out_dir(ctx)
    data_file = Path(opts["data_path"] or out / "heralded_quadratures.csv")
    dataset = read_quadrature_csv(data_file)

    hist = build_histogram(dataset, opts["bins"], tuple(opts["hist_range"]))
    ls = fit_mixture_ls(hist, opts["cutoff"])
    em = em_reconstruct(dataset, opts["cutoff"], opts["tol"], opts["max_iter"])

    meta = {"source": data_file.name, "samples": len(dataset)}
    seed = _scrape_seed(data_file)
    if seed is not None:
        meta["rng_seed"] = seed
    write_reconstruction_json(
        out / "reconstruction.json",
        {
            "ls": reconstruction_record(
                "ls", opts["cutoff"], ls.p_hat, None, ls.iterations, ls.converged, hist
            ),
            "em": reconstruction_record(
                "em",
                opts["cutoff"],
                em.p_hat,
                em.final_log_likelihood,
                em.iterations,
                em.converged,
                hist,
            ),
        },
        metadata=meta,
    )
    click.echo("ls p: " + " ".join(f"{v:.4f}" for v in ls.p_hat.probs))
    click.echo(
        "em p: "
        + " ".join(f"{v:.4f}" for v in em.p_hat.probs)
        + f"  ({em.iterations} iterations, converged={em.converged})"
    )
    click.echo(f"wrote {out / 'reconstruction.json'}")


@main.command()
@click.option("--data", "data_path", type=click.Path(), default=None, help="Quadrature CSV for bootstrap [default: OUT_DIR/heralded_quadratures.csv].")
@click.option("--reconstruction", "recon_path", type=click.Path(), default=None, help="Reconstruction JSON; its EM weights drive the grid (skips refitting).")
@click.option("--cutoff", default=5, show_default=True, help="Fit cutoff when refitting from data.")
@click.option("--extent", default=5.0, show_default=True, help="Grid half-width in quadrature units.")
@click.option("--resolution", default=201, show_default=True, help="Grid points per axis (odd).")
@click.option("--replicas", default=400, show_default=True, help="Bootstrap replicas.")
@click.option("--seed", default=0, show_default=True, help="Bootstrap resampling seed.")
@click.option("--grid-only", is_flag=True, help="Skip the bootstrap (grid and point estimate only).")
@click.pass_context
@_cli_errors
def analyze(ctx, **params):
    """Map the Wigner function and certify its negativity."""
    opts = _resolve(ctx, "analyze", **params)
    out = _out_dir(ctx)
    recon_file = opts["recon_path"]
    data_file = Path(opts["data_path"] or out / "heralded_quadratures.csv")

    cutoff = opts["cutoff"]
    if recon_file is not None:
        payload = read_reconstruction_json(recon_file)
        p_hat = PhotonNumberDistribution(np.asarray(payload["em"]["p"], dtype=float))
        cutoff = int(payload["em"].get("cutoff", cutoff))
        dataset = None if opts["grid_only"] else read_quadrature_csv(data_file)
    else:
        dataset = read_quadrature_csv(data_file)
        p_hat = em_reconstruct(dataset, cutoff).p_hat

    grid = wigner_grid(p_hat, opts["extent"], opts["resolution"])
    origin = wigner_origin(p_hat)
    meta = {"rng_seed": opts["seed"]}
    write_wigner_csv(out / "wigner.csv", grid, meta)
    write_wigner_pgm(out / "wigner.pgm", grid, meta)

    if opts["grid_only"] or dataset is None:
        click.echo(f"W(0,0) = {origin:.6f} (grid only, no bootstrap)")
        return
    if opts["replicas"] < MIN_RELIABLE_REPLICAS:
        click.echo(
            f"warning: {opts['replicas']} replicas is below {MIN_RELIABLE_REPLICAS}; "
            "the error bar estimate itself is unreliable",
            err=True,
        )
    boot = bootstrap_negativity(dataset, cutoff, opts["replicas"], opts["seed"])
    write_bootstrap_json(out / "bootstrap.json", boot, meta)
    click.echo(
        f"W(0,0) = {origin:.6f} ± {boot.origin_std:.6f} "
        f"({boot.significance:.2f} sigma)"
    )


@main.command()
@click.option("--quick", is_flag=True, help="Scaled-down run (5e3 segments, 50 replicas, widened tolerances).")
@click.option("--segments", default=50_000, show_default=True, help="Heralded trigger count.")
@click.option("--vacuum-segments", default=10_000, show_default=True, help="Vacuum trigger count.")
@click.option("--samples", default=1000, show_default=True, help="Samples per segment.")
@click.option("--true-p", callback=_parse_weights, default=None, help="Comma-separated generating weights [default: benchmark mixture].")
@click.option("--cutoff", default=5, show_default=True)
@click.option("--replicas", default=400, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
@_cli_errors
def reproduce(ctx, quick, **params):
    """Run the whole chain from one seed and score it against the truth."""
    opts = _resolve(ctx, "reproduce", **params)
    if quick:
        # scale down whatever the user did not set explicitly
        for name, scaled in (("segments", 5_000), ("vacuum_segments", 2_000), ("replicas", 50)):
            if _from_default(ctx, "reproduce", name):
                opts[name] = scaled
    out = _out_dir(ctx)
    config = ReproductionConfig(
        true_p=_true_p(opts["true_p"]),
        heralded_segments=opts["segments"],
        vacuum_segments=opts["vacuum_segments"],
        samples_per_segment=opts["samples"],
        cutoff=opts["cutoff"],
        replicas=opts["replicas"],
        rng_seed=opts["seed"],
        quick=quick,
    )
    report = run_reproduction(config, out)
    for check in report["checks"]:
        mark = "PASS" if check["passed"] else "FAIL"
        detail = f"observed {check['observed']:+.5f}"
        if "target" in check:
            detail += f", target {check['target']:+.5f} ± {check['tolerance']}"
        elif "low" in check:
            detail += f", band [{check['low']}, {check['high']}]"
        else:
            detail += f", minimum {check['minimum']}"
        click.echo(f"[{mark}] {check['name']}: {detail}")
    click.echo(f"report: {out / 'report.json'}")
    if not report["passed"]:
        click.echo("reproduction FAILED", err=True)
        sys.exit(1)
    click.echo("reproduction PASSED")


if __name__ == "__main__":
    main()
