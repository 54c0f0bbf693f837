"""Command-line experiment runner.

Subcommands: list-models, fixed-points, sweep, expansion.  Configurations
are JSON documents (see experiment.ExperimentConfig); outputs are CSV
tables plus matplotlib figures in the chosen directory.  A failed claim
verdict exits nonzero.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .experiment import (ConfigError, ExperimentConfig, default_config,
                         run_expansion, run_fixed_points, run_sweep)
from .models import MODEL_MAKERS, make_model
from . import quantizer  # noqa: F401  (registers the lloyd cards)
from .report import (format_fixed_point_table, plot_expansion, plot_sweep,
                     write_expansion_csv, write_fixed_points_csv,
                     write_sweep_csv)


@click.group()
def main():
    """Constant-step perturbed dynamics laboratory."""


@main.command("list-models")
def cmd_list_models():
    """One line per bundled model card."""
    for name in sorted(MODEL_MAKERS):
        try:
            card = make_model(name)
        except Exception as err:  # pragma: no cover - defensive
            click.echo(f"{name:<20} unavailable: {err}")
            continue
        click.echo(f"{card.name:<20} dim={card.dim:<3d} "
                   f"fixed_points={len(card.known_fixed_points):<3d} "
                   f"{card.provenance}")


def _load_config(path: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.from_json(Path(path).read_text())
    except (OSError, ConfigError, ValueError) as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(2)


@main.command("fixed-points")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="experiment config JSON")
@click.option("--out", "out_dir", default="out", show_default=True,
              help="output directory")
def cmd_fixed_points(config_path, out_dir):
    """Locate, classify, and certify fixed points."""
    cfg = _load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        reports = run_fixed_points(cfg)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    write_fixed_points_csv(reports, out / "fixed_points.csv")
    click.echo(format_fixed_point_table(reports))
    click.echo("note: only the registered and located points are "
               "reported; completeness is not certified")
    click.echo(f"wrote {out / 'fixed_points.csv'}")


@main.command("sweep")
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True), help="experiment config JSON")
@click.option("--out", "out_dir", default="out", show_default=True)
@click.option("--workers", default=1, show_default=True,
              help="concurrent gamma cells")
@click.option("--svg", is_flag=True, help="also render SVG figures")
@click.option("--model", "model_default", default=None,
              help="use the named model's shipped default config")
def cmd_sweep(config_path, out_dir, workers, svg, model_default):
    """Gamma sweep with exclusion-curve verdicts."""
    if model_default is not None:
        try:
            cfg = default_config(model_default)
        except ConfigError as err:
            click.echo(f"config error: {err}", err=True)
            sys.exit(2)
    elif config_path is not None:
        cfg = _load_config(config_path)
    else:
        click.echo("config error: provide --config or --model", err=True)
        sys.exit(2)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = run_sweep(cfg, workers=workers)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    write_sweep_csv(report, out / "sweep.csv")
    (out / "config.json").write_text(cfg.to_json())
    plot_sweep(report, out, svg=svg)
    for claim in report.claims:
        status = "PASS" if claim.passed else "FAIL"
        click.echo(f"[{status}] {claim.name}: {claim.detail}")
    for caveat in report.caveats:
        click.echo(f"caveat: {caveat}")
    click.echo(f"wrote {out / 'sweep.csv'}")
    if not report.passed:
        sys.exit(1)


@main.command("expansion")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="experiment config JSON")
@click.option("--out", "out_dir", default="out", show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--svg", is_flag=True, help="also render SVG figures")
def cmd_expansion(config_path, out_dir, workers, svg):
    """Second-order expansion diagnostics per gamma."""
    cfg = _load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows, report = run_expansion(cfg, workers=workers)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    except ValueError as err:
        click.echo(f"test-function construction failed: {err}", err=True)
        sys.exit(2)
    write_expansion_csv(rows, out / "expansion.csv")
    plot_expansion(rows, out, report.card.name, svg=svg)
    for r in rows:
        click.echo(f"gamma={r.gamma!r} lhs={r.lhs!r} rhs={r.rhs!r} "
                   f"ratio={r.ratio!r} se={r.bootstrap_se!r}")
    click.echo(f"wrote {out / 'expansion.csv'}")


if __name__ == "__main__":
    main()
