# main.py
from __future__ import annotations

import logging
import os
import sys

# ─────────────────────────── globals ────────────────────────────
_WORKERS = os.environ.get("DGHYPER_WORKERS")
if _WORKERS:                                       # must precede the numpy import
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _WORKERS)

import click

from app import apply_overrides, convergence_config, run_config
from config import dump_config, load_config
from errors import DGHyperError
from presets import PRESETS, preset, preset_names
from utils import format_table


def _config(source: str):
    """Preset name, YAML file or YAML text."""
    return preset(source) if source in PRESETS else load_config(source)


def _ints(text: str) -> list[int]:
    try:
        return [int(s) for s in text.replace(",", " ").split()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}") from None


def _fail(exc: Exception) -> None:
    click.echo(click.style(f"✗ {exc}", fg="red"), err=True)
    sys.exit(1)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log Newton iterations and solver details.")
def cli(verbose: bool) -> None:
    """BR2 discontinuous Galerkin solver for finite-strain hyperelasticity."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s", datefmt="%H:%M:%S")


@cli.command()
@click.argument("source")
@click.option("--mesh", type=click.Path(exists=True, dir_okay=False), help="Mesh file replacing the generator.")
@click.option("--increments", type=int, help="Number of load increments N.")
@click.option("--newton-tol", type=float, help="Relative residual reduction per increment.")
@click.option("--newton-atol", type=float, help="Absolute residual norm accepted as converged.")
@click.option("--newton-max-iter", type=int, help="Newton iterations per increment.")
@click.option("--linear-solver", type=click.Choice(["direct", "krylov"]))
@click.option("--split-on-failure", is_flag=True, default=None, help="Bisect increments that fail.")
@click.option("--beta", type=float)
@click.option("--epsilon", type=float)
@click.option("--eta-lbb", type=float)
@click.option("--eta-lambda", type=float)
@click.option("--quad-degree", type=int, help="Quadrature degree (default 2k+2).")
@click.option("--output", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--smoke", is_flag=True, help="Solve the first increment only.")
def solve(source: str, smoke: bool, **overrides) -> None:
    """Run a configuration file or a preset."""
    overrides["split_on_failure"] = overrides["split_on_failure"] or None
    try:
        cfg = apply_overrides(_config(source), **overrides)
        result = run_config(cfg, smoke=smoke)
    except DGHyperError as exc:
        _fail(exc)
    if result.convergence:
        for k, rows in result.convergence.items():
            click.echo(f"\nk = {k}")
            click.echo(_convergence_table(rows))
    else:
        style = "green" if result.converged else "yellow"
        click.echo(click.style(("✓ " if result.converged else "⚠️  ") + result.report.summary(), fg=style))
    click.echo(f"Wrote {len(result.files)} files to {result.directory}")


def _convergence_table(rows) -> str:
    return format_table(
        ["cells", "h", "|u-uh|", "rate", "|grad(u-uh)|", "rate", "|p-ph|", "rate"],
        [[r.cards, r.h, r.error_u, r.rate_u, r.error_gradu, r.rate_gradu, r.error_p, r.rate_p]
         for r in rows])


@cli.command()
@click.argument("family", type=click.Choice(["nhk-c", "svk-c", "nhk-i", "svk-i"], case_sensitive=False))
@click.option("--levels", default="4,8,16", show_default=True, help="Cells per axis on each level.")
@click.option("--degrees", default="1", show_default=True, help="Polynomial degrees k.")
@click.option("--dirichlet", type=click.Choice(["nitsche", "lagrange"]), default="nitsche", show_default=True)
@click.option("--dim", type=click.Choice(["2", "3"]), default="3", show_default=True)
@click.option("--increments", type=int, help="Load increments per level; default follows the mesh-size schedule.")
@click.option("--output", type=click.Path(file_okay=False), help="Output directory.")
def convergence(family: str, levels: str, degrees: str, dirichlet: str, dim: str,
                increments: int | None, output: str | None) -> None:
    """Manufactured-solution convergence study."""
    try:
        cfg = convergence_config(family, _ints(levels), _ints(degrees), dirichlet=dirichlet,
                                 dim=int(dim), increments=increments)
        cfg = apply_overrides(cfg, output=output)
        result = run_config(cfg)
    except DGHyperError as exc:
        _fail(exc)
    for k, rows in result.convergence.items():
        click.echo(f"\n{family.upper()}, k = {k}")
        click.echo(_convergence_table(rows))
    click.echo(click.style(f"✓ CSV tables in {result.directory}", fg="green"))


@cli.group(name="preset")
def preset_group() -> None:
    """Benchmark presets."""


@preset_group.command(name="list")
def preset_list() -> None:
    for name in preset_names():
        click.echo(f"{name:28s} {preset(name).description}")


@preset_group.command(name="show")
@click.argument("name")
def preset_show(name: str) -> None:
    """Print a preset as YAML (usable as a config file)."""
    try:
        click.echo(dump_config(preset(name)), nl=False)
    except DGHyperError as exc:
        _fail(exc)


if __name__ == "__main__":
    cli()
