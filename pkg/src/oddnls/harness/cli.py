"""Command line entry point `oddnls`.

Exit codes: 0 all checks pass, 2 a property check failed, 3 a required
verdict came out Undecided, 4 configuration or usage error.
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import click

from .config import ConfigError, Experiment, load_config
from .experiments import KSign
from .io import write_outputs
from .runner import (
    EXIT_CONFIG_ERROR,
    RUNNERS,
    RunOutcome,
    run_dichotomy_experiment,
    thread_count,
    run_verify_all,
)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML config file.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Seed for randomized suites (overrides config).")
@click.option("--quiet", is_flag=True, help="Suppress the summary printout.")
@click.pass_context
def cli(ctx, config_path, out_dir, seed, quiet):
    """Numerical laboratory for odd solutions of the focusing supercritical 1D NLS."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, out_dir=out_dir, seed=seed, quiet=quiet)


def _prepare(ctx, experiment: Experiment):
    o = ctx.obj
    try:
        thread_count()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = load_config(o["config_path"], experiment.value if o["config_path"] is None else None)
    cfg = replace(cfg, experiment=experiment)
    if o["seed"] is not None:
        if o["seed"] < 0:
            raise ConfigError("seed: must be >= 0")
        cfg = replace(cfg, seed=o["seed"])
    out_dir = Path(o["out_dir"] or cfg.output_dir)
    return cfg, out_dir


def _finish(ctx, cfg, outcome: RunOutcome, out_dir) -> int:
    write_outputs(cfg, outcome, out_dir)
    if not ctx.obj["quiet"]:
        status = {0: "PASS", 2: "FAIL", 3: "UNDECIDED"}.get(outcome.status, str(outcome.status))
        click.echo(f"{outcome.experiment}: {status}")
        for k, v in outcome.checks.items():
            click.echo(f"  {k}: {'pass' if v else 'FAIL'}")
        click.echo(f"outputs written to {out_dir}")
    return outcome.status


@cli.command()
@click.option("--k-sign", type=click.Choice(["positive", "negative"]), default=None)
@click.option("--y", type=float, default=None, help="Half-separation of the soliton pair.")
@click.option("--t-max", type=float, default=None)
@click.option("--amplitude-scale", type=float, default=None, help="Scale the threshold data (below 1: sub-threshold).")
@click.option("--dump-fields", is_flag=True, help="Write the initial field as a binary dump.")
@click.pass_context
def dichotomy(ctx, k_sign, y, t_max, amplitude_scale, dump_fields):
    """Evolve threshold data and classify it as Scattered or BlewUp."""
    cfg, out = _prepare(ctx, Experiment.DICHOTOMY)
    spec = cfg.data_spec
    if k_sign is not None:
        sign = KSign(k_sign)
        nu0 = spec.nu0
        if (sign is KSign.NEGATIVE) != (nu0 > 1.0):
            nu0 = 2.0 - nu0
        spec = replace(spec, k_sign_target=sign, nu0=nu0)
    try:
        if y is not None:
            spec = replace(spec, y=y)
        if amplitude_scale is not None:
            spec = replace(spec, amplitude_scale=amplitude_scale)
        ev = replace(cfg.evolve, t_max=t_max) if t_max is not None else cfg.evolve
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = replace(cfg, data_spec=spec, evolve=ev)
    out.mkdir(parents=True, exist_ok=True)
    return _finish(ctx, cfg, run_dichotomy_experiment(cfg, out, dump_fields), out)


def _simple(name: str, experiment: Experiment, doc: str):
    @click.pass_context
    def cmd(ctx):
        cfg, out = _prepare(ctx, experiment)
        return _finish(ctx, cfg, RUNNERS[experiment](cfg), out)

    cmd.__doc__ = doc
    cli.command(name=name)(cmd)


_simple("min-seq", Experiment.MINIMIZING_SEQUENCE, "Tabulate the rescaled two-soliton minimizing sequence.")
_simple("overlap-asymptotics", Experiment.OVERLAP_ASYMPTOTICS, "Fit exponential rates of soliton overlap integrals.")
_simple("coercivity", Experiment.COERCIVITY, "Constrained minima of the linearized quadratic form.")
_simple("modulation-audit", Experiment.MODULATION_AUDIT, "Planted recovery and parameter estimates of the modulation fit.")
_simple("virial-audit", Experiment.VIRIAL_AUDIT, "Full and localized virial identities along a trajectory.")
_simple("blowup-ineq", Experiment.BLOWUP_INEQUALITY, "Randomized check of the blow-up discriminant inequality.")


@cli.command("verify-all")
@click.option("--skip-dynamics", is_flag=True, help="Skip the two long dichotomy runs.")
@click.pass_context
def verify_all(ctx, skip_dynamics):
    """Run every verification suite."""
    cfg, out = _prepare(ctx, Experiment.VERIFY_ALL)
    return _finish(ctx, cfg, run_verify_all(cfg, include_dynamics=not skip_dynamics), out)


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="oddnls", standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG_ERROR
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG_ERROR
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG_ERROR
    if isinstance(rv, int):
        return rv
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
