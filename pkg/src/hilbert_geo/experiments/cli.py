"""``hilbert-geo`` command line interface."""

import sys

import click

from ..errors import ConfigError
from .config import SCENARIOS, build_config, load_config
from .report import format_summary


def _parse_tol(items):
    tols = {}
    for item in items:
        if "=" not in item:
            raise click.BadParameter(f"expected name=value, got {item!r}", param_hint="--tol")
        k, v = item.split("=", 1)
        tols[k.strip()] = v.strip()
    return tols


@click.group()
def main():
    """Geodesics, Jacobi flows and conjugate points on truncated Hilbert manifolds."""


@main.command("list-scenarios")
def list_scenarios():
    """List the available scenarios."""
    from .scenarios import SCENARIO_TABLE

    width = max(map(len, SCENARIOS))
    for name in SCENARIOS:
        click.echo(f"{name:<{width}}  {SCENARIO_TABLE[name].description}")


@main.command()
@click.option("--scenario", type=click.Choice(SCENARIOS), default=None, help="Scenario name.")
@click.option("--dim", default=None, help="Dimension N or an increasing list n1,n2,...")
@click.option("--step", type=float, default=None, help="RK4 step size (default 1e-3).")
@click.option("--t-end", "t_end", type=float, default=None,
              help="Integration horizon (scenario default if omitted).")
@click.option("--seed", type=int, default=None, help="Seed for random inputs (default 42).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output CSV path.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Flat key = value config file; flags override it.")
@click.option("--tol", "tols", multiple=True, help="Tolerance override name=value (repeatable).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes for the dimension sweep.")
@click.option("--quiet", is_flag=True, help="Only print the final pass/fail line.")
def run(scenario, dim, step, t_end, seed, out, config_path, tols, jobs, quiet):
    """Run a scenario and write its CSV report; exit status 1 if any row fails."""
    from .scenarios import run_scenario

    try:
        raw = load_config(config_path) if config_path else {}
        flags = {"scenario": scenario, "dim": dim, "step": step, "t-end": t_end,
                 "seed": seed, "out": out}
        raw.update({k: v for k, v in flags.items() if v is not None})
        if tols:
            raw["tolerances"] = {**raw.get("tolerances", {}), **_parse_tol(tols)}
        if raw.get("out") is None:
            raise ConfigError("no output path: pass --out or set 'out' in the config file")
        cfg = build_config(raw)
        result, code = run_scenario(cfg, jobs=jobs)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    except OSError as exc:
        raise click.ClickException(str(exc)) from None
    if quiet:
        click.echo(result.summary_line())
    else:
        click.echo(format_summary(result), nl=False)
    sys.exit(code)


if __name__ == "__main__":
    main()
