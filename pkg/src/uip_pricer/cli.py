"""Command-line client for the pricing service.

The CLI parses a config file (or a shipped preset), builds the same request
the HTTP API takes and executes it either in-process (default) or against a
remote server (``--server URL``); artifacts land in the output directory
either way.  Exit codes: 0 success, 1 config error, 2 numerical failure,
3 verification failure.
"""

import pathlib
import sys

import click

from . import __version__
from .errors import ConfigError, PricingError, VerificationFailure
from .experiments import PRESET_NAMES, load_preset, parse_config_text

EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3


def _load_sections(config, preset, grid, seed):
    if (config is None) == (preset is None):
        raise ConfigError("provide exactly one of --config PATH or --preset NAME")
    text = load_preset(preset) if preset else pathlib.Path(config).read_text()
    sections = parse_config_text(text)
    if grid:
        try:
            n_x, n_z, n_t = (int(tok) for tok in grid.lower().split("x"))
        except ValueError:
            raise ConfigError(f"--grid must look like 200x100x640, got '{grid}'") from None
        sections["solver"].update({"n_x": n_x, "n_z": n_z, "n_t": n_t})
    if seed is not None:
        sections["run"]["seed"] = seed
    return sections


def _execute(command, sections, server):
    if server:
        import httpx

        from .service.schemas import ExperimentRequest, RunResponse
        request = ExperimentRequest.from_sections(sections)
        resp = httpx.post(f"{server.rstrip('/')}/v1/{command}",
                          json=request.model_dump(), timeout=3600.0)
        if resp.status_code == 400:
            raise ConfigError(resp.json().get("detail", resp.text))
        if resp.status_code == 422:
            raise PricingError(resp.json().get("detail", resp.text))
        resp.raise_for_status()
        return RunResponse(**resp.json())
    from .service.app import execute
    return execute(command, sections)


def _write_artifacts(response, out):
    out_dir = pathlib.Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for artifact in response.artifacts:
        (out_dir / artifact.name).write_text(artifact.content)
    return out_dir


def _report(response, out_dir):
    click.echo(f"config_hash={response.config_hash} version={response.version}")
    click.echo(f"wall_time_s={response.wall_time_s:.2f}")
    summary = response.summary
    for entry in summary.get("runs", []):
        probe = entry.get("probe")
        label = f"{entry['param']}={entry['value']:g}" if entry.get("param") else "run"
        if probe:
            click.echo(f"  {label}: value({probe['t']:g}, {probe['x']:g}, {probe['z']:g}) "
                       f"= {probe['value']:.6f}")
        click.echo(f"  {label}: grid={entry['grid']} dt={entry['dt']:.3e} "
                   f"cfl_dt={entry['cfl_dt']:.3e}")
    for check in summary.get("checks", []):
        status = "PASS" if check.get("passed") else "FAIL"
        click.echo(f"  [{status}] {check['kind']}: value={check['value']:.6f}")
    click.echo(f"artifacts -> {out_dir}")


def _common(fn):
    fn = click.option("--config", type=click.Path(exists=True, dir_okay=False),
                      help="Experiment config file.")(fn)
    fn = click.option("--preset", type=click.Choice(PRESET_NAMES),
                      help="Shipped experiment preset.")(fn)
    fn = click.option("--out", default="out", show_default=True,
                      help="Output directory for artifacts.")(fn)
    fn = click.option("--grid", default=None, metavar="IxJxN",
                      help="Override n_x, n_z, n_t.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the run seed.")(fn)
    fn = click.option("--server", default=None, metavar="URL",
                      help="Run against a remote service instead of in-process.")(fn)
    return fn


def _command(command, config, preset, out, grid, seed, server):
    try:
        sections = _load_sections(config, preset, grid, seed)
        response = _execute(command, sections, server)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except VerificationFailure as exc:
        click.echo(f"verification failure: {exc}", err=True)
        sys.exit(EXIT_VERIFICATION)
    except PricingError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    out_dir = _write_artifacts(response, out)
    _report(response, out_dir)
    if command == "verify" and not response.ok:
        click.echo("verification failed (see verify_report.json)", err=True)
        sys.exit(EXIT_VERIFICATION)


@click.group()
@click.version_option(__version__)
def main():
    """Utility-indifference pricing engine for energy structured contracts."""


@main.command()
@_common
def price(config, preset, out, grid, seed, server):
    """Solve the indifference-price PDE and export surfaces + probe report."""
    _command("price", config, preset, out, grid, seed, server)


@main.command("compare-classical")
@_common
def compare_classical(config, preset, out, grid, seed, server):
    """Indifference vs risk-neutral price on the same grid."""
    _command("compare-classical", config, preset, out, grid, seed, server)


@main.command()
@_common
def strategy(config, preset, out, grid, seed, server):
    """Exercise policy, switching boundary and hedge fields."""
    _command("strategy", config, preset, out, grid, seed, server)


@main.command()
@_common
def verify(config, preset, out, grid, seed, server):
    """Run the DP / Monte-Carlo oracles against the PDE result."""
    _command("verify", config, preset, out, grid, seed, server)


@main.command()
@_common
def audit(config, preset, out, grid, seed, server):
    """Sample-based audit of the model's standing assumptions."""
    _command("audit", config, preset, out, grid, seed, server)


@main.command()
def presets():
    """List shipped experiment presets."""
    for name in PRESET_NAMES:
        click.echo(name)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Start the pricing service."""
    import uvicorn

    uvicorn.run("uip_pricer.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
