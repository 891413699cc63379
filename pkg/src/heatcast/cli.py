"""``heatcast`` command-line interface.

Every subcommand runs the pipeline up to its own stage, reusing checkpoints
from earlier invocations with the same configuration.
"""

from __future__ import annotations

import logging
import sys

import click

from .config import load_config
from .errors import ConfigError, HeatcastError
from .pipeline import Pipeline

_STAGE_OF = {
    "generate": "data",
    "tune": "tune",
    "forecast": "forecast",
    "combine": "combine",
    "evaluate": "evaluate",
    "detect": "detect",
    "report": "report",
    "run-all": "report",
}


def _common(f):
    f = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config key (repeatable).")(f)
    f = click.option("--out", "output_dir", default=None, help="Output directory (overrides output_dir).")(f)
    f = click.option("-c", "--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Config file (key = value lines).")(f)
    return f


def _run(stage: str, config_path, output_dir, overrides) -> None:
    try:
        config = load_config(config_path, overrides)
        pipe = Pipeline(config, output_dir)
        pipe.run(stage)
    except HeatcastError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    click.echo(f"{stage}: done -> {pipe.out} (config_hash={config.config_hash})")


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
def main(verbose: int) -> None:
    """Probabilistic day-ahead heat-load forecasting and anomaly detection."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _make(name: str, help_text: str):
    @main.command(name=name, help=help_text)
    @_common
    def cmd(config_path, output_dir, overrides):
        _run(_STAGE_OF[name], config_path, output_dir, overrides)

    return cmd


_make("generate", "Produce (or load) the input series; synthetic data is written to data/.")
_make("tune", "Grid-search each ensemble member's hyperparameter on the validation year.")
_make("forecast", "Rolling day-ahead member forecasts and the ensemble table.")
_make("combine", "Fit the probabilistic combiners day by day over the test span.")
_make("evaluate", "Point, CRPS and PIT tables.")
_make("detect", "Repeated anomaly-injection experiment and ROC tables.")
_make("report", "Metrics report JSON and manifest.")
_make("run-all", "Every stage end to end.")


@main.command("show-config")
@_common
def show_config(config_path, output_dir, overrides):
    """Print the fully resolved configuration."""
    try:
        config = load_config(config_path, overrides)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    click.echo(f"# {config.header()}")
    click.echo(config.to_text(), nl=False)


if __name__ == "__main__":
    main()
