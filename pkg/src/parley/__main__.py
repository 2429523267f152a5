"""Command-line interface."""
import functools
import logging
import pathlib
import typing as t

import click

from .config import load_matrix
from .core import SWEEP_KINDS, aggregate_runs, run_matrix, run_sweep, summaries_dir
from .report import write_report
from .schema import read_runs, validate_run_record

CONFIG_ERROR = 2
PARTIAL_FAILURE = 3


class ConfigError(click.ClickException):
    """Invalid configuration or run store."""

    exit_code = CONFIG_ERROR


def config_errors(f: t.Callable) -> t.Callable:
    """Report `ValueError` as a configuration error."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    return wrapper


config_option = click.option(
    "--config",
    "-c",
    "config_path",
    help="Matrix configuration file.",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
)

workers_option = click.option(
    "--workers",
    "-w",
    help="Number of concurrent episodes (default: from the configuration).",
    default=None,
    type=click.IntRange(min=1),
)


@click.group()
@click.option(
    "--log-level",
    help="Logging level.",
    default="WARNING",
    show_default=True,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]),
)
@click.version_option(package_name="parley")
def main(log_level: str) -> None:
    """Parley command-line interface."""
    logging.basicConfig(
        level=log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


@main.command()
@config_option
@workers_option
@click.option(
    "--resume/--no-resume",
    help="Skip runs already stored.",
    default=True,
    show_default=True,
)
@config_errors
def run(config_path: pathlib.Path, workers: t.Optional[int], resume: bool) -> None:
    """Execute a run matrix."""
    config = load_matrix(config_path)
    tally = run_matrix(config, workers=workers, resume=resume)
    click.echo(
        f"{tally.written} runs written, {tally.skipped} skipped, "
        f"{len(tally.failed)} failed"
    )
    for run_id in tally.failed:
        click.echo(f"failed: {run_id}", err=True)
    if not tally.ok:
        raise SystemExit(PARTIAL_FAILURE)


@main.command()
@config_option
@click.option(
    "--error-excluded",
    help="Drop runs with any provider-error or format-error turn.",
    is_flag=True,
)
@config_errors
def aggregate(config_path: pathlib.Path, error_excluded: bool) -> None:
    """Summarize a run store."""
    config = load_matrix(config_path)
    result = aggregate_runs(config, error_excluded=error_excluded)
    click.echo(
        f"{len(result.summaries)} cells summarized, "
        f"{len(result.contrasts)} contrasts"
    )


@main.command()
@config_option
@click.option(
    "--error-excluded",
    help="Report the error-excluded summaries.",
    is_flag=True,
)
@config_errors
def report(config_path: pathlib.Path, error_excluded: bool) -> None:
    """Render report tables and charts from the summaries."""
    config = load_matrix(config_path)
    report_dir = config.report_dir
    if error_excluded:
        report_dir = report_dir / "error_excluded"
    written = write_report(summaries_dir(config, error_excluded), report_dir)
    if not written:
        click.echo("nothing to report")
        return
    for path in written:
        click.echo(str(path))


@main.command()
@click.argument("kind", type=click.Choice(SWEEP_KINDS))
@config_option
@click.option(
    "--values",
    "-v",
    help="Comma-separated parameter grid (default depends on the sweep kind).",
    default=None,
)
@workers_option
@config_errors
def sweep(
    kind: str,
    config_path: pathlib.Path,
    values: t.Optional[str],
    workers: t.Optional[int],
) -> None:
    """Run a robustness sweep."""
    config = load_matrix(config_path)
    grid = [float(v) for v in values.split(",")] if values else None
    table = run_sweep(kind, config, values=grid, workers=workers)
    if kind == "min_turn_rule":
        changed = int(table["changed"].sum()) if len(table) else 0
        click.echo(f"{len(table)} runs re-classified, {changed} outcome changes")
    else:
        click.echo(f"{len(table)} cells swept")
    failed = table.attrs.get("failed", [])
    for run_id in failed:
        click.echo(f"failed: {run_id}", err=True)
    if failed:
        raise SystemExit(PARTIAL_FAILURE)


@main.command()
@click.argument(
    "paths",
    nargs=-1,
    required=True,
    type=click.Path(exists=True, path_type=pathlib.Path),
)
@config_errors
def validate(paths: t.Tuple[pathlib.Path, ...]) -> None:
    """Check run files (or directories of run files) against the record
    invariants."""
    files = []
    for path in paths:
        files.extend(sorted(path.glob("*.jsonl")) if path.is_dir() else [path])
    n_records = n_violations = 0
    for path in files:
        for record in read_runs(path, check_version=False):
            n_records += 1
            for violation in validate_run_record(record):
                n_violations += 1
                click.echo(f"{path}: {record.run_id}: {violation}")
    click.echo(f"{n_records} runs checked, {n_violations} violations")
    if n_violations:
        raise SystemExit(PARTIAL_FAILURE)


if __name__ == "__main__":
    main(prog_name="parley")  # pragma: no cover
