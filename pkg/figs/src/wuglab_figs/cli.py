"""CLI: wuglab-figs --bundle DIR --out DIR [--only F1..F7]"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .render import render_figure, render_placard, save_figure
from .schema import FIGURES, EmptyDataError, SchemaError


def _parse_only(values: tuple[str, ...]) -> list[str]:
    ids = [v.strip().upper() for chunk in values for v in chunk.split(",") if v.strip()]
    unknown = [i for i in ids if i not in FIGURES]
    if unknown:
        raise click.BadParameter(
            f"unknown figure id(s) {unknown}; valid: {sorted(FIGURES)}"
        )
    return ids or sorted(FIGURES)


@click.command()
@click.option("--bundle", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--only", multiple=True,
              help="Figure ids to render (repeatable or comma-separated), e.g. --only F1,F5")
def main(bundle: Path, out: Path, only: tuple[str, ...]) -> None:
    """Render figure analogs from a report bundle's CSVs into OUT."""
    fig_ids = _parse_only(only)
    exit_code = 0
    for fig_id in fig_ids:
        try:
            fig = render_figure(bundle, fig_id)
        except SchemaError as err:
            click.echo(f"schema error: {err}", err=True)
            exit_code = 2
            continue
        except EmptyDataError as err:
            click.echo(f"no data: {err}", err=True)
            save_figure(render_placard(fig_id, str(err)), out, fig_id)
            exit_code = exit_code or 3
            continue
        paths = save_figure(fig, out, fig_id)
        click.echo(f"{fig_id}: " + ", ".join(str(p) for p in paths))
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
