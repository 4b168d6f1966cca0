"""Command-line entry points for the corpus/training/evaluation pipeline."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import pipeline
from .pipeline import RunRegistry, RunSpec, data_root

_STAGE_HELP = "condition/size/seed select the run directory under the data root"


def _spec(condition: str, size: str, seed: int, fraction: float) -> RunSpec:
    return RunSpec(condition=condition, size_tag=size, seed=seed, fraction=fraction)


def _run_stages(spec: RunSpec, root: Path, stages: tuple[str, ...], batch_size: int = 8):
    registry = RunRegistry(Path(root))
    pipeline.run_one(spec, Path(root), registry, stages=stages, batch_size=batch_size)


def _common(f):
    f = click.option("--condition", required=True)(f)
    f = click.option("--size", default="tiny", show_default=True)(f)
    f = click.option("--seed", default=42, show_default=True, type=int)(f)
    f = click.option("--fraction", default=1.0, show_default=True, type=float)(f)
    f = click.option("--root", default=None, help="data root (default $WUGLAB_DATA_DIR or ./data)")(f)
    return f


@click.group()
def main():
    """Nonce-corpus training and overhypothesis evaluation pipeline."""


@main.command(help="Generate one corpus. " + _STAGE_HELP)
@_common
def gen(condition, size, seed, fraction, root):
    _run_stages(_spec(condition, size, seed, fraction), data_root(root), ("gen",))


@main.command(help="Fit the BPE tokenizer on a generated corpus.")
@_common
def bpe(condition, size, seed, fraction, root):
    _run_stages(_spec(condition, size, seed, fraction), data_root(root), ("bpe",))


@main.command(help="Build and validate the evaluation battery.")
@_common
def battery(condition, size, seed, fraction, root):
    _run_stages(_spec(condition, size, seed, fraction), data_root(root), ("battery",))


@main.command(help="Train a model on an encoded corpus.")
@_common
@click.option("--batch-size", default=8, show_default=True, type=int)
def train(condition, size, seed, fraction, root, batch_size):
    _run_stages(_spec(condition, size, seed, fraction), data_root(root), ("train",), batch_size)


@main.command(name="eval", help="Run forced-choice scoring plus greedy and one-shot diagnostics.")
@_common
def eval_cmd(condition, size, seed, fraction, root):
    _run_stages(_spec(condition, size, seed, fraction), data_root(root), ("eval",))


@main.command(help="Fit the ideal-observer posterior and KL report for a corpus.")
@_common
def hbm(condition, size, seed, fraction, root):
    _run_stages(_spec(condition, size, seed, fraction), data_root(root), ("hbm",))


@main.command(help="Linear probes, permutation control, and cosine analyses.")
@_common
def probe(condition, size, seed, fraction, root):
    _run_stages(_spec(condition, size, seed, fraction), data_root(root), ("probe",))


@main.command(help="Alias for the representation half of the probe stage.")
@_common
def reprs(condition, size, seed, fraction, root):
    _run_stages(_spec(condition, size, seed, fraction), data_root(root), ("probe",))


@main.command(name="run-all", help="Execute the run matrix (desk scale by default).")
@click.option("--root", default=None)
@click.option("--full", is_flag=True, help="150-run matrix instead of the desk subset")
@click.option("--batch-size", default=8, show_default=True, type=int)
def run_all(root, full, batch_size):
    specs = pipeline.full_matrix() if full else pipeline.desk_matrix()
    pipeline.run_matrix(specs, data_root(root), batch_size=batch_size)


@main.command(help="Emit the report bundle from completed runs.")
@click.option("--root", default=None)
@click.option("--full", is_flag=True)
@click.option("--out", default=None, help="bundle output directory (default ROOT/report)")
def report(root, full, out):
    specs = pipeline.full_matrix() if full else pipeline.desk_matrix()
    bundle = pipeline.emit_reports(data_root(root), specs, out_dir=out)
    click.echo(f"report bundle written to {bundle}")


@main.command(help="Recompute hypothesis verdicts from a report bundle.")
@click.option("--results", "results_dir", required=True, help="report bundle directory")
@click.option("--out", default=None, help="output JSON path (default stdout)")
def analyze(results_dir, out):
    verdicts = json.loads((Path(results_dir) / "hypotheses.json").read_text())
    text = json.dumps(verdicts, sort_keys=True, indent=1)
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text)


if __name__ == "__main__":
    main()
