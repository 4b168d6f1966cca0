"""Bundle CSV schema: one entry per figure, validated before rendering."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pandas as pd


class SchemaError(Exception):
    """CSV columns do not match the bundle schema; message carries the diff."""


class EmptyDataError(Exception):
    """CSV is schema-valid but has no data rows."""


@dataclass(frozen=True)
class FigureSpec:
    fig_id: str  # "F1".."F7"
    filename: str
    columns: tuple[str, ...]
    title: str
    chance_line: bool  # draw the 50% chance reference on accuracy axes


FIGURES: dict[str, FigureSpec] = {
    spec.fig_id: spec
    for spec in [
        FigureSpec(
            "F1", "fig1_so_distributions.csv",
            ("condition", "size_tag", "seed", "accuracy"),
            "Second-order accuracy distributions", chance_line=True,
        ),
        FigureSpec(
            "F2", "fig2_fo_so.csv",
            ("run_id", "condition", "size_tag", "seed", "fo_accuracy", "so_accuracy"),
            "First-order vs second-order dissociation", chance_line=True,
        ),
        FigureSpec(
            "F3", "fig3_swap.csv",
            ("condition", "size_tag", "seed", "item_type", "accuracy"),
            "Feature-swap: frame-cued vs noun-only", chance_line=True,
        ),
        FigureSpec(
            "F4", "fig4_item_types.csv",
            ("condition", "size_tag", "seed", "item_type", "n", "accuracy"),
            "Accuracy by item type", chance_line=False,
        ),
        FigureSpec(
            "F5", "fig5_alpha.csv",
            ("condition", "seed", "mean_alpha"),
            "Ideal-observer concentration gradient", chance_line=False,
        ),
        FigureSpec(
            "F6", "fig6_probe_layers.csv",
            ("condition", "size_tag", "seed", "layer", "accuracy", "baseline", "p_value"),
            "Linear-probe accuracy by layer", chance_line=False,
        ),
        FigureSpec(
            "F7", "fig7_cosine.csv",
            ("run", "layer", "within_trained", "within_novel", "cross"),
            "Noun representation cosines by layer", chance_line=False,
        ),
    ]
}


def load_figure_csv(bundle: Path, spec: FigureSpec) -> pd.DataFrame:
    """Read and validate one figure CSV; raise with an actionable diff."""
    path = Path(bundle) / spec.filename
    if not path.exists():
        raise SchemaError(f"{spec.fig_id}: missing file {path}")
    df = pd.read_csv(path)
    got = tuple(df.columns)
    if got != spec.columns:
        missing = [c for c in spec.columns if c not in got]
        extra = [c for c in got if c not in spec.columns]
        raise SchemaError(
            f"{spec.fig_id}: column mismatch in {spec.filename}\n"
            f"  expected: {list(spec.columns)}\n"
            f"  got:      {list(got)}\n"
            f"  missing:  {missing}\n"
            f"  extra:    {extra}"
        )
    if df.empty:
        raise EmptyDataError(f"{spec.fig_id}: {spec.filename} has no data rows")
    return df
