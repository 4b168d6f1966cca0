"""Render figure analogs from a wuglab report bundle.

Input is the bundle's seven figure-data CSVs; nothing else of the pipeline
is imported. Rendering is deterministic: identical CSVs produce identical
SVG and PNG bytes.
"""

from .schema import FIGURES, SchemaError, EmptyDataError, load_figure_csv
from .render import render_figure, render_placard

__all__ = [
    "FIGURES",
    "SchemaError",
    "EmptyDataError",
    "load_figure_csv",
    "render_figure",
    "render_placard",
]
