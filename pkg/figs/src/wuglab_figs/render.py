"""Figure renderers. Each returns a matplotlib Figure; saving is separate so
tests can introspect artists (e.g., the 50% chance line) without file I/O."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .schema import FIGURES, FigureSpec, load_figure_csv

CHANCE = 0.5
# Fixed hash salt keeps SVG element ids stable across processes.
matplotlib.rcParams["svg.hashsalt"] = "wuglab-figs"


def _new_fig(title: str, figsize=(7, 4)):
    fig, ax = plt.subplots(figsize=figsize, dpi=150)
    ax.set_title(title)
    return fig, ax


def _chance_line(ax):
    ax.axhline(CHANCE, linestyle="--", linewidth=1, color="0.4", label="chance (50%)")


def _render_f1(df: pd.DataFrame, spec: FigureSpec):
    fig, ax = _new_fig(spec.title)
    conditions = sorted(df["condition"].unique())
    for i, cond in enumerate(conditions):
        vals = df.loc[df["condition"] == cond, "accuracy"]
        jitter = np.linspace(-0.15, 0.15, len(vals))
        ax.plot(i + jitter, vals, "o", alpha=0.7)
    _chance_line(ax)
    ax.set_xticks(range(len(conditions)), conditions, rotation=30, ha="right")
    ax.set_ylabel("SO accuracy")
    ax.set_ylim(0, 1)
    ax.legend(loc="upper right")
    fig.tight_layout()
    return fig


def _render_f2(df: pd.DataFrame, spec: FigureSpec):
    fig, ax = _new_fig(spec.title)
    x = np.arange(len(df))
    ax.bar(x - 0.2, df["fo_accuracy"], width=0.4, label="first-order")
    ax.bar(x + 0.2, df["so_accuracy"], width=0.4, label="second-order")
    _chance_line(ax)
    ax.set_xticks(x, df["run_id"], rotation=30, ha="right")
    ax.set_ylabel("forced-choice accuracy")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="center right")
    fig.tight_layout()
    return fig


def _render_f3(df: pd.DataFrame, spec: FigureSpec):
    fig, ax = _new_fig(spec.title)
    piv = df.pivot_table(
        index=["condition", "size_tag", "seed"], columns="item_type",
        values="accuracy", sort=True,
    )
    x = np.arange(len(piv))
    for off, col in zip((-0.2, 0.2), sorted(piv.columns)):
        ax.bar(x + off, piv[col], width=0.4, label=col)
    _chance_line(ax)
    labels = [f"{c}/{s}/s{seed}" for c, s, seed in piv.index]
    ax.set_xticks(x, labels, rotation=30, ha="right")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="upper right")
    fig.tight_layout()
    return fig


def _render_f4(df: pd.DataFrame, spec: FigureSpec):
    means = df.groupby("item_type")["accuracy"].mean().sort_values()
    fig, ax = _new_fig(spec.title, figsize=(7, 5))
    ax.barh(means.index, means.values)
    ax.set_xlabel("mean accuracy across runs")
    ax.set_xlim(0, 1)
    fig.tight_layout()
    return fig


def _render_f5(df: pd.DataFrame, spec: FigureSpec):
    means = df.groupby("condition")["mean_alpha"].mean().sort_values()
    fig, ax = _new_fig(spec.title)
    ax.bar(means.index, means.values)
    ax.set_yscale("log")
    ax.set_ylabel("posterior-mean concentration (alpha)")
    ax.set_xticks(range(len(means)), means.index, rotation=30, ha="right")
    fig.tight_layout()
    return fig


def _render_f6(df: pd.DataFrame, spec: FigureSpec):
    fig, ax = _new_fig(spec.title)
    for (cond, size, seed), grp in df.groupby(["condition", "size_tag", "seed"]):
        grp = grp.sort_values("layer")
        ax.plot(grp["layer"], grp["accuracy"], marker="o",
                label=f"{cond}/{size}/s{seed}")
    ax.set_xlabel("layer")
    ax.set_ylabel("probe accuracy")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    return fig


def _render_f7(df: pd.DataFrame, spec: FigureSpec):
    fig, ax = _new_fig(spec.title)
    styles = {"within_trained": "-", "within_novel": "--", "cross": ":"}
    for run, grp in df.groupby("run"):
        grp = grp.sort_values("layer")
        for col, ls in styles.items():
            ax.plot(grp["layer"], grp[col], ls, marker=".",
                    label=f"{run} {col.replace('_', '-')}")
    ax.set_xlabel("layer")
    ax.set_ylabel("mean pairwise cosine")
    ax.set_ylim(-1, 1.05)
    ax.legend(fontsize=6, ncols=2, loc="lower left")
    fig.tight_layout()
    return fig


_RENDERERS = {
    "F1": _render_f1, "F2": _render_f2, "F3": _render_f3, "F4": _render_f4,
    "F5": _render_f5, "F6": _render_f6, "F7": _render_f7,
}


def render_figure(bundle: Path, fig_id: str):
    """Validate + render one figure; returns the Figure (not yet saved)."""
    spec = FIGURES[fig_id]
    df = load_figure_csv(bundle, spec)
    return _RENDERERS[fig_id](df, spec)


def render_placard(fig_id: str, message: str):
    """A visible stand-in image for a schema-valid but empty CSV."""
    fig, ax = _new_fig(f"{FIGURES[fig_id].title} — no data")
    ax.text(0.5, 0.5, message, ha="center", va="center", wrap=True)
    ax.set_axis_off()
    return fig


def save_figure(fig, out_dir: Path, fig_id: str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ext in ("svg", "png"):
        path = out_dir / f"{fig_id.lower()}.{ext}"
        # Date=None strips the timestamp so re-renders are byte-identical.
        fig.savefig(path, format=ext, metadata={"Date": None} if ext == "svg" else None)
        paths.append(path)
    plt.close(fig)
    return paths
