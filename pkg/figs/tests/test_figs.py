import shutil
from importlib import resources
from pathlib import Path

import pytest
from click.testing import CliRunner

from wuglab_figs import FIGURES, SchemaError, load_figure_csv, render_figure
from wuglab_figs.cli import main
from wuglab_figs.render import save_figure

SAMPLE = Path(str(resources.files("wuglab_figs") / "sample_bundle"))


@pytest.fixture
def bundle(tmp_path):
    dst = tmp_path / "bundle"
    shutil.copytree(SAMPLE, dst)
    return dst


def test_cli_renders_all_figures(bundle, tmp_path):
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["--bundle", str(bundle), "--out", str(out)])
    assert result.exit_code == 0, result.output
    for fig_id in FIGURES:
        assert (out / f"{fig_id.lower()}.svg").exists()
        assert (out / f"{fig_id.lower()}.png").exists()


def test_only_selection(bundle, tmp_path):
    out = tmp_path / "out"
    result = CliRunner().invoke(
        main, ["--bundle", str(bundle), "--out", str(out), "--only", "F1,F5"]
    )
    assert result.exit_code == 0
    assert (out / "f1.svg").exists() and (out / "f5.svg").exists()
    assert not (out / "f2.svg").exists()


def test_unknown_figure_id_rejected(bundle, tmp_path):
    result = CliRunner().invoke(
        main, ["--bundle", str(bundle), "--out", str(tmp_path), "--only", "F9"]
    )
    assert result.exit_code != 0
    assert "F9" in result.output


@pytest.mark.parametrize("fig_id", ["F1", "F2", "F3"])
def test_chance_line_on_accuracy_figures(bundle, fig_id):
    fig = render_figure(bundle, fig_id)
    ax = fig.axes[0]
    chance_lines = [
        ln for ln in ax.lines if len(set(ln.get_ydata())) == 1 and ln.get_ydata()[0] == 0.5
    ]
    assert chance_lines, f"{fig_id} missing the 50% chance line"


def test_schema_violation_exits_nonzero_with_diff(bundle, tmp_path):
    csv = bundle / "fig1_so_distributions.csv"
    text = csv.read_text().replace("accuracy", "acc")
    csv.write_text(text)
    result = CliRunner().invoke(
        main, ["--bundle", str(bundle), "--out", str(tmp_path / "o"), "--only", "F1"]
    )
    assert result.exit_code == 2
    assert "missing" in result.output and "accuracy" in result.output
    assert "extra" in result.output and "acc" in result.output


def test_missing_file_is_schema_error(bundle):
    (bundle / "fig7_cosine.csv").unlink()
    with pytest.raises(SchemaError):
        load_figure_csv(bundle, FIGURES["F7"])


def test_empty_csv_placard_and_nonzero_exit(bundle, tmp_path):
    csv = bundle / "fig2_fo_so.csv"
    csv.write_text(csv.read_text().splitlines()[0] + "\n")  # header only
    out = tmp_path / "o"
    result = CliRunner().invoke(
        main, ["--bundle", str(bundle), "--out", str(out), "--only", "F2"]
    )
    assert result.exit_code == 3
    assert "no data" in result.output
    assert (out / "f2.svg").exists()  # placard still emitted


def test_render_is_deterministic(bundle, tmp_path):
    a = save_figure(render_figure(bundle, "F5"), tmp_path / "a", "F5")
    b = save_figure(render_figure(bundle, "F5"), tmp_path / "b", "F5")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_render_does_not_mutate_inputs(bundle, tmp_path):
    before = {p.name: p.read_bytes() for p in bundle.iterdir()}
    CliRunner().invoke(main, ["--bundle", str(bundle), "--out", str(tmp_path / "o")])
    after = {p.name: p.read_bytes() for p in bundle.iterdir()}
    assert before == after
