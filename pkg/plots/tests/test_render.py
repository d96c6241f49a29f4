import csv
import os
import subprocess
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from linkplots import (FIGURES, EmptyCsvError, FigureSpec, MissingColumnsError,
                       build_series, load_rows, render)

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
RENDER = os.path.join(os.path.dirname(__file__), "..", "render")

GROUP_COLUMN = {"fig2": "h", "fig3": "h", "fig4": "detector",
                "fig5": "discipline", "fig6": "discipline"}


def data_csv(figure):
    return os.path.join(DATA_DIR, f"{figure}.csv")


@pytest.mark.parametrize("figure", FIGURES)
def test_renders_bundled_csv_with_expected_series_counts(figure, tmp_path):
    out = tmp_path / f"{figure}.png"
    render(FigureSpec(csv_path=data_csv(figure), figure=figure, out_path=str(out)))
    assert out.exists() and out.stat().st_size > 0

    with open(data_csv(figure), newline="") as fh:
        rows = list(csv.DictReader(fh))
    distinct = {row[GROUP_COLUMN[figure]] for row in rows}
    series = build_series(figure, rows)
    data_series = [k for k in series if not k.startswith("1/I")]
    assert len(data_series) == len(distinct)
    if figure == "fig2":
        # the asymptote is drawn as one reference curve over s
        assert "1/I" in series
        xs, ys = series["1/I"]
        assert list(xs) == sorted(xs)
        assert np.all(ys > 0)


@pytest.mark.parametrize("figure", FIGURES)
def test_series_are_deterministic(figure):
    rows = load_rows(data_csv(figure), figure)
    first = build_series(figure, rows)
    second = build_series(figure, load_rows(data_csv(figure), figure))
    assert first.keys() == second.keys()
    for key in first:
        np.testing.assert_array_equal(first[key][0], second[key][0])
        np.testing.assert_array_equal(first[key][1], second[key][1])


def test_series_points_sorted_by_x():
    rows = load_rows(data_csv("fig4"), "fig4")
    for xs, _ in build_series("fig4", rows).values():
        assert list(xs) == sorted(xs)


def test_missing_columns_rejected(tmp_path):
    path = tmp_path / "thin.csv"
    path.write_text("scenario_id,detector,discipline,h\na,d,f,1.0\n")
    with pytest.raises(MissingColumnsError, match="add_over_h"):
        load_rows(str(path), "fig2")


def test_empty_csv_writes_no_file(tmp_path):
    src = tmp_path / "empty.csv"
    with open(data_csv("fig4"), newline="") as fh:
        header = fh.readline()
    src.write_text(header)
    out = tmp_path / "out.png"
    with pytest.raises(EmptyCsvError):
        render(FigureSpec(csv_path=str(src), figure="fig4", out_path=str(out)))
    assert not out.exists()


def test_unknown_figure_rejected():
    with pytest.raises(ValueError):
        FigureSpec(csv_path="x.csv", figure="fig7", out_path="y.png")


class TestCommandLine:
    def run(self, *args):
        return subprocess.run([sys.executable, RENDER, *args],
                              capture_output=True, text=True)

    def test_renders_via_script(self, tmp_path):
        out = tmp_path / "fig4.png"
        proc = self.run("--csv", data_csv("fig4"), "--figure", "fig4",
                        "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

    def test_missing_columns_exit_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("scenario_id,detector,discipline\na,d,f\n")
        proc = self.run("--csv", str(bad), "--figure", "fig5",
                        "--out", str(tmp_path / "x.png"))
        assert proc.returncode == 2
        assert "arl2fa" in proc.stderr

    def test_missing_file_exit_2(self, tmp_path):
        proc = self.run("--csv", str(tmp_path / "nope.csv"), "--figure", "fig2",
                        "--out", str(tmp_path / "x.png"))
        assert proc.returncode == 2

    def test_empty_csv_exit_1(self, tmp_path):
        src = tmp_path / "empty.csv"
        with open(data_csv("fig6"), newline="") as fh:
            src.write_text(fh.readline())
        out = tmp_path / "x.png"
        proc = self.run("--csv", str(src), "--figure", "fig6", "--out", str(out))
        assert proc.returncode == 1
        assert not out.exists()
