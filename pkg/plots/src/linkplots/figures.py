"""Figure definitions over the detection harness CSV.

Each figure is a pure function of the CSV rows: ``load_rows`` parses and
validates, ``build_series`` groups the rows into labelled (x, y) arrays, and
``render`` draws them. Nothing here simulates; the CSV is the only input.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6")

# columns every figure needs, plus figure-specific ones
_BASE_COLUMNS = ("scenario_id", "detector", "discipline")
_REQUIRED = {
    "fig2": _BASE_COLUMNS + ("s", "h", "add_over_h", "inv_I"),
    "fig3": _BASE_COLUMNS + ("s", "h", "add_mean"),
    "fig4": _BASE_COLUMNS + ("arl2fa", "add_mean"),
    "fig5": _BASE_COLUMNS + ("arl2fa", "add_mean"),
    "fig6": _BASE_COLUMNS + ("arl2fa", "add_mean"),
}


class MissingColumnsError(ValueError):
    """The CSV lacks columns the chosen figure needs."""


class EmptyCsvError(ValueError):
    """The CSV has a header but no data rows."""


@dataclass(frozen=True)
class FigureSpec:
    csv_path: str
    figure: str
    out_path: str

    def __post_init__(self):
        if self.figure not in FIGURES:
            raise ValueError(f"unknown figure {self.figure!r}; expected one of {FIGURES}")


def load_rows(csv_path: str, figure: str) -> List[dict]:
    """Read the harness CSV and check the figure's required columns."""
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in _REQUIRED[figure] if c not in header]
        if missing:
            raise MissingColumnsError(
                f"{csv_path} lacks columns {missing} required for {figure}")
        rows = list(reader)
    if not rows:
        raise EmptyCsvError(f"{csv_path} has no data rows")
    return rows


def _num(value: str) -> float:
    if value in ("", None):
        return math.nan
    return float(value)


def _grouped(rows: Sequence[dict], key: str, x_col: str, y_col: str,
             label_fmt=str) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """One series per distinct value of ``key``, points sorted by x."""
    series: Dict[str, List[Tuple[float, float]]] = {}
    for row in rows:
        label = label_fmt(row[key])
        x, y = _num(row[x_col]), _num(row[y_col])
        if math.isnan(x) or math.isnan(y):
            continue
        series.setdefault(label, []).append((x, y))
    out = {}
    for label, points in series.items():
        points.sort()
        xs, ys = zip(*points)
        out[label] = (np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    return out


def build_series(figure: str, rows: Sequence[dict]) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """The plotted data, deterministically derived from the rows.

    fig2: ADD/h against the sampling interval, one curve per threshold, plus
          a horizontal 1/I reference taken from the rows.
    fig3: ADD against the sampling interval, one curve per threshold.
    fig4: ADD against ARL2FA, one curve per detector.
    fig5, fig6: ADD against ARL2FA, one curve per service discipline.
    """
    if figure == "fig2":
        series = _grouped(rows, "h", "s", "add_over_h",
                          label_fmt=lambda h: f"h = {float(h):g}")
        # the large-threshold limit of ADD/h depends on the sampling rate, so
        # the reference is itself a curve over s
        reference = sorted({(_num(r["s"]), _num(r["inv_I"])) for r in rows
                            if not math.isnan(_num(r["inv_I"]))})
        if reference:
            xs, ys = zip(*reference)
            series["1/I"] = (np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
        return series
    if figure == "fig3":
        return _grouped(rows, "h", "s", "add_mean",
                        label_fmt=lambda h: f"h = {float(h):g}")
    if figure == "fig4":
        return _grouped(rows, "detector", "arl2fa", "add_mean")
    return _grouped(rows, "discipline", "arl2fa", "add_mean")


_AXES = {
    "fig2": ("sampling interval s (slots)", "ADD / h (slots per nat)"),
    "fig3": ("sampling interval s (slots)", "mean detection delay (slots)"),
    "fig4": ("mean run length to false alarm (slots)", "mean detection delay (slots)"),
    "fig5": ("mean run length to false alarm (slots)", "mean detection delay (slots)"),
    "fig6": ("mean run length to false alarm (slots)", "mean detection delay (slots)"),
}


def render(spec: FigureSpec) -> str:
    """Draw the figure and write it to ``spec.out_path``; returns the path.

    The rows are validated before any file is created, so a bad CSV never
    leaves a partial image behind.
    """
    rows = load_rows(spec.csv_path, spec.figure)
    series = build_series(spec.figure, rows)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label in sorted(series):
        xs, ys = series[label]
        style = {"linestyle": "--", "marker": None} if label.startswith("1/I") \
            else {"marker": "o", "markersize": 3.5}
        ax.plot(xs, ys, label=label, **style)
    if spec.figure in ("fig4", "fig5", "fig6"):
        ax.set_xscale("log")
    xlabel, ylabel = _AXES[spec.figure]
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    scenario_ids = sorted({r["scenario_id"] for r in rows})
    ax.set_title(", ".join(scenario_ids))
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.out_path)
    plt.close(fig)
    return spec.out_path
