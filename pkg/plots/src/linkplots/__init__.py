"""Plotting companion for the link-detection harness CSV output."""

from .figures import (FIGURES, EmptyCsvError, FigureSpec, MissingColumnsError,
                      build_series, load_rows, render)

__version__ = "0.1.0"

__all__ = ["FIGURES", "EmptyCsvError", "FigureSpec", "MissingColumnsError",
           "build_series", "load_rows", "render"]
