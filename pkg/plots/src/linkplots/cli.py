"""Command line entry point: render one figure from a harness CSV."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .figures import FIGURES, EmptyCsvError, FigureSpec, MissingColumnsError, render


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render a figure from a detection-harness CSV.")
    parser.add_argument("--csv", required=True, help="input CSV path")
    parser.add_argument("--figure", required=True, choices=FIGURES,
                        help="which figure to draw")
    parser.add_argument("--out", required=True, help="output image path (png/svg)")
    args = parser.parse_args(argv)

    try:
        spec = FigureSpec(csv_path=args.csv, figure=args.figure, out_path=args.out)
        render(spec)
    except (MissingColumnsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EmptyCsvError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
