"""sil-render: draw fig1/fig2 from sweep CSV outputs."""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, RenderError, render


def build_parser():
    ap = argparse.ArgumentParser(prog="sil-render", description=__doc__)
    ap.add_argument("--figure", required=True, choices=["fig1", "fig2"])
    ap.add_argument(
        "--summaries", required=True,
        help="fig1: comma-separated quadratic,truncated summary CSVs; "
             "fig2: directory holding *_smean.csv mean trajectories",
    )
    ap.add_argument("--fits", required=True,
                    help="fit points CSV; the companion *_lines.csv sits next to it")
    ap.add_argument("--fit-lines", default=None,
                    help="override the fitted-line CSV path")
    ap.add_argument("--out", required=True, help="output image (png/svg)")
    ap.add_argument("--panels", default="abc", help="subset of panels, e.g. ac")
    ap.add_argument("--log-delta", action="store_true",
                    help="log-scale the delta axis of panels a/b")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    lines = args.fit_lines
    if lines is None:
        lines = args.fits[:-4] + "_lines.csv" if args.fits.endswith(".csv") else args.fits + "_lines"
    spec = FigureSpec(
        figure=args.figure,
        summaries=tuple(args.summaries.split(",")),
        fit_points=args.fits,
        fit_lines=lines,
        out=args.out,
        panels=tuple(args.panels),
        log_delta=args.log_delta,
    )
    try:
        result = render(spec)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.path}")
    if result.annotations:
        slopes = ", ".join(f"{t:g}: {s}" for t, s in sorted(result.annotations.items()))
        print(f"annotated slopes: {slopes}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
