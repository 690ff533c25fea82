"""Command-line interface mirroring the PlotJob fields.

  vtpost slice      --input state.vtk --field phi_T --axis z --coord 1.0 --output out.png
  vtpost line       --input state.vtk --fields phi_T,phi_P --start 0,0,1 --end 2,2,1 --output out.png
  vtpost timeseries --input diagnostics.csv [--columns E,mass_P] --output out.png
"""

from __future__ import annotations

import argparse
import sys

from .plots import PlotError, PlotJob, plot_line, plot_slice, plot_timeseries
from .vtkread import VtkFormatError


def _triple(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return tuple(parts)


def _build_parser():
    parser = argparse.ArgumentParser(prog="vtpost", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("slice", help="heatmap of one field on an axis plane")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--axis", default="z", choices=["x", "y", "z"])
    p.add_argument("--coord", type=float, default=1.0)

    p = sub.add_parser("line", help="field profiles along a segment")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--fields", required=True, help="comma-separated field names")
    p.add_argument("--start", type=_triple, default=(0.0, 0.0, 1.0))
    p.add_argument("--end", type=_triple, default=(2.0, 2.0, 1.0))
    p.add_argument("--samples", type=int, default=200)

    p = sub.add_parser("timeseries", help="diagnostics columns vs time")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--columns", default=None, help="comma-separated column names")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "slice":
            job = PlotJob(
                args.input, args.output, "slice",
                fields=[args.field], plane_axis=args.axis, plane_coord=args.coord,
            )
            plot_slice(job)
        elif args.command == "line":
            job = PlotJob(
                args.input, args.output, "line",
                fields=args.fields.split(","),
                line_start=args.start, line_end=args.end, samples=args.samples,
            )
            plot_line(job)
        else:
            cols = args.columns.split(",") if args.columns else []
            job = PlotJob(args.input, args.output, "timeseries", fields=cols)
            plot_timeseries(job)
    except (PlotError, VtkFormatError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
