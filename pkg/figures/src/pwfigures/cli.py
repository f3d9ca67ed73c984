"""Command line for the bundle figure renderer.

Exit codes: 0 image written, 1 bundle incomplete or malformed, 2 bad usage.
"""

import argparse
import sys

from .bundle import BundleFormatError, MissingArtifact
from .render import KINDS, FigureSpec, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwfigures",
                                     description="render figures from simulation bundles")
    sub = parser.add_subparsers(dest="command", required=True)
    rend = sub.add_parser("render", help="draw one figure from a bundle")
    rend.add_argument("--bundle", required=True, help="bundle directory")
    rend.add_argument("--kind", required=True, choices=KINDS)
    rend.add_argument("--snapshot", type=int, default=-1,
                      help="dumped-field index, negatives from the end (default: last)")
    rend.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        info = render(FigureSpec(bundle=args.bundle, kind=args.kind,
                                 out=args.out, snapshot=args.snapshot))
    except (MissingArtifact, BundleFormatError) as exc:
        print(f"cannot render: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {info.path} ({info.width_px}x{info.height_px} px, "
          f"step {info.step})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
