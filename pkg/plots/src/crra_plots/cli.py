import argparse
import sys

from .errors import SchemaMismatch
from .render import render


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="crra-plots",
        description="Render opportunity and strategy figures from experiment CSVs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    rend = sub.add_parser("render", help="render figures from a result directory")
    rend.add_argument("--in", dest="in_dir", required=True, help="experiment output directory")
    rend.add_argument("--out", dest="out_dir", required=True, help="directory for the images")
    rend.add_argument("--formats", default="png,svg", help="comma-separated: png,svg")
    args = parser.parse_args(argv)

    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    try:
        report = render(args.in_dir, args.out_dir, formats)
    except (SchemaMismatch, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for stem in ("opportunity", "strategy"):
        entry = report[stem]
        if entry["files"]:
            print(f"{stem}: {len(entry['labels'])} curves -> {', '.join(entry['files'])}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
