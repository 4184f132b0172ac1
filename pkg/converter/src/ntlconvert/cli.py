import argparse
import sys

from .convert import ConversionError, convert


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ntl-convert",
        description="Extract VGG conv weights from an HDF5 file into an NTL1 container.",
    )
    parser.add_argument("--family", choices=("vgg16", "vgg19"), required=True)
    parser.add_argument("--in", dest="source", required=True, metavar="H5")
    parser.add_argument("--out", dest="out", required=True, metavar="NTL")
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        summary = convert(args.source, args.family, args.out)
    except (ConversionError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {summary.entries_written} entries ({summary.total_bytes} bytes) to {summary.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
