"""Command line: ergoflow run | oracle-compare | list-fixtures."""

import argparse
import logging
import sys
from importlib import resources

from .runner import oracle_compare, run


def fixtures():
    """{name: path} of the bundled experiment configs."""
    root = resources.files("ergoflow") / "fixtures"
    return {p.name[:-5]: str(p) for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".toml")}


def _resolve(path):
    """Accept a file path or a bundled fixture name."""
    fx = fixtures()
    return fx.get(path, path)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="ergoflow", description="Multiple ergodic averages along flows.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="execute a config and write curves, reports and a manifest")
    p.add_argument("config")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p = sub.add_parser("oracle-compare", help="check a config against its oracle")
    p.add_argument("config")
    sub.add_parser("list-fixtures", help="print the bundled configs")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or args.cmd == "oracle-compare" else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.cmd == "list-fixtures":
        for name, path in fixtures().items():
            print(f"{name}\t{path}")
        return 0
    if args.cmd == "run":
        if args.threads < 1:
            ap.error("--threads must be >= 1")
        code, files = run(_resolve(args.config), threads=args.threads, out_dir=args.out)
        for f in files:
            print(f)
        return code
    code, deltas = oracle_compare(_resolve(args.config))
    if deltas:
        print(f"max delta {max(deltas):.3e} over {len(deltas)} cases")
    return code


if __name__ == "__main__":
    sys.exit(main())
