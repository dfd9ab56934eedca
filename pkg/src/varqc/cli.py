"""Command line entry point ``varqc``.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on an
inconclusive check or a configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import CHECK_NAMES, load_config
from .errors import ConfigError
from .runner import resolve_threads, run


def build_parser():
    ap = argparse.ArgumentParser(prog="varqc", description="Run quasiconvexity condition checks from a JSON config.")
    ap.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    ap.add_argument("--out", default="varqc-out", metavar="DIR", help="output directory (default: %(default)s)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads for independent checks (fallback: VARQC_THREADS)")
    ap.add_argument("--check", action="append", choices=CHECK_NAMES, metavar="NAME",
                    help="run only checks with this name (repeatable)")
    ap.add_argument("--emit-mesh", action="store_true", help="dump shared meshes as OFF files")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        threads = resolve_threads(args.threads)
        report = run(cfg, args.out, threads=threads, only=args.check, emit_mesh=args.emit_mesh)
    except ConfigError as exc:
        print(f"varqc: error: {exc}", file=sys.stderr)
        return 2
    for rec in report.checks:
        print(f"{rec['status']:<13} {rec['label']:<28} margin={rec['margin']!r}")
    print(f"report: {args.out}/report.json  exit={report.exit_code}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
