"""Command line entry point.

    nldiff <command> [--config PATH] [--output DIR] [--threads N]

Exit status: 0 when every acceptance row passes, 1 when some row fails,
2 on configuration, dependency or format errors.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import default_config, parse_config
from .errors import ConfigurationError, DependencyError, FormatError, NLDiffError
from .pipeline import COMMANDS, dispatch

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

HELP = {
    "stationary": "solve for the L-harmonic profile phi and write phi.nldf",
    "simulate": "run the reference evolution (needs phi from `stationary`)",
    "omega": "regular part of the fundamental solution: cross-checks and Gaussian limit",
    "verify": "full pipeline followed by report",
    "report": "assemble report.csv from existing artifacts",
    "selftest": "oracle-scale checks, no reference artifacts needed",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nldiff", description="Nonlocal diffusion in exterior domains.")
    p.add_argument("command", choices=list(COMMANDS), metavar="command",
                   help="; ".join(f"{k}: {v}" for k, v in HELP.items()))
    p.add_argument("--config", help="flat key = value file (reference configuration if omitted)")
    p.add_argument("--output", help="output directory (overrides output_dir)")
    p.add_argument("--threads", help="FFT worker threads, an integer or 'auto'")
    p.add_argument("-q", "--quiet", action="store_true", help="only print failures and errors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    overrides = {}
    if args.output:
        overrides["output_dir"] = args.output
    if args.threads:
        overrides["threads"] = args.threads
    try:
        if args.config:
            cfg = parse_config(args.config, overrides)
        else:
            cfg = default_config(overrides)
        rows = dispatch(args.command, cfg)
    except DependencyError as exc:
        print(f"nldiff: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, FormatError) as exc:
        print(f"nldiff: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NLDiffError as exc:
        print(f"nldiff: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    failed = [r.criterion for r in rows if not r.passed]
    for r in rows:
        print(f"{r.criterion:28s} {'pass' if r.passed else 'FAIL'}")
    if failed:
        print(f"{len(failed)} of {len(rows)} rows failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
