"""Command-line entry point.

Every subcommand reads a bracketed key=value config, runs the experiment,
and writes CSVs, figures, and a manifest into the output directory. Exit
codes: 0 when every checked invariant passed, 1 when any failed, 2 for
usage, config, or input-file problems.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import (
    AlphabetTooLarge,
    ChannelParse,
    ChanprobeError,
    ConfigParse,
    DepthOverflow,
    EnumerationTooLarge,
)
from .experiments import KINDS, load_config, run

_USAGE_ERRORS = (
    ConfigParse,
    ChannelParse,
    EnumerationTooLarge,
    DepthOverflow,
    AlphabetTooLarge,
)

_HELP = {
    "lemma1-scan": "exact worst-case deviation probability vs its ceiling",
    "optimal-audit": "threshold-walk strategy vs brute-force maximum",
    "surgery-audit": "replacement averaging identity and well-ordering",
    "martingale-audit": "conditional drift of the score process",
    "mc-deviation": "Monte Carlo deviation probability at large blocklengths",
    "isac-frontier": "rate-distortion frontier over input laws",
    "isac-simulate": "closed-loop code simulation",
    "converse-demo": "good-message set and restricted measure at tiny n",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chanprobe",
        description="adaptive channel probing, exactly verified",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sub = subparsers.add_parser(kind, help=_HELP[kind])
        sub.add_argument("--config", required=True, help="experiment config file")
        sub.add_argument("--out", default=None, help="output directory")
        sub.add_argument("--seed", type=int, default=None, help="base RNG seed")
        sub.add_argument("--workers", type=int, default=None, help="worker count")
        sub.add_argument("--format", choices=["csv"], default="csv")
        sub.add_argument(
            "--no-plots", action="store_true", help="skip figure rendering"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(
            args.config,
            kind=args.command,
            out=args.out,
            seed=args.seed,
            workers=args.workers,
            plots=False if args.no_plots else None,
        )
    except _USAGE_ERRORS as error:
        print(f"chanprobe: {error}", file=sys.stderr)
        return 2
    try:
        manifest = run(config)
    except _USAGE_ERRORS as error:
        print(f"chanprobe: {error}", file=sys.stderr)
        return 2
    except ChanprobeError as error:
        print(f"chanprobe: invariant violation: {error}", file=sys.stderr)
        return 1
    for name, digest in sorted(manifest.outputs.items()):
        print(f"{digest[:12]}  {config.out_dir / name}")
    print(f"all-pass: {'yes' if manifest.all_pass else 'NO'}")
    return 0 if manifest.all_pass else 1


if __name__ == "__main__":
    sys.exit(main())
