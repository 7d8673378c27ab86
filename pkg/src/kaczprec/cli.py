"""Command-line entry point for the experiment harness.

Examples
--------
Run the convergence experiment with the small preset and write a CSV::

    kaczprec convergence --out traces.csv

Sweep the sum rate over SNR with three seeds for two schemes::

    kaczprec rate-snr --scheme vr-oahk,rzf --seed 0,1,2 --out rate.csv

Run every figure-style experiment into a directory::

    kaczprec all --preset desk --out results/

Worker processes are controlled by the KACZPREC_WORKERS environment
variable (default 1); output bytes do not depend on the worker count.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiments import (
    PRESETS,
    RUN_KINDS,
    RUNNERS,
    WORKERS_ENV,
    ConfigError,
    load_config,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kaczprec",
        description="Iterative precoder experiment sweeps (CSV output).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in RUN_KINDS + ("all",):
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="scenario preset")
        p.add_argument("--seed", help="comma-separated seed list override")
        p.add_argument("--scheme", help="comma-separated scheme list override")
        p.add_argument("--out", required=True,
                       help="output CSV path (directory for 'all')")
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.preset:
        out["preset"] = args.preset
    if args.seed:
        try:
            out["seeds"] = tuple(int(s) for s in args.seed.split(",") if s.strip())
        except ValueError:
            raise ConfigError(f"--seed expects integers, got {args.seed!r}") from None
    if args.scheme:
        out["schemes"] = tuple(s.strip() for s in args.scheme.split(",") if s.strip())
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "all":
            os.makedirs(args.out, exist_ok=True)
            for kind in RUN_KINDS:
                path = os.path.join(args.out, kind.replace("-", "_") + ".csv")
                run_id = RUNNERS[kind](cfg, path)
                print(f"{kind}: wrote {path} (run_id {run_id})")
        else:
            run_id = RUNNERS[args.command](cfg, args.out)
            print(f"{args.command}: wrote {args.out} (run_id {run_id})")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
