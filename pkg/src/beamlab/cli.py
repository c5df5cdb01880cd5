"""Command-line front end.

Five subcommands: simulate, sweep, correlate, verify-bound, plan-tau. Exit
codes: 0 success, 1 internal failure (including a bound check that is not
dominated), 2 usage or config error.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import __version__
from .core import ConfigError
from .harness import (
    cmd_correlate,
    cmd_plan_tau,
    cmd_simulate,
    cmd_sweep,
    cmd_verify_bound,
    load_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamlab",
        description=(
            "Simulation lab for reward-guided beam search with early "
            "rejection: coupled strategy runs, parameter sweeps, "
            "prefix-correlation studies, and tail-bound checks."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config document")
    common.add_argument(
        "--out", metavar="DIR", help="output directory (default: sweep.output_dir or .)"
    )
    common.add_argument(
        "--seed", type=int, metavar="U64", help="override the config seed"
    )
    common.add_argument(
        "--trials", type=int, metavar="N", help="override sweep.trials"
    )
    common.add_argument(
        "--workers", type=int, default=1, metavar="N",
        help="process pool size (default 1; results do not depend on it)",
    )

    sub = parser.add_subparsers(dest="command", required=True)
    p_sim = sub.add_parser(
        "simulate", parents=[common],
        help="run one coupled vanilla / early-rejection search",
    )
    p_sim.add_argument(
        "--trace", action="store_true",
        help="also write survivor_trace.jsonl with per-step survivors",
    )
    sub.add_parser(
        "sweep", parents=[common],
        help="cross-product sweep over strategies, beam widths, and prefixes",
    )
    sub.add_parser(
        "correlate", parents=[common],
        help="prefix-vs-final correlation study over the configured tau grid",
    )
    sub.add_parser(
        "verify-bound", parents=[common],
        help="Monte Carlo check of the mis-rejection tail bound",
    )
    p_plan = sub.add_parser(
        "plan-tau", parents=[common],
        help="smallest prefix length meeting a target design correlation",
    )
    p_plan.add_argument("rho", type=float, help="target correlation in (0, 1]")
    p_plan.add_argument("horizon", type=int, help="full sequence length L")
    return parser


def _load(args: argparse.Namespace):
    if args.config is None:
        raise ConfigError("--config is required for this command")
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be a positive integer")
    spec = load_experiment(args.config, seed=args.seed, trials=args.trials)
    out_dir = args.out or spec.sweep.output_dir or "."
    return spec, out_dir


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "plan-tau":
        print(cmd_plan_tau(args.rho, args.horizon))
        return 0
    spec, out_dir = _load(args)
    if args.command == "simulate":
        result = cmd_simulate(spec, out_dir, trace=args.trace)
        print(f"wrote ledgers, summary, and figure to {out_dir}")
        print(f"strategies agree on best path: {result['agree']}")
        return 0
    if args.command == "sweep":
        rows = cmd_sweep(spec, out_dir, workers=args.workers)
        print(f"wrote {len(rows)} sweep rows and figure to {out_dir}")
        return 0
    if args.command == "correlate":
        rows = cmd_correlate(spec, out_dir, workers=args.workers)
        print(f"wrote {len(rows)} correlation rows and figure to {out_dir}")
        return 0
    if args.command == "verify-bound":
        doc = cmd_verify_bound(spec, out_dir, workers=args.workers)
        flag = " (vacuous bound)" if doc["vacuous"] else ""
        print(
            f"empirical_rate={doc['empirical_rate']!r} "
            f"bound_prob={doc['bound_prob']!r} "
            f"dominated={doc['dominated']}{flag}"
        )
        return 0 if doc["dominated"] else 1
    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - exit-code contract needs a net
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
