"""Command-line experiment runner.

Subcommands: ``synth`` (trace generation), ``estimate`` (Monte Carlo
estimation study), ``switch`` (scenario switching run with the NES
baseline), ``report`` (aggregate run directories). Every command is
deterministic for a fixed config + seed; validation failures exit nonzero
with one machine-readable JSON error line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, ExperimentConfig
from .pipeline import cmd_estimate, cmd_report, cmd_switch, cmd_synth
from .switching import SearchSpaceError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--seed", type=int, help="RNG seed override")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--trials", type=int, help="Monte Carlo trial count override")
    parser.add_argument("--gamma", type=float, help="state-of-charge threshold override")
    parser.add_argument(
        "--estimator", choices=["dist", "mlc", "lstm", "oracle"],
        help="sleeping-cell load estimator override",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vhetnet",
        description="Two-phase cell switching: load estimation and renewable-aware ON/OFF optimization",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("synth", "generate a synthetic traffic trace CSV"),
        ("estimate", "Monte Carlo sleeping-cell estimation study"),
        ("switch", "scenario switching run with the no-renewable baseline"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
    rep = sub.add_parser("report", help="aggregate run directories into a summary")
    rep.add_argument("runs", nargs="+", help="run directories produced by estimate/switch")
    rep.add_argument("--out", required=True, help="summary output directory")
    return parser


def _config_from(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "trials": args.trials,
        "gamma": args.gamma,
        "estimator": args.estimator,
    }
    return ExperimentConfig.from_file(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            paths = cmd_report(args.runs, args.out)
        else:
            cfg = _config_from(args)
            command = {"synth": cmd_synth, "estimate": cmd_estimate, "switch": cmd_switch}
            paths = command[args.command](cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "field": exc.field, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except SearchSpaceError as exc:
        print(json.dumps({"error": "search_space", "message": str(exc)}), file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
