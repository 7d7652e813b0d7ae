"""Command-line entry point: ``cellfree <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, SystemConfig, dump_config, validate_config
from .experiments import ExperimentSpec, run_experiment

SWEEPS = {"ka": "mse-vs-ka", "angle": "mse-vs-angle", "delay": "mse-vs-delay"}


def _subcarrier(text: str):
    if text == "avg":
        return "avg"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer or 'avg'") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file; absent keys take the desk-scale defaults")
    p.add_argument("--seed", type=int, nargs="*", default=[0], help="one or more seeds")
    p.add_argument("--out", help="output table (default: stdout)")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per point")
    p.add_argument("--grid", type=float, nargs="+", help="sweep grid values")
    p.add_argument("--workers", type=int, default=1, help="process-pool size")
    p.add_argument("--num-active", type=int, help="active UEs where fixed")


def _power(p: argparse.ArgumentParser) -> None:
    p.add_argument("--subcarrier", type=_subcarrier,
                   help="evaluation subcarrier, or 'avg' over four spread-out ones")
    p.add_argument("--epsilon", type=float, help="Dinkelbach stopping tolerance")
    p.add_argument("--max-iters", type=int, default=200, help="Dinkelbach iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellfree", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mse-sweep", help="averaged estimation error versus K_a or spreads")
    _common(p)
    p.add_argument("--sweep", choices=sorted(SWEEPS), default="ka",
                   help="ka: active UEs; angle: spread in degrees; delay: spread in us")

    p = sub.add_parser("mse-cdf", help="per-UE estimation error for AP-selection thresholds")
    _common(p)

    p = sub.add_parser("se-cdf", help="minimum SE with and without max-min power control")
    _common(p)
    _power(p)

    p = sub.add_parser("detect", help="activity detection for ρ_p scale factors")
    _common(p)

    p = sub.add_parser("power-control", help="Dinkelbach solution, trace and bisection check")
    _common(p)
    _power(p)

    p = sub.add_parser("validate", help="print the normalized configuration")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--reference", action="store_true",
                   help="fill absent keys from the full-scale reference defaults")
    return parser


def _load(args) -> SystemConfig:
    return validate_config(args.config, base=SystemConfig.desk_scale())


def _spec(args) -> ExperimentSpec:
    kind = SWEEPS[args.sweep] if args.command == "mse-sweep" else args.command
    return ExperimentSpec(
        kind=kind, cfg=_load(args), seeds=tuple(args.seed), grid=tuple(args.grid or ()),
        trials=args.trials, subcarrier=getattr(args, "subcarrier", None),
        epsilon=getattr(args, "epsilon", None),
        max_iters=getattr(args, "max_iters", 200), num_active=args.num_active,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            base = SystemConfig() if args.reference else SystemConfig.desk_scale()
            text = dump_config(validate_config(args.config, base=base))
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            return 0
        spec = _spec(args)
        run_experiment(spec, args.out if args.out else sys.stdout, workers=args.workers)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
