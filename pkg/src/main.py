"""
Command-line entry point

Usage:
    python -m src.main tune --config data/example/tune.json --out out/tune
    python -m src.main evaluate --config data/example/evaluate.json --out out/eval --mc
    python -m src.main fit-noise --samples noise.csv --mode-count 6 --out out/fit
    python -m src.main simulate --config data/example/evaluate.json --out out/sim --seed 3
"""

import argparse
import sys
from pathlib import Path
from typing import List

from src.commands import EvaluateCommand, FitNoiseCommand, SimulateCommand, TuneCommand
from src.utils.logger import get_logger, setup_logging


logger = get_logger(__name__)

COMMANDS = {
    "tune": TuneCommand,
    "evaluate": EvaluateCommand,
    "fit-noise": FitNoiseCommand,
    "simulate": SimulateCommand,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detector-tuning",
        description="Tune chi-squared fault detectors for residuals with Gaussian-mixture noise",
    )
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    parser.add_argument("--log-format", choices=["console", "json"], default=None)
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name in ("tune", "evaluate", "simulate"):
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", type=Path, required=True, help="Job config JSON")
        _add_common(sub)
        if name != "simulate":
            sub.add_argument("--mc", action="store_true", help="Validate by Monte-Carlo simulation")
            sub.add_argument("--tail-tol", type=float, default=None, help="Settling-horizon tolerance")

    fit = subparsers.add_parser("fit-noise")
    fit.add_argument("--config", type=Path, default=None, help="Job config whose noise_eta names samples")
    fit.add_argument("--samples", type=Path, default=None, help="Samples CSV")
    fit.add_argument("--mode-count", type=int, default=None)
    _add_common(fit)
    return parser


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--out", type=Path, default=Path("out"), help="Output directory")
    sub.add_argument("--seed", type=int, default=None)


def main(argv: List[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level, args.log_format)

    command = COMMANDS[args.command]()
    kwargs = {k: v for k, v in vars(args).items() if k not in ("command", "out", "log_level", "log_format")}
    outcome = command.run(args.out, **kwargs)

    if outcome.success:
        for path in outcome.outputs:
            print(path)
    else:
        print(f"error: {outcome.error}", file=sys.stderr)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
