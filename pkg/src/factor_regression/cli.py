"""
Command line entry point.

    factor-regression generate --config synth.json --out data/
    factor-regression run --config configs/desk.json --chains 2
    factor-regression resume --checkpoint runs/ncfr_samh/chain_0/checkpoint.npz --iterations 500
    factor-regression report --out runs/
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError  # pylint: disable=no-name-in-module

from factor_regression.dataset import save_dataset
from factor_regression.errors import ConfigError, FactorRegressionError
from factor_regression.evaluation import MetricsReport
from factor_regression.observer import LoggingObserver
from factor_regression.synth import SynthConfig, generate, save_ground_truth

from factor_regression.simulation.config import (  # isort: skip
    DEFAULT_OUTPUT_DIR,
    OUTPUT_ENV_VAR,
    RosterConfig,
    apply_overrides,
    load_config,
)
from factor_regression.simulation.experiment import (  # isort: skip
    report,
    resume,
    run_experiment,
    run_roster,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    """The argument parser with its four subcommands."""
    parser = argparse.ArgumentParser(
        prog="factor-regression",
        description="Non-parametric conditional factor regression experiments.",
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    generate_parser = commands.add_parser("generate", help="Write a synthetic dataset.")
    generate_parser.add_argument(
        "--config",
        default=None,
        help="JSON file holding a synth block or a bare synthetic-data config.",
    )
    generate_parser.add_argument("--seed", type=int, default=None, help="Generating seed.")
    generate_parser.add_argument("--out", default=None, help="Output directory.")

    run_parser = commands.add_parser("run", help="Run one model or a roster of models.")
    run_parser.add_argument("--config", required=True, help="Run or roster JSON file.")
    run_parser.add_argument("--seed", type=int, default=None, help="Root seed.")
    run_parser.add_argument("--out", default=None, help="Output directory.")
    run_parser.add_argument("--chains", type=int, default=None, help="Chains per model.")

    resume_parser = commands.add_parser("resume", help="Continue a chain from its checkpoint.")
    resume_parser.add_argument("--checkpoint", required=True, help="checkpoint.npz path.")
    resume_parser.add_argument(
        "--iterations", type=int, required=True, help="Extra iterations to run."
    )

    report_parser = commands.add_parser("report", help="Re-summarize finished runs.")
    report_parser.add_argument(
        "--out", default=None, help="Model directory or output directory of a roster."
    )
    return parser


def _output_dir(value: Optional[str]) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get(OUTPUT_ENV_VAR) or DEFAULT_OUTPUT_DIR)


def _synth_config(path: Optional[str], seed: Optional[int]) -> SynthConfig:
    payload: dict = {}
    if path:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError("--config", f"{config_path} does not exist")
        try:
            payload = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError("--config", f"{config_path} is not valid JSON: {err}") from err
        payload = payload.get("synth", payload) or {}
    if seed is not None:
        payload["seed"] = seed
    try:
        return SynthConfig.parse_obj(payload)
    except ValidationError as err:
        first = err.errors()[0]
        key = ".".join(str(part) for part in first.get("loc", ())) or "synth"
        raise ConfigError(key, first.get("msg", str(err))) from err


def command_generate(args: argparse.Namespace) -> List[MetricsReport]:
    """Write dataset.npz and truth.npz."""
    cfg = _synth_config(args.config, args.seed)
    out = _output_dir(args.out)
    dataset, truth = generate(cfg)
    save_dataset(out / "dataset.npz", dataset)
    save_ground_truth(out / "truth.npz", truth, cfg)
    logger.info("Wrote %r to %s", dataset, out)
    return []


def command_run(args: argparse.Namespace) -> List[MetricsReport]:
    """Run a model or a roster."""
    config = apply_overrides(
        load_config(Path(args.config)), seed=args.seed, output_dir=args.out, chains=args.chains
    )
    observers = [LoggingObserver()]
    if isinstance(config, RosterConfig):
        return run_roster(config, observers)
    return [run_experiment(config, observers)]


def command_resume(args: argparse.Namespace) -> List[MetricsReport]:
    """Continue a chain."""
    return [resume(Path(args.checkpoint), args.iterations, [LoggingObserver()])]


def command_report(args: argparse.Namespace) -> List[MetricsReport]:
    """Rebuild metrics and tables from finished runs."""
    return report(_output_dir(args.out))


COMMANDS = {
    "generate": command_generate,
    "run": command_run,
    "resume": command_resume,
    "report": command_report,
}


def print_reports(reports: Sequence[MetricsReport]) -> None:
    """One line per model on stdout."""
    for metrics in reports:
        k_mode = "-" if metrics.k_mode is None else str(metrics.k_mode)
        print(
            f"{metrics.model:<16} nlse median {metrics.nlse_summary.median:.4f} "
            f"[{metrics.nlse_summary.q1:.4f}, {metrics.nlse_summary.q3:.4f}] "
            f"K mode {k_mode} train/test delta {metrics.train_test_delta:.4f}"
        )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse the arguments, run the subcommand and return the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        reports = COMMANDS[args.command](args)
    except ConfigError as err:
        logger.error("Invalid configuration: %s", err)
        return EXIT_CONFIG
    except (FactorRegressionError, RuntimeError, OSError) as err:
        logger.error("%s failed: %s", args.command, err)
        return EXIT_FAILURE
    print_reports(reports)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
