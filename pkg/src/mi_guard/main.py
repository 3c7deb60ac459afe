"""Command-line entry point: ``mi-guard <subcommand> <config.json>``.

Exit codes: 0 success, 1 a pipeline stage failed, 2 the configuration is invalid.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from dotenv import load_dotenv

from mi_guard import __version__
from mi_guard.config import settings
from mi_guard.errors import ConfigValidationError, StageError
from mi_guard.pipeline.workflow import run_workflow
from mi_guard.schemas.experiment import experiment_json_schema, load_experiment
from mi_guard.services.reports import dump_json, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE_FAILED = 1
EXIT_CONFIG_INVALID = 2

RUN_SUBCOMMANDS = ("train", "attack", "defend", "sweep", "report")


def _seeds(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got '{text}'") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mi-guard",
        description="Audit classifiers against membership inference and evaluate defenses.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="overrides MI_GUARD_LOG_LEVEL")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    help_text = {
        "train": "train victim and shadow models, write checkpoints",
        "attack": "run the configured adversaries against the undefended victim",
        "defend": "evaluate every configured defense against every adversary",
        "sweep": "run the configured privacy-utility sweeps",
        "report": "merge existing stage outputs into report.json",
    }
    for name in RUN_SUBCOMMANDS:
        cmd = sub.add_parser(name, help=help_text[name])
        cmd.add_argument("config", type=Path, help="experiment JSON")
        cmd.add_argument("--output-dir", type=Path, default=None,
                         help="overrides the config and MI_GUARD_OUTPUT_DIR")
        cmd.add_argument("--seeds", type=_seeds, default=None, help="e.g. 0,1,2,3,4")

    schema = sub.add_parser("schema", help="print or write the experiment JSON schema")
    schema.add_argument("--output", type=Path, default=None)
    return parser


def configure_logging(level: str | None) -> None:
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def run(config_path: str | Path, subcommand: str, *, output_dir: Path | None = None,
        seeds: list[int] | None = None) -> int:
    """Validate the config and run one subcommand; returns the exit status."""
    try:
        config = load_experiment(config_path).with_overrides(output_dir=output_dir, seeds=seeds)
    except ConfigValidationError as exc:
        print(f"mi-guard: invalid configuration {config_path}\n{exc}", file=sys.stderr)
        return EXIT_CONFIG_INVALID

    try:
        state = run_workflow(config, subcommand)
    except StageError as exc:
        print(f"mi-guard: {subcommand} failed in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return EXIT_STAGE_FAILED
    logger.info("%s finished: %d artifacts in %s", subcommand, len(state["artifacts"]), state["output_dir"])
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv(override=False)
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    if args.subcommand == "schema":
        schema = experiment_json_schema()
        if args.output is None:
            sys.stdout.write(dump_json(schema))
        else:
            write_json(schema, args.output)
        return EXIT_OK

    return run(args.config, args.subcommand, output_dir=args.output_dir, seeds=args.seeds)


if __name__ == "__main__":
    sys.exit(main())
