"""Command line entry point: ``run``, ``plot``, ``verify`` and ``oracle``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import CONFIG_DIR, WORKERS
from .experiments import load_config, run_experiment, verdict_table, verify_against_oracle
from .schemas import SettingConfig
from .services.bundles import ExperimentError, ResultBundleRepository
from .services.games import GameConfigurationError, build_game
from .services.oracle import OracleSizeError, oracle_report
from .services.reports import emit_plots

LOGGER = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stackelberg", description="Learn leader commitments in Stackelberg POMDPs."
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Train every configured mode and seed")
    run.add_argument("config", type=Path, help="YAML experiment document")
    run.add_argument("--output-root", type=Path, default=None)
    run.add_argument("--workers", type=int, default=WORKERS)
    run.add_argument(
        "--verbose-rewards", action="store_true", help="Also log training-time rewards"
    )
    run.add_argument(
        "--export",
        action="store_true",
        help="Write the final greedy episode trace and follower dynamics as CSV",
    )

    plot = commands.add_parser("plot", help="Draw training curves of a result bundle")
    plot.add_argument("bundle", type=Path)

    verify = commands.add_parser("verify", help="Check a result bundle against the oracle")
    verify.add_argument("bundle", type=Path)

    oracle = commands.add_parser("oracle", help="Solve a setting exhaustively")
    oracle.add_argument("setting", help="Setting kind or path to an experiment document")
    oracle.add_argument("--resolution", type=float, default=0.01)
    oracle.add_argument("--json", action="store_true", help="Print the report as JSON")
    return parser


def _resolve_config_path(value: Path) -> Path:
    if value.exists():
        return value
    candidate = CONFIG_DIR / value
    if candidate.exists():
        return candidate
    return CONFIG_DIR / f"{value}.yaml"


def _command_run(args: argparse.Namespace) -> int:
    config = load_config(_resolve_config_path(args.config))
    if args.verbose_rewards:
        config = config.model_copy(update={"verbose_rewards": True})
    if args.export:
        config = config.model_copy(update={"export_traces": True})
    root = run_experiment(config, output_root=args.output_root, workers=args.workers)
    runs = ResultBundleRepository(root).runs()
    failed = [run for run in runs if not run.completed]
    print(f"bundle: {root}")
    for run in runs:
        best = "n/a" if run.best_eval is None else f"{run.best_eval:.4f}"
        print(f"  {run.mode:<20} seed={run.seed:<6} {run.status:<10} best={best}")
    return 1 if failed or not runs else 0


def _command_plot(args: argparse.Namespace) -> int:
    for path in emit_plots(args.bundle):
        print(path)
    return 0


def _command_verify(args: argparse.Namespace) -> int:
    results = verify_against_oracle(args.bundle)
    sys.stdout.write(verdict_table(results))
    return 0 if results and all(result.passed for result in results) else 1


def _command_oracle(args: argparse.Namespace) -> int:
    path = Path(args.setting)
    if path.suffix in {".yaml", ".yml"} or path.exists():
        setting = load_config(_resolve_config_path(path)).setting
    else:
        setting = SettingConfig(kind=args.setting)
    report = oracle_report(build_game(setting), grid_resolution=args.resolution)
    sys.stdout.write(report.to_json() + "\n" if args.json else report.to_text())
    return 0


COMMANDS = {
    "run": _command_run,
    "plot": _command_plot,
    "verify": _command_verify,
    "oracle": _command_oracle,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ExperimentError, OracleSizeError, GameConfigurationError, ValueError) as exc:
        LOGGER.error("%s", exc)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
