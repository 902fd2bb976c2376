"""Config-driven experiment orchestration: training, oracle comparison, verdicts."""
from __future__ import annotations

import asyncio
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import torch
import yaml

from .config import OUTPUT_ROOT, WORKERS
from .schemas import ExperimentConfig
from .services.bundles import ExperimentError, ResultBundleRepository, RunRecord
from .services.checkpoints import save_checkpoint
from .services.games import BayesianGame, MuSpmGame, NormalFormGame, build_game
from .services.oracle import (
    OracleReport,
    OracleSizeError,
    oracle_report,
    solve_deterministic_stackelberg,
    solve_randomized_stackelberg,
    solve_spm_exhaustive,
)
from .services.no_regret import history_to_csv
from .services.pomdp import EpisodeSchedule, protocol_for, trace_to_csv
from .services.reports import build_training_csv
from .services.trainer import LeaderTrainer

LOGGER = logging.getLogger(__name__)


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate one YAML experiment document."""

    with Path(path).open("r", encoding="utf-8") as handle:
        document = yaml.safe_load(handle)
    if not isinstance(document, dict):
        raise ExperimentError(f"{path} does not hold an experiment mapping")
    return ExperimentConfig.model_validate(document)


def experiment_schedule(config: ExperimentConfig) -> EpisodeSchedule:
    schedule = config.resolved_schedule()
    return EpisodeSchedule(schedule.equilibrium_subepisodes, schedule.reward_subepisodes)


def bundle_root(config: ExperimentConfig, output_root: Path | None = None) -> Path:
    base = config.output_dir or output_root or OUTPUT_ROOT
    return Path(base) / config.name


# ---------------------------------------------------------------------------
# Per-seed pipeline
# ---------------------------------------------------------------------------


def run_seed(config_json: str, mode: str, seed: int, root: str) -> RunRecord:
    """Train one (mode, seed) pair and write its log and checkpoint.

    Runs inside worker processes, so it takes plain arguments and never
    raises: failures come back as a failed ``RunRecord``.
    """

    config = ExperimentConfig.model_validate_json(config_json)
    repository = ResultBundleRepository(Path(root))
    try:
        torch.set_num_threads(1)
        game = build_game(config.setting)
        train_config = config.train.model_copy(update={"mode": mode, "seed": seed})
        trainer = LeaderTrainer(
            game,
            experiment_schedule(config),
            train_config,
            verbose_rewards=config.verbose_rewards,
        )
        rows = trainer.train()
        log_path = repository.seed_log_path(mode, seed)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(
            build_training_csv(rows, include_train_reward=config.verbose_rewards), encoding="utf-8"
        )
        checkpoint = save_checkpoint(
            repository.checkpoint_path(mode, seed), trainer, setting=config.setting.kind
        )
        exported = _export_final_episode(repository, trainer, mode, seed) if config.export_traces else {}
        return RunRecord(
            mode=mode,
            seed=seed,
            status="completed",
            log_path=str(log_path.relative_to(repository.root)),
            checkpoint_path=str(checkpoint.relative_to(repository.root)),
            steps=[row.step for row in rows],
            eval_rewards=[row.eval_reward for row in rows],
            value_losses=[row.value_loss for row in rows],
            greedy_decisions={
                str(index): list(action) for index, action in trainer.greedy_decisions().items()
            },
            **exported,
        )
    except Exception as exc:
        LOGGER.exception("Run mode=%s seed=%s failed", mode, seed)
        return RunRecord(mode=mode, seed=seed, status="failed", error=f"{type(exc).__name__}: {exc}")


def _export_final_episode(
    repository: ResultBundleRepository, trainer: LeaderTrainer, mode: str, seed: int
) -> dict[str, str]:
    """Replay the last evaluation episode and write its step trace and follower dynamics."""

    index = trainer.log[-1].step // trainer.config.eval_interval - 1 if trainer.log else 0
    trace = trainer.greedy_episode(index)
    paths = {
        "trace_path": (repository.trace_path(mode, seed), trace_to_csv([trace])),
        "dynamics_path": (repository.dynamics_path(mode, seed), history_to_csv(trace.history)),
    }
    for path, text in paths.values():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    LOGGER.info(
        "Exported %s steps and %s dynamics rounds for %s seed %s",
        len(trace),
        len(trace.history.records),
        mode,
        seed,
    )
    return {key: str(path.relative_to(repository.root)) for key, (path, _) in paths.items()}


async def _run_seeds(
    config: ExperimentConfig, root: Path, workers: int
) -> list[RunRecord]:
    payload = config.model_dump_json()
    jobs = [(mode, seed) for mode in config.modes for seed in config.seeds]
    if workers <= 1:
        return [run_seed(payload, mode, seed, str(root)) for mode, seed in jobs]
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        tasks = [
            loop.run_in_executor(pool, run_seed, payload, mode, seed, str(root))
            for mode, seed in jobs
        ]
        return list(await asyncio.gather(*tasks))


def _oracle_for(game: BayesianGame) -> OracleReport | None:
    try:
        return oracle_report(game)
    except OracleSizeError as exc:
        LOGGER.warning("Oracle skipped for %s: %s", game.name, exc)
        return None


def _merge_logs(repository: ResultBundleRepository, config: ExperimentConfig) -> None:
    header: str | None = None
    body: list[str] = []
    for mode in config.modes:
        for seed in config.seeds:
            path = repository.seed_log_path(mode, seed)
            if not path.exists():
                continue
            first, *rest = path.read_text(encoding="utf-8").splitlines()
            header = header or first
            body.extend(rest)
    if header is not None:
        repository.merged_log_path.write_text("\n".join([header, *body]) + "\n", encoding="utf-8")


def run_experiment(
    config: ExperimentConfig, *, output_root: Path | None = None, workers: int = WORKERS
) -> Path:
    """Train every (mode, seed), merge logs, attach the oracle and per-run gaps."""

    root = bundle_root(config, output_root)
    repository = ResultBundleRepository(root)
    repository.initialize(name=config.name, config=config.model_dump(mode="json"))
    game = build_game(config.setting)
    LOGGER.info(
        "Experiment %s: %s modes x %s seeds on %s", config.name, len(config.modes), len(config.seeds), game.name
    )

    records = asyncio.run(_run_seeds(config, root, workers))
    report = _oracle_for(game)
    if report is not None:
        repository.record_oracle(json.loads(report.to_json()))
        (root / "oracle.txt").write_text(report.to_text(), encoding="utf-8")
    for record in records:
        if report is not None and record.best_eval is not None:
            record.gap = report.normalized_value - record.best_eval
        repository.record_run(record)
    _merge_logs(repository, config)
    failed = [record for record in records if not record.completed]
    if failed:
        LOGGER.error("%s of %s runs failed", len(failed), len(records))
    return root


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

SeedCheck = Callable[[RunRecord], tuple[bool, float]]


@dataclass
class CriterionResult:
    criterion: str
    description: str
    mode: str
    seeds_passed: int
    seeds_total: int
    required_fraction: float
    passed: bool
    worst_gap: float
    details: dict[str, Any] = field(default_factory=dict)


@dataclass
class Criterion:
    name: str
    description: str
    required_fraction: float
    check: SeedCheck
    modes: tuple[str, ...] | None = None


def _at_least(target: float, *, final: bool = True, tolerance: float = 1e-9) -> SeedCheck:
    def check(run: RunRecord) -> tuple[bool, float]:
        value = run.final_eval if final else run.best_eval
        gap = target - value
        return gap <= tolerance, gap

    return check


def _within(target: float, band: float) -> SeedCheck:
    def check(run: RunRecord) -> tuple[bool, float]:
        gap = abs(run.final_eval - target)
        return gap <= band, gap

    return check


def _greedy_matches(game: BayesianGame, optimal: Sequence[Any]) -> SeedCheck:
    protocol = protocol_for(game)

    def check(run: RunRecord) -> tuple[bool, float]:
        decisions = {int(k): tuple(v) for k, v in run.greedy_decisions.items()}
        chosen = protocol.strategy_from_map(decisions)
        matched = chosen in optimal
        return matched, 0.0 if matched else 1.0

    return check


def _value_loss_below(limit: float, by_step: int) -> SeedCheck:
    def check(run: RunRecord) -> tuple[bool, float]:
        early = [loss for step, loss in zip(run.steps, run.value_losses) if step <= by_step]
        loss = early[-1] if early else run.value_losses[0]
        return loss < limit, loss - limit

    return check


def _oscillates(drops: int, threshold: float = 0.9) -> SeedCheck:
    def check(run: RunRecord) -> tuple[bool, float]:
        reached = False
        count = 0
        below = False
        for value in run.eval_rewards:
            if value >= 1.0 - 1e-9:
                reached = True
                below = False
            elif reached and value < threshold and not below:
                count += 1
                below = True
        return count >= drops, float(drops - count)

    return check


def _criteria_for(kind: str, game: BayesianGame) -> list[Criterion]:
    """Per-setting acceptance criteria, expressed on normalized rewards."""

    if isinstance(game, MuSpmGame):
        blind = solve_spm_exhaustive(game.setting, with_messages=False)
        bound = game.normalize_leader_reward(blind.expected_welfare - blind.first_best)
        first_best = game.normalize_leader_reward(0.0)
        low, high = game.leader_bounds
        band = 0.05 / (high - low)
        return [
            Criterion(
                "beats_no_message_bound",
                f"final reward above the best no-message mechanism ({bound:.4f})",
                0.6,
                lambda run: (run.final_eval > bound + 1e-9, bound - run.final_eval),
            ),
            Criterion(
                "near_first_best",
                f"final welfare loss within 0.05 of first best (normalized band {band:.4f})",
                0.4,
                _within(first_best, band),
            ),
        ]
    if isinstance(game, NormalFormGame) and game.randomized:
        solution = solve_randomized_stackelberg(game)
        threshold = game.normalize_leader_reward(26.5) if kind == "maintain_randomized" else (
            game.normalize_leader_reward(solution.leader_value) - 0.05
        )
        return [
            Criterion(
                "randomized_threshold",
                f"final reward at least {threshold:.4f} (oracle {solution.leader_value:.4f})",
                0.8,
                _at_least(threshold),
            )
        ]
    solution = solve_deterministic_stackelberg(game)
    target = game.normalize_leader_reward(solution.leader_value)
    if kind == "maintain":
        return [
            Criterion(
                "greedy_argmax",
                f"greedy commitment in {solution.optimal_actions}",
                0.9,
                _greedy_matches(game, solution.optimal_actions),
            )
        ]
    if kind == "escape":
        return [Criterion("reaches_optimum", f"best reward reaches {target:.4f}", 1.0, _at_least(target, final=False))]
    if kind == "matrix_design":
        return [
            Criterion(
                "sustained_optimum",
                f"final reward reaches {target:.4f}",
                0.8,
                _at_least(target),
                modes=("centralized_critic",),
            ),
            Criterion(
                "plain_oscillation",
                "at least 3 drops below 0.9 after first reaching 1.0",
                0.5,
                _oscillates(3),
                modes=("plain",),
            ),
            Criterion(
                "critic_value_loss",
                "centralized value loss below 0.2 by step 100000",
                0.8,
                _value_loss_below(0.2, 100_000),
                modes=("centralized_critic",),
            ),
        ]
    if kind == "allocation":
        return [Criterion("allocation_plateau", f"final reward within 0.05 of {target:.4f}", 0.8, _within(target, 0.05))]
    return [Criterion("oracle_gap", f"final reward within 0.01 of {target:.4f}", 0.5, _at_least(target - 0.01))]


def verify_against_oracle(root: Path) -> list[CriterionResult]:
    """Score every completed run against the setting's criteria and write ``verdict.json``."""

    repository = ResultBundleRepository(root)
    manifest = repository.load()
    config = ExperimentConfig.model_validate(manifest["config"])
    runs = repository.runs()
    if not runs:
        raise ExperimentError(f"Bundle {root} has no runs to verify")
    game = build_game(config.setting)
    try:
        criteria = _criteria_for(config.setting.kind, game)
    except OracleSizeError as exc:
        raise ExperimentError(f"Oracle cannot solve {game.name}: {exc}") from exc

    results: list[CriterionResult] = []
    for criterion in criteria:
        for mode in config.modes:
            if criterion.modes is not None and mode not in criterion.modes:
                continue
            selected = [run for run in runs if run.mode == mode]
            outcomes: dict[str, Any] = {}
            passed = 0
            worst = -math.inf
            for run in selected:
                if not run.completed or not run.eval_rewards:
                    outcomes[str(run.seed)] = {"passed": False, "gap": None, "error": run.error}
                    continue
                ok, gap = criterion.check(run)
                passed += int(ok)
                worst = max(worst, gap)
                outcomes[str(run.seed)] = {"passed": ok, "gap": round(gap, 9)}
            total = len(selected)
            results.append(
                CriterionResult(
                    criterion=criterion.name,
                    description=criterion.description,
                    mode=mode,
                    seeds_passed=passed,
                    seeds_total=total,
                    required_fraction=criterion.required_fraction,
                    passed=total > 0 and passed >= math.ceil(criterion.required_fraction * total - 1e-9),
                    worst_gap=worst if math.isfinite(worst) else math.nan,
                    details=outcomes,
                )
            )
    payload = {
        "name": manifest["name"],
        "passed": all(result.passed for result in results),
        "criteria": [asdict(result) for result in results],
    }
    repository.verdict_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )
    return results


def verdict_table(results: Sequence[CriterionResult]) -> str:
    lines = [f"{'criterion':<24} {'mode':<20} {'seeds':>9} {'worst gap':>10}  result"]
    for result in results:
        seeds = f"{result.seeds_passed}/{result.seeds_total}"
        gap = "n/a" if math.isnan(result.worst_gap) else f"{result.worst_gap:.4f}"
        verdict = "PASS" if result.passed else "FAIL"
        lines.append(f"{result.criterion:<24} {result.mode:<20} {seeds:>9} {gap:>10}  {verdict}")
    return "\n".join(lines) + "\n"


__all__ = [
    "Criterion",
    "CriterionResult",
    "ExperimentError",
    "bundle_root",
    "experiment_schedule",
    "load_config",
    "run_experiment",
    "run_seed",
    "verdict_table",
    "verify_against_oracle",
]
