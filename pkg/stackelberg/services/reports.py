"""Training-log CSVs and static training-curve images."""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bundles import ExperimentError, ResultBundleRepository, RunRecord  # noqa: E402
from .trainer import EvaluationRow  # noqa: E402

LOGGER = logging.getLogger(__name__)

TRAINING_COLUMNS: tuple[str, ...] = ("step", "eval_reward", "value_loss", "mode", "seed")
CURVE_FILE = "curves.png"
VALUE_LOSS_FILE = "value_loss.png"


def _format(value: float | None) -> str:
    if value is None or math.isnan(value):
        return "nan"
    return f"{value:.6f}"


def _csv_from_rows(headers: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def build_training_csv(
    rows: Iterable[EvaluationRow], *, include_train_reward: bool = False
) -> str:
    """Evaluation log with fixed float formatting and no timestamps."""

    headers = list(TRAINING_COLUMNS)
    if include_train_reward:
        headers.append("train_reward")
    csv_rows = []
    for row in rows:
        values = [str(row.step), _format(row.eval_reward), _format(row.value_loss), row.mode, str(row.seed)]
        if include_train_reward:
            values.append(_format(row.train_reward))
        csv_rows.append(values)
    return _csv_from_rows(headers, csv_rows)


def parse_training_csv(text: str) -> list[EvaluationRow]:
    rows = []
    for record in csv.DictReader(io.StringIO(text)):
        train = record.get("train_reward")
        rows.append(
            EvaluationRow(
                step=int(record["step"]),
                eval_reward=float(record["eval_reward"]),
                value_loss=float(record["value_loss"]),
                mode=record["mode"],
                seed=int(record["seed"]),
                train_reward=float(train) if train not in (None, "") else None,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Curve:
    """Mean and standard error of one logged metric across seeds at each step."""

    mode: str
    steps: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray | None
    seeds: int


def curves_from_runs(runs: Sequence[RunRecord], metric: str = "eval_rewards") -> list[Curve]:
    """Aggregate ``eval_rewards`` or ``value_losses`` per mode."""

    by_mode: dict[str, list[RunRecord]] = defaultdict(list)
    for run in runs:
        if run.completed and getattr(run, metric):
            by_mode[run.mode].append(run)
    curves = []
    for mode, group in sorted(by_mode.items()):
        length = min(len(getattr(run, metric)) for run in group)
        values = np.array([getattr(run, metric)[:length] for run in group], dtype=float)
        steps = np.array(group[0].steps[:length])
        stderr = None
        if len(group) > 1:
            stderr = values.std(axis=0, ddof=1) / math.sqrt(len(group))
        curves.append(Curve(mode, steps, values.mean(axis=0), stderr, len(group)))
    return curves


def _draw(axis, curves: Sequence[Curve]) -> None:
    for curve in curves:
        label = f"{curve.mode} ({curve.seeds} seed{'s' if curve.seeds != 1 else ''})"
        axis.plot(curve.steps, curve.mean, label=label, linewidth=1.8)
        if curve.stderr is not None:
            axis.fill_between(
                curve.steps, curve.mean - curve.stderr, curve.mean + curve.stderr, alpha=0.2
            )


def _save(figure, path: Path) -> Path:
    figure.tight_layout()
    figure.savefig(path, dpi=120)
    plt.close(figure)
    LOGGER.info("Wrote %s", path)
    return path


def emit_plots(bundle_root: Path) -> list[Path]:
    """Draw the reward curves and the critic value-loss curves of one bundle."""

    repository = ResultBundleRepository(bundle_root)
    manifest = repository.load()
    runs = repository.runs()
    curves = curves_from_runs(runs)
    if not curves:
        raise ExperimentError(f"Bundle {bundle_root} has no completed runs to plot")

    figure, axis = plt.subplots(figsize=(7, 4.5))
    _draw(axis, curves)
    oracle = manifest.get("oracle")
    if oracle is not None:
        axis.axhline(oracle["normalized_value"], color="gray", linestyle="--", label="oracle")
    axis.set_ylim(0.0, 1.05)
    axis.set_xlabel("environment steps")
    axis.set_ylabel("normalized evaluation reward")
    axis.set_title(manifest["name"])
    axis.grid(alpha=0.3)
    axis.legend(loc="lower right")
    paths = [_save(figure, Path(bundle_root) / CURVE_FILE)]

    figure, axis = plt.subplots(figsize=(7, 4.5))
    _draw(axis, curves_from_runs(runs, "value_losses"))
    axis.axhline(0.2, color="gray", linestyle=":", label="0.2")
    axis.set_xlabel("environment steps")
    axis.set_ylabel("critic value loss")
    axis.set_title(f"{manifest['name']} value loss")
    axis.grid(alpha=0.3)
    axis.legend(loc="upper right")
    paths.append(_save(figure, Path(bundle_root) / VALUE_LOSS_FILE))
    return paths


__all__ = [
    "CURVE_FILE",
    "Curve",
    "TRAINING_COLUMNS",
    "VALUE_LOSS_FILE",
    "build_training_csv",
    "curves_from_runs",
    "emit_plots",
    "parse_training_csv",
]
