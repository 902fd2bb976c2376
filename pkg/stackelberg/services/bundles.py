"""Persistence for experiment result bundles."""
from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from ..config import SCHEMA_VERSION

MANIFEST_NAME = "bundle.json"
MERGED_LOG_NAME = "training_log.csv"
VERDICT_NAME = "verdict.json"


class ExperimentError(RuntimeError):
    """Raised when a bundle is missing, empty or cannot be verified."""


@dataclass
class RunRecord:
    """Outcome of one (mode, seed) training run."""

    mode: str
    seed: int
    status: str
    error: str | None = None
    log_path: str | None = None
    checkpoint_path: str | None = None
    steps: list[int] = field(default_factory=list)
    eval_rewards: list[float] = field(default_factory=list)
    value_losses: list[float] = field(default_factory=list)
    greedy_decisions: dict[str, list[int]] = field(default_factory=dict)
    gap: float | None = None
    trace_path: str | None = None
    dynamics_path: str | None = None

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def best_eval(self) -> float | None:
        return max(self.eval_rewards) if self.eval_rewards else None

    @property
    def final_eval(self) -> float | None:
        return self.eval_rewards[-1] if self.eval_rewards else None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class ResultBundleRepository:
    """Thread-safe JSON manifest plus the file layout of one bundle directory."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.manifest_path = self.root / MANIFEST_NAME
        self._lock = threading.Lock()

    # -- layout -------------------------------------------------------------------

    def seed_log_path(self, mode: str, seed: int) -> Path:
        return self.root / "seeds" / f"{mode}_seed{seed}.csv"

    def checkpoint_path(self, mode: str, seed: int) -> Path:
        return self.root / "checkpoints" / f"{mode}_seed{seed}.ckpt"

    def trace_path(self, mode: str, seed: int) -> Path:
        return self.root / "traces" / f"{mode}_seed{seed}.csv"

    def dynamics_path(self, mode: str, seed: int) -> Path:
        return self.root / "dynamics" / f"{mode}_seed{seed}.csv"

    @property
    def merged_log_path(self) -> Path:
        return self.root / MERGED_LOG_NAME

    @property
    def verdict_path(self) -> Path:
        return self.root / VERDICT_NAME

    # -- manifest -----------------------------------------------------------------

    def initialize(self, *, name: str, config: dict[str, Any]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "name": name,
            "config": config,
            "oracle": None,
            "runs": [],
        }
        with self._lock:
            self._write(manifest)

    def record_run(self, record: RunRecord) -> None:
        with self._lock:
            manifest = self._read()
            runs = [
                run
                for run in manifest["runs"]
                if (run["mode"], run["seed"]) != (record.mode, record.seed)
            ]
            runs.append(record.to_dict())
            manifest["runs"] = runs
            self._write(manifest)

    def record_oracle(self, report: dict[str, Any] | None) -> None:
        with self._lock:
            manifest = self._read()
            manifest["oracle"] = report
            self._write(manifest)

    def load(self) -> dict[str, Any]:
        with self._lock:
            return self._read()

    def runs(self) -> list[RunRecord]:
        return [RunRecord(**run) for run in self.load()["runs"]]

    def completed_runs(self) -> list[RunRecord]:
        return [run for run in self.runs() if run.completed]

    def _read(self) -> dict[str, Any]:
        if not self.manifest_path.exists():
            raise ExperimentError(f"No result bundle at {self.root}")
        try:
            manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ExperimentError(f"Bundle manifest {self.manifest_path} is corrupt") from exc
        if manifest.get("schema_version") != SCHEMA_VERSION:
            raise ExperimentError(
                f"Bundle schema_version {manifest.get('schema_version')!r} is not {SCHEMA_VERSION}"
            )
        return manifest

    def _write(self, manifest: dict[str, Any]) -> None:
        manifest["runs"] = sorted(manifest["runs"], key=lambda run: (run["mode"], run["seed"]))
        payload = json.dumps(manifest, indent=2, ensure_ascii=False, sort_keys=True)
        self.manifest_path.write_text(payload + "\n", encoding="utf-8")


__all__ = [
    "ExperimentError",
    "MANIFEST_NAME",
    "MERGED_LOG_NAME",
    "ResultBundleRepository",
    "RunRecord",
    "VERDICT_NAME",
]
