"""Pydantic schemas for experiment documents."""
from __future__ import annotations

import math
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from .config import EVAL_INTERVAL, MW_EPSILON, SCHEMA_VERSION

SettingKind = Literal[
    "maintain",
    "maintain_randomized",
    "escape",
    "normal_form",
    "matrix_design",
    "allocation",
    "mu_spm",
]
TrainerMode = Literal["centralized_critic", "plain"]

MATRIX_KINDS: frozenset[str] = frozenset(
    {"maintain", "maintain_randomized", "escape", "normal_form", "matrix_design"}
)


class _Document(BaseModel):
    """Base for every config block: unknown keys rejected, versioned."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION

    @field_validator("schema_version")
    @classmethod
    def validate_schema_version(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"Unsupported schema_version {value}; expected {SCHEMA_VERSION}")
        return value


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------


class SpmAgentConfig(_Document):
    values: List[List[float]] = Field(..., min_length=1)
    probabilities: List[float] = Field(..., min_length=1)

    @field_validator("probabilities")
    @classmethod
    def validate_probabilities(cls, value: List[float], info: ValidationInfo) -> List[float]:
        values = info.data.get("values")
        if values is not None and len(values) != len(value):
            raise ValueError("Every valuation vector needs exactly one probability")
        if any(p < 0 for p in value) or abs(math.fsum(value) - 1.0) > 1e-12:
            raise ValueError("Valuation probabilities must be nonnegative and sum to 1")
        return value


class SettingConfig(_Document):
    kind: SettingKind
    matrix: Optional[List[List[List[float]]]] = None
    randomized: bool = False
    base_matrix: Optional[List[List[List[float]]]] = None
    payments: Optional[List[float]] = None
    n_items: Optional[int] = Field(default=None, ge=1)
    message_space_size: Optional[int] = Field(default=None, ge=1)
    agents: Optional[List[SpmAgentConfig]] = None
    price_grid: Optional[List[float]] = None
    demand: Literal["additive", "unit_demand"] = "unit_demand"
    agrawal_epsilon: float = Field(default=0.2, gt=0.0, lt=1.0)

    @field_validator("payments")
    @classmethod
    def validate_payments(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and any(tau < 0 for tau in value):
            raise ValueError("payments must be nonnegative")
        return value

    @model_validator(mode="after")
    def validate_completeness(self) -> "SettingConfig":
        if self.kind == "normal_form" and self.matrix is None:
            raise ValueError("normal_form settings need a matrix")
        if self.kind == "allocation" and (self.n_items is None or self.message_space_size is None):
            raise ValueError("allocation settings need n_items and message_space_size")
        if self.kind == "mu_spm":
            if self.message_space_size is not None and self.message_space_size < 2:
                raise ValueError("mu_spm settings need message_space_size >= 2")
            if self.agents is not None and self.n_items is None:
                raise ValueError("custom mu_spm settings need n_items")
        return self

    @property
    def is_matrix(self) -> bool:
        return self.kind in MATRIX_KINDS


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class ScheduleConfig(_Document):
    equilibrium_subepisodes: int = Field(..., ge=1)
    reward_subepisodes: int = Field(..., ge=1)


class TrainConfig(_Document):
    mode: TrainerMode = "centralized_critic"
    algorithm: Literal["proximal", "reinforce"] = "proximal"
    learning_rate: float = Field(default=3e-3, gt=0.0)
    critic_learning_rate: Optional[float] = Field(default=None, gt=0.0)
    clip_ratio: float = Field(default=0.2, gt=0.0, lt=1.0)
    batch_episodes: int = Field(default=8, ge=1)
    total_steps: int = Field(default=200_000, ge=1)
    eval_interval: int = Field(default=EVAL_INTERVAL, ge=1)
    update_epochs: int = Field(default=10, ge=1)
    minibatch_size: int = Field(default=64, ge=1)
    entropy_coef: float = Field(default=0.01, ge=0.0)
    strict: bool = False
    architecture: Literal["tabular", "mlp"] = "tabular"
    hidden_width: int = Field(default=64, ge=1)
    critic_hidden_width: int = Field(default=64, ge=1)
    mw_epsilon: float = Field(default=MW_EPSILON, gt=0.0)
    seed: int = 0

    @property
    def effective_entropy_coef(self) -> float:
        return 0.0 if self.strict else self.entropy_coef


class ExperimentConfig(_Document):
    name: str = Field(..., min_length=1)
    setting: SettingConfig
    schedule: Optional[ScheduleConfig] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    modes: List[TrainerMode] = Field(default_factory=lambda: ["centralized_critic"], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: Optional[Path] = None
    verbose_rewards: bool = False
    export_traces: bool = False

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, value: List[int]) -> List[int]:
        if len(set(value)) != len(value):
            raise ValueError("seeds must be distinct")
        return value

    @field_validator("modes")
    @classmethod
    def validate_modes(cls, value: List[TrainerMode]) -> List[TrainerMode]:
        if len(set(value)) != len(value):
            raise ValueError("modes must be distinct")
        return value

    def resolved_schedule(self) -> ScheduleConfig:
        """Matrix settings default to (100, 10); Bayesian settings to (1000, 100)."""

        if self.schedule is not None:
            return self.schedule
        if self.setting.is_matrix:
            return ScheduleConfig(equilibrium_subepisodes=100, reward_subepisodes=10)
        return ScheduleConfig(equilibrium_subepisodes=1000, reward_subepisodes=100)


__all__ = [
    "ExperimentConfig",
    "MATRIX_KINDS",
    "ScheduleConfig",
    "SettingConfig",
    "SettingKind",
    "SpmAgentConfig",
    "TrainConfig",
    "TrainerMode",
]
