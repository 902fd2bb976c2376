"""Convenient re-exports for the simulation service layer."""
from __future__ import annotations

from .bundles import ExperimentError, ResultBundleRepository, RunRecord
from .games import (
    BayesianGame,
    GameConfigurationError,
    InvalidActionError,
    build_game,
    make_escape,
    make_maintain,
    make_matrix_design,
    make_mu_spm,
    make_simple_allocation,
)
from .no_regret import (
    FollowerLearner,
    LearnerConfigurationError,
    run_dynamics,
    verify_epsilon_bcce,
)
from .oracle import (
    OracleSizeError,
    exact_objective,
    oracle_report,
    solve_deterministic_stackelberg,
    solve_randomized_stackelberg,
    solve_spm_exhaustive,
)
from .pomdp import EpisodeSchedule, RolloutError, StackelbergPomdp, run_episode
from .policy import CachedActor, CriticNet, LeaderPolicy
from .trainer import LeaderTrainer, TrainingError, policy_gradient_estimate

__all__ = [
    "BayesianGame",
    "CachedActor",
    "CriticNet",
    "EpisodeSchedule",
    "ExperimentError",
    "FollowerLearner",
    "GameConfigurationError",
    "InvalidActionError",
    "LeaderPolicy",
    "LeaderTrainer",
    "LearnerConfigurationError",
    "OracleSizeError",
    "ResultBundleRepository",
    "RolloutError",
    "RunRecord",
    "StackelbergPomdp",
    "TrainingError",
    "build_game",
    "exact_objective",
    "make_escape",
    "make_maintain",
    "make_matrix_design",
    "make_mu_spm",
    "make_simple_allocation",
    "oracle_report",
    "policy_gradient_estimate",
    "run_dynamics",
    "run_episode",
    "solve_deterministic_stackelberg",
    "solve_randomized_stackelberg",
    "solve_spm_exhaustive",
    "verify_epsilon_bcce",
]
