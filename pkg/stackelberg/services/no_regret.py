"""Multiplicative-weights follower dynamics and equilibrium diagnostics."""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..config import MW_EPSILON
from .games import ActionProfile, BayesianGame, TypeProfile

LOGGER = logging.getLogger(__name__)

WEIGHT_CEILING = 1e30
WEIGHT_FLOOR = 1e-300
SCALE_TOLERANCE = 1e-9

JointStrategy = dict[TypeProfile, dict[ActionProfile, float]]


class LearnerConfigurationError(ValueError):
    """Raised when payoffs cannot be mapped into the learner's [0, 1] range."""


@dataclass(slots=True)
class FollowerLearner:
    """Per-follower weight tables indexed ``[type][action]``."""

    weights: list[np.ndarray]
    epsilon: float = MW_EPSILON
    payoff_bounds: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise LearnerConfigurationError("MW epsilon must be positive")
        low, high = self.payoff_bounds
        if not high > low:
            raise LearnerConfigurationError("payoff_bounds must satisfy low < high")

    @classmethod
    def for_game(cls, game: BayesianGame, epsilon: float = MW_EPSILON) -> "FollowerLearner":
        weights = [
            np.ones((len(types), len(actions)))
            for types, actions in zip(game.type_spaces, game.action_spaces)
        ]
        return cls(weights=weights, epsilon=epsilon, payoff_bounds=game.follower_bounds)

    @property
    def n_followers(self) -> int:
        return len(self.weights)

    def probabilities(self, follower: int, type_index: int) -> np.ndarray:
        row = self.weights[follower][type_index]
        return row / row.sum()

    def strategy_rows(self) -> list[np.ndarray]:
        """Normalized strategy table for every follower."""

        return [table / table.sum(axis=1, keepdims=True) for table in self.weights]

    def scale(self, payoffs: Sequence[float] | np.ndarray) -> np.ndarray:
        low, high = self.payoff_bounds
        scaled = (np.asarray(payoffs, dtype=float) - low) / (high - low)
        if np.any(scaled < -SCALE_TOLERANCE) or np.any(scaled > 1 + SCALE_TOLERANCE):
            raise LearnerConfigurationError(
                f"Payoffs {np.asarray(payoffs).tolist()} fall outside the bounds {self.payoff_bounds}"
            )
        return np.clip(scaled, 0.0, 1.0)

    def copy(self) -> "FollowerLearner":
        return FollowerLearner(
            weights=[table.copy() for table in self.weights],
            epsilon=self.epsilon,
            payoff_bounds=self.payoff_bounds,
        )


def sample_actions(
    learner: FollowerLearner, type_profile: TypeProfile, rng: np.random.Generator
) -> ActionProfile:
    """Draw every follower's action from the row of its sampled type."""

    actions = []
    for follower, type_index in enumerate(type_profile):
        probabilities = learner.probabilities(follower, type_index)
        actions.append(int(rng.choice(len(probabilities), p=probabilities)))
    return tuple(actions)


def update_weights(
    learner: FollowerLearner,
    type_profile: TypeProfile,
    realized_actions: ActionProfile,
    counterfactual_payoffs: Sequence[Sequence[float] | np.ndarray],
) -> list[np.ndarray]:
    """Multiply each sampled row by ``(1 + epsilon) ** scaled_payoff``.

    ``counterfactual_payoffs[i][k]`` is follower ``i``'s raw payoff for
    playing ``k`` while the others keep ``realized_actions``. Returns the
    scaled vectors so callers can track regret in the same units.
    """

    scaled_rows = [learner.scale(row) for row in counterfactual_payoffs]
    base = 1.0 + learner.epsilon
    for follower, (type_index, scaled) in enumerate(zip(type_profile, scaled_rows)):
        row = learner.weights[follower][type_index]
        row *= np.power(base, scaled)
        if row.max() > WEIGHT_CEILING:
            row *= len(row) / row.sum()
        np.maximum(row, WEIGHT_FLOOR, out=row)
        if LOGGER.isEnabledFor(logging.DEBUG):
            total = learner.probabilities(follower, type_index).sum()
            if np.any(row <= 0) or not math.isclose(total, 1.0):
                LOGGER.debug("Weight row %s/%s lost positivity: %s", follower, type_index, row)
    return scaled_rows


# ---------------------------------------------------------------------------
# Play history
# ---------------------------------------------------------------------------


@dataclass(slots=True, frozen=True)
class DynamicsRecord:
    types: TypeProfile
    actions: ActionProfile
    payoffs: tuple[float, ...]


@dataclass(slots=True)
class PlayHistory:
    """Rounds of follower play plus cumulative regret bookkeeping (scaled units)."""

    records: list[DynamicsRecord] = field(default_factory=list)
    counterfactual_totals: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    realized_totals: dict[tuple[int, int], float] = field(default_factory=lambda: defaultdict(float))
    visits: Counter = field(default_factory=Counter)
    learner: FollowerLearner | None = None

    def __len__(self) -> int:
        return len(self.records)

    def record(
        self,
        types: TypeProfile,
        actions: ActionProfile,
        payoffs: Sequence[float],
        scaled_counterfactuals: Sequence[np.ndarray],
    ) -> None:
        self.records.append(DynamicsRecord(tuple(types), tuple(actions), tuple(float(p) for p in payoffs)))
        for follower, (type_index, scaled) in enumerate(zip(types, scaled_counterfactuals)):
            key = (follower, type_index)
            if key in self.counterfactual_totals:
                self.counterfactual_totals[key] += scaled
            else:
                self.counterfactual_totals[key] = np.array(scaled, dtype=float)
            self.realized_totals[key] += float(scaled[actions[follower]])
            self.visits[key] += 1


def counterfactual_payoffs(
    game: BayesianGame, leader_strategy: Any, types: TypeProfile, actions: ActionProfile
) -> list[np.ndarray]:
    """Each follower's payoff for every own action, holding the others fixed."""

    rows = []
    for follower, space in enumerate(game.action_spaces):
        row = np.empty(len(space))
        for action in range(len(space)):
            deviation = list(actions)
            deviation[follower] = action
            row[action] = game.payoff(leader_strategy, types, tuple(deviation))[follower + 1]
        rows.append(row)
    return rows


def run_dynamics(
    game: BayesianGame,
    leader_strategy: Any,
    rounds: int,
    *,
    rng: np.random.Generator | None = None,
    seed: int = 0,
    epsilon: float = MW_EPSILON,
    learner: FollowerLearner | None = None,
) -> PlayHistory:
    """Run ``rounds`` of type sampling, play and MW updates under a fixed leader strategy."""

    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    learner = learner if learner is not None else FollowerLearner.for_game(game, epsilon)
    history = PlayHistory(learner=learner)
    for _ in range(rounds):
        types = game.sample_types(rng)
        actions = sample_actions(learner, types, rng)
        rows = counterfactual_payoffs(game, leader_strategy, types, actions)
        realized = game.payoff(leader_strategy, types, actions)
        scaled = update_weights(learner, types, actions, rows)
        history.record(types, actions, realized, scaled)
    LOGGER.debug("Ran %s rounds of dynamics on %s", rounds, game.name)
    return history


def empirical_strategy(history: PlayHistory) -> JointStrategy:
    """Empirical distribution over action profiles conditioned on each observed type profile."""

    if not history.records:
        raise ValueError("empirical_strategy needs a nonempty history")
    counts: dict[TypeProfile, Counter] = defaultdict(Counter)
    for record in history.records:
        counts[record.types][record.actions] += 1
    strategy: JointStrategy = {}
    for types, counter in sorted(counts.items()):
        total = sum(counter.values())
        strategy[types] = {actions: n / total for actions, n in sorted(counter.items())}
    return strategy


def learner_strategy(game: BayesianGame, learner: FollowerLearner) -> JointStrategy:
    """Product strategy induced by the learner's current weights."""

    rows = learner.strategy_rows()
    strategy: JointStrategy = {}
    for types, _ in game.type_profiles():
        table: dict[ActionProfile, float] = {}
        for actions in game.action_profiles():
            probability = math.prod(rows[i][types[i], a] for i, a in enumerate(actions))
            if probability > 0:
                table[actions] = probability
        strategy[types] = table
    return strategy


def best_fixed_action(history: PlayHistory, follower: int, type_index: int) -> int | None:
    totals = history.counterfactual_totals.get((follower, type_index))
    if totals is None:
        return None
    return int(np.argmax(totals))


def external_regret(history: PlayHistory, follower: int, type_index: int) -> float | None:
    """Time-averaged external regret for one follower type, or ``None`` if never sampled."""

    visits = history.visits.get((follower, type_index), 0)
    if visits == 0:
        return None
    totals = history.counterfactual_totals[(follower, type_index)]
    best = float(totals[best_fixed_action(history, follower, type_index)])
    return (best - history.realized_totals[(follower, type_index)]) / visits


def mw_regret_bound(n_actions: int, epsilon: float, rounds: int) -> float:
    """Time-averaged regret bound ``ln(n) / (epsilon * T) + epsilon`` for payoffs in [0, 1]."""

    if n_actions < 1 or epsilon <= 0 or rounds < 1:
        raise ValueError("mw_regret_bound needs n_actions >= 1, epsilon > 0 and rounds >= 1")
    return math.log(n_actions) / (epsilon * rounds) + epsilon


# ---------------------------------------------------------------------------
# Equilibrium verification
# ---------------------------------------------------------------------------


@dataclass(slots=True, frozen=True)
class BcceReport:
    holds: bool
    worst_violation: float
    witness: tuple[int, int, int] | None
    worst_gain_raw: float


def verify_epsilon_bcce(
    game: BayesianGame,
    leader_strategy: Any,
    sigma: JointStrategy,
    epsilon: float,
) -> BcceReport:
    """Check every (follower, own type, fixed deviation) for an epsilon-approximate B-CCE.

    Gains are measured in the learner's scaled payoff units; ``worst_violation``
    is the largest gain minus ``epsilon``, and ``witness`` names the
    deviation ``(follower, type, action)`` that attains it.
    """

    low, high = game.follower_bounds
    width = high - low
    missing = [types for types, _ in game.type_profiles() if types not in sigma]
    if missing:
        raise LearnerConfigurationError(f"sigma is undefined for type profiles {missing}")

    worst_gain = -math.inf
    witness: tuple[int, int, int] | None = None
    for follower, types_space in enumerate(game.type_spaces):
        for own_type in range(len(types_space)):
            conditional = game.conditional_type_profiles(follower, own_type)
            if not conditional:
                continue
            n_actions = len(game.action_spaces[follower])
            on_path = 0.0
            deviations = np.zeros(n_actions)
            for types, probability in conditional:
                for actions, weight in sigma[types].items():
                    mass = probability * weight
                    if mass == 0:
                        continue
                    on_path += mass * game.payoff(leader_strategy, types, actions)[follower + 1]
                    for action in range(n_actions):
                        deviation = list(actions)
                        deviation[follower] = action
                        deviations[action] += (
                            mass * game.payoff(leader_strategy, types, tuple(deviation))[follower + 1]
                        )
            action = int(np.argmax(deviations))
            gain = float(deviations[action] - on_path)
            if gain > worst_gain:
                worst_gain = gain
                witness = (follower, own_type, action)
    worst_violation = worst_gain / width - epsilon
    return BcceReport(
        holds=worst_violation <= 1e-12,
        worst_violation=worst_violation,
        witness=witness,
        worst_gain_raw=worst_gain,
    )


def history_to_csv(history: PlayHistory) -> str:
    """Row-per-round export: ``round,types,actions,payoffs`` with ``|``-joined tuples."""

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["round", "types", "actions", "payoffs"])
    for index, record in enumerate(history.records, start=1):
        writer.writerow(
            [
                index,
                "|".join(str(t) for t in record.types),
                "|".join(str(a) for a in record.actions),
                "|".join(f"{p:.6f}" for p in record.payoffs),
            ]
        )
    return buffer.getvalue()


__all__ = [
    "BcceReport",
    "DynamicsRecord",
    "FollowerLearner",
    "JointStrategy",
    "LearnerConfigurationError",
    "PlayHistory",
    "best_fixed_action",
    "counterfactual_payoffs",
    "empirical_strategy",
    "external_regret",
    "history_to_csv",
    "learner_strategy",
    "mw_regret_bound",
    "run_dynamics",
    "sample_actions",
    "update_weights",
    "verify_epsilon_bcce",
]
