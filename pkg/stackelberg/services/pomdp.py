"""Stackelberg POMDP: follower dynamics and leader scoring in one long episode.

An episode runs ``T`` equilibrium sub-episodes, in which every follower's
counterfactual payoff for every own action is obtained by rolling the leader
policy out on a counterfactual state, followed by ``R`` reward sub-episodes played
against the frozen follower strategies. The leader only ever sees an
``Observation``; the phase, follower weights, types and counterfactual fields stay
hidden and are exposed to the centralized critic through ``state_features``.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from ..config import MW_EPSILON
from .games import (
    ActionProfile,
    AllocationGame,
    BayesianGame,
    InvalidActionError,
    MatrixDesignGame,
    MuSpmGame,
    NormalFormGame,
    SpmAction,
    SpmRoundState,
    TypeProfile,
    visit_agent,
)
from .no_regret import FollowerLearner, PlayHistory, sample_actions, update_weights

LOGGER = logging.getLogger(__name__)

# Each row weight of a randomized leader is drawn from {0, 1/L, ..., 1}.
WEIGHT_LEVELS = 10

LeaderAction = tuple[int, ...]
DecisionMap = Mapping[int, LeaderAction]


class RolloutError(RuntimeError):
    """Raised when a sub-episode does not terminate within its step cap."""


class Phase(str, Enum):
    EQUILIBRIUM = "equilibrium"
    REWARD = "reward"


@dataclass(frozen=True, slots=True)
class EpisodeSchedule:
    equilibrium_subepisodes: int
    reward_subepisodes: int

    def __post_init__(self) -> None:
        if self.equilibrium_subepisodes < 1 or self.reward_subepisodes < 1:
            raise ValueError("Episode schedules need at least one sub-episode of each kind")


@dataclass(frozen=True, slots=True)
class Observation:
    """What the leader sees: an observation class index and its one-hot features."""

    index: int
    features: np.ndarray
    mask: tuple[np.ndarray, ...] | None = None


@dataclass(frozen=True, slots=True)
class OneShotRound:
    """Sub-state of settings where the leader acts once per sub-episode."""

    action: LeaderAction | None = None


@dataclass(slots=True)
class PomdpState:
    phase: Phase
    learner: FollowerLearner
    types: TypeProfile
    messages: ActionProfile
    round: Any
    target_index: int = 0
    counterfactual_action: int = 0
    utilities: np.ndarray | None = None
    payoffs: np.ndarray | None = None
    subepisode: int = 0
    steps: int = 0


@dataclass(frozen=True, slots=True)
class TraceStep:
    phase: Phase
    subepisode: int
    observation: Observation
    action: LeaderAction
    reward: float
    done: bool
    fresh: bool
    state_features: np.ndarray


@dataclass(slots=True)
class EpisodeTrace:
    seed: int
    steps: list[TraceStep] = field(default_factory=list)
    history: PlayHistory = field(default_factory=PlayHistory)
    learner: FollowerLearner | None = None
    reward_payoffs: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def total_reward(self) -> float:
        return float(sum(step.reward for step in self.steps))

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.reward_payoffs)) if self.reward_payoffs else 0.0


class Actor(Protocol):
    def reset(self) -> None: ...

    def decide(self, observation: Observation) -> tuple[LeaderAction, bool]:
        """Return the chosen action and whether it was freshly drawn."""


class MappedActor:
    """Deterministic actor reading a fixed observation-to-action map."""

    def __init__(self, decisions: DecisionMap, default: LeaderAction | None = None) -> None:
        self.decisions = dict(decisions)
        self.default = default
        self._seen: set[int] = set()

    def reset(self) -> None:
        self._seen.clear()

    def decide(self, observation: Observation) -> tuple[LeaderAction, bool]:
        fresh = observation.index not in self._seen
        self._seen.add(observation.index)
        action = self.decisions.get(observation.index, self.default)
        if action is None:
            raise InvalidActionError(f"No decision for observation {observation.index}")
        return tuple(action), fresh


# ---------------------------------------------------------------------------
# Setting protocols
# ---------------------------------------------------------------------------


class SettingProtocol:
    """How one setting exposes observations, validates actions and ends rounds."""

    heads: tuple[int, ...]
    observation_count: int
    step_cap: int = 1

    def __init__(self, game: BayesianGame) -> None:
        self.game = game

    def start(self) -> Any:
        return OneShotRound()

    def observe(self, messages: ActionProfile, round_state: Any) -> int:
        return 0

    def mask(self, messages: ActionProfile, round_state: Any) -> tuple[np.ndarray, ...] | None:
        return None

    def observation_mask(self, index: int) -> tuple[np.ndarray, ...] | None:
        return None

    def advance(self, round_state: Any, action: LeaderAction, types: TypeProfile) -> Any:
        self._check_ranges(action)
        return OneShotRound(tuple(int(a) for a in action))

    def done(self, round_state: Any) -> bool:
        return round_state.action is not None

    def payoffs(self, round_state: Any, types: TypeProfile, messages: ActionProfile) -> np.ndarray:
        return self.game.payoff(self.decode(round_state.action), types, messages)

    def decode(self, action: LeaderAction) -> Any:
        return int(action[0])

    def strategy_from_map(self, decisions: DecisionMap) -> Any:
        """Leader strategy in the game's own terms for a deterministic decision map."""

        return self.decode(decisions[0])

    def _check_ranges(self, action: LeaderAction) -> None:
        if len(action) != len(self.heads):
            raise InvalidActionError(f"Expected {len(self.heads)} action heads, got {action!r}")
        for choice, size in zip(action, self.heads):
            if not 0 <= int(choice) < size:
                raise InvalidActionError(f"Action {action!r} is out of range for heads {self.heads}")


class IndexProtocol(SettingProtocol):
    """Leader picks one index: a row of a normal form game or a payment."""

    def __init__(self, game: BayesianGame, size: int) -> None:
        super().__init__(game)
        self.heads = (size,)
        self.observation_count = 1


class WeightVectorProtocol(SettingProtocol):
    """One head per row; each head picks a weight level, weights are then normalized."""

    def __init__(self, game: NormalFormGame, levels: int = WEIGHT_LEVELS) -> None:
        super().__init__(game)
        self.levels = levels
        self.heads = (levels + 1,) * game.size
        self.observation_count = 1

    def decode(self, action: LeaderAction) -> np.ndarray:
        weights = np.asarray(action, dtype=float) / self.levels
        if weights.sum() <= 0:
            return np.full(len(weights), 1.0 / len(weights))
        return weights / weights.sum()


class AllocationProtocol(SettingProtocol):
    """The leader observes the received message and allocates an item."""

    def __init__(self, game: AllocationGame) -> None:
        super().__init__(game)
        self.heads = (game.n_items,)
        self.observation_count = game.message_space_size

    def observe(self, messages: ActionProfile, round_state: Any) -> int:
        return int(messages[0])

    def strategy_from_map(self, decisions: DecisionMap) -> tuple[int, ...]:
        return tuple(self.decode(decisions[m]) for m in range(self.observation_count))


class SpmProtocol(SettingProtocol):
    """Sequential posted prices after a messaging round.

    Heads are the next agent plus one price index per item. Prices for items
    that are already allocated must be index 0 and are masked to it.
    """

    def __init__(self, game: MuSpmGame) -> None:
        super().__init__(game)
        setting = game.setting
        self.setting = setting
        self.heads = (setting.n_agents,) + (len(setting.price_grid),) * setting.n_items
        self._message_codes = setting.message_space_size**setting.n_agents
        self._visit_codes = 2**setting.n_agents
        self.observation_count = (
            self._message_codes * self._visit_codes * (setting.n_agents + 1) ** setting.n_items
        )
        self.step_cap = game.step_cap

    def start(self) -> SpmRoundState:
        return SpmRoundState.initial(self.setting)

    def observe(self, messages: ActionProfile, round_state: SpmRoundState) -> int:
        setting = self.setting
        message_code = sum(int(m) * setting.message_space_size**i for i, m in enumerate(messages))
        visit_code = sum(1 << i for i, seen in enumerate(round_state.visited) if seen)
        allocation_code = sum(
            (owner + 1) * (setting.n_agents + 1) ** item
            for item, owner in enumerate(round_state.allocation)
        )
        return message_code + self._message_codes * (visit_code + self._visit_codes * allocation_code)

    def mask(self, messages: ActionProfile, round_state: SpmRoundState) -> tuple[np.ndarray, ...]:
        agents = np.array([not seen for seen in round_state.visited])
        masks = [agents]
        for owner in round_state.allocation:
            item_mask = np.ones(len(self.setting.price_grid), dtype=bool)
            if owner >= 0:
                item_mask[1:] = False
            masks.append(item_mask)
        return tuple(masks)

    def decode_observation(self, index: int) -> tuple[ActionProfile, SpmRoundState]:
        """Invert ``observe``; payments are not observed and come back as zeros."""

        setting = self.setting
        message_code, rest = index % self._message_codes, index // self._message_codes
        visit_code, allocation_code = rest % self._visit_codes, rest // self._visit_codes
        messages = []
        for _ in range(setting.n_agents):
            messages.append(message_code % setting.message_space_size)
            message_code //= setting.message_space_size
        allocation = []
        for _ in range(setting.n_items):
            allocation.append(allocation_code % (setting.n_agents + 1) - 1)
            allocation_code //= setting.n_agents + 1
        round_state = SpmRoundState(
            allocation=tuple(allocation),
            visited=tuple(bool(visit_code >> i & 1) for i in range(setting.n_agents)),
            payments=(0.0,) * setting.n_agents,
        )
        return tuple(messages), round_state

    def observation_mask(self, index: int) -> tuple[np.ndarray, ...]:
        messages, round_state = self.decode_observation(index)
        return self.mask(messages, round_state)

    def to_spm_action(self, round_state: SpmRoundState, action: LeaderAction) -> SpmAction:
        self._check_ranges(action)
        agent, *price_indices = (int(a) for a in action)
        for item, owner in enumerate(round_state.allocation):
            if owner >= 0 and price_indices[item] != 0:
                raise InvalidActionError(f"Item {item} is already allocated and cannot be priced")
        prices = tuple(
            (item, self.setting.price_grid[price_indices[item]]) for item in round_state.residual_items
        )
        return SpmAction(agent, prices)

    def advance(
        self, round_state: SpmRoundState, action: LeaderAction, types: TypeProfile
    ) -> SpmRoundState:
        return visit_agent(self.setting, round_state, self.to_spm_action(round_state, action), types)

    def done(self, round_state: SpmRoundState) -> bool:
        return round_state.done

    def payoffs(
        self, round_state: SpmRoundState, types: TypeProfile, messages: ActionProfile
    ) -> np.ndarray:
        return self.game.outcome_payoffs(types, round_state)

    def default_action(self, round_state: SpmRoundState) -> LeaderAction:
        agent = round_state.residual_agents[0] if round_state.residual_agents else 0
        return (agent,) + (0,) * self.setting.n_items

    def strategy_from_map(self, decisions: DecisionMap):
        def mechanism(messages: tuple[int, ...], round_state: SpmRoundState) -> SpmAction:
            index = self.observe(messages, round_state)
            action = decisions.get(index, self.default_action(round_state))
            return self.to_spm_action(round_state, tuple(action))

        return mechanism


def protocol_for(game: BayesianGame, weight_levels: int = WEIGHT_LEVELS) -> SettingProtocol:
    if isinstance(game, MuSpmGame):
        return SpmProtocol(game)
    if isinstance(game, AllocationGame):
        return AllocationProtocol(game)
    if isinstance(game, MatrixDesignGame):
        return IndexProtocol(game, len(game.payments))
    if isinstance(game, NormalFormGame):
        if game.randomized:
            return WeightVectorProtocol(game, weight_levels)
        return IndexProtocol(game, game.size)
    raise TypeError(f"No POMDP protocol for {type(game).__name__}")


# ---------------------------------------------------------------------------
# The POMDP
# ---------------------------------------------------------------------------


class StackelbergPomdp:
    """Runs long episodes for one game and schedule."""

    def __init__(
        self,
        game: BayesianGame,
        schedule: EpisodeSchedule,
        *,
        epsilon: float = MW_EPSILON,
        protocol: SettingProtocol | None = None,
    ) -> None:
        self.game = game
        self.schedule = schedule
        self.epsilon = epsilon
        self.protocol = protocol or protocol_for(game)
        self._counterfactual_width = max(len(space) for space in game.action_spaces)
        self.state_feature_size = len(self.state_features(self._blank_state()))

    # -- observation and features -------------------------------------------------

    def observe(self, state: PomdpState) -> Observation:
        index = self.protocol.observe(state.messages, state.round)
        features = np.zeros(self.protocol.observation_count)
        features[index] = 1.0
        return Observation(index, features, self.protocol.mask(state.messages, state.round))

    def state_features(self, state: PomdpState) -> np.ndarray:
        """Full hidden-state encoding for the centralized critic."""

        game = self.game
        equilibrium = state.phase is Phase.EQUILIBRIUM
        horizon = (
            self.schedule.equilibrium_subepisodes if equilibrium else self.schedule.reward_subepisodes
        )
        parts: list[np.ndarray] = [
            np.array([1.0 if equilibrium else 0.0, state.subepisode / horizon]),
            *(rows.ravel() for rows in state.learner.strategy_rows()),
        ]
        for follower, type_index in enumerate(state.types):
            parts.append(np.eye(len(game.type_spaces[follower]))[type_index])
        for follower, message in enumerate(state.messages):
            parts.append(np.eye(len(game.action_spaces[follower]))[message])
        target = np.zeros(game.n_followers)
        counterfactual = np.zeros(self._counterfactual_width)
        if equilibrium:
            target[state.target_index] = 1.0
            counterfactual[state.counterfactual_action] = 1.0
        parts.extend([target, counterfactual, self.observe(state).features])
        return np.concatenate(parts)

    def _blank_state(self) -> PomdpState:
        return PomdpState(
            phase=Phase.REWARD,
            learner=FollowerLearner.for_game(self.game, self.epsilon),
            types=self.game.type_profiles()[0][0],
            messages=(0,) * self.game.n_followers,
            round=self.protocol.start(),
        )

    # -- transitions -------------------------------------------------------------

    def step(
        self, state: PomdpState, leader_action: LeaderAction
    ) -> tuple[PomdpState, Observation, float, bool]:
        """Apply one leader action; reward is paid only at reward-phase terminals."""

        next_round = self.protocol.advance(state.round, tuple(leader_action), state.types)
        next_state = replace(state, round=next_round, steps=state.steps + 1)
        done = self.protocol.done(next_round)
        if not done and next_state.steps >= self.protocol.step_cap:
            raise RolloutError(
                f"Sub-episode exceeded {self.protocol.step_cap} steps on {self.game.name}"
            )
        reward = 0.0
        if done:
            payoffs = self.protocol.payoffs(next_round, state.types, state.messages)
            next_state.payoffs = payoffs
            if state.phase is Phase.REWARD:
                reward = float(payoffs[0])
        return next_state, self.observe(next_state), reward, done

    def rollout(self, state: PomdpState, actor: Actor, trace: EpisodeTrace) -> np.ndarray:
        """Play one sub-episode to termination and return the payoff vector."""

        state = replace(state, round=self.protocol.start(), steps=0, payoffs=None)
        observation = self.observe(state)
        while True:
            action, fresh = actor.decide(observation)
            features = self.state_features(state)
            state, next_observation, reward, done = self.step(state, action)
            trace.steps.append(
                TraceStep(
                    phase=state.phase,
                    subepisode=state.subepisode,
                    observation=observation,
                    action=tuple(action),
                    reward=reward,
                    done=done,
                    fresh=fresh,
                    state_features=features,
                )
            )
            if done:
                return state.payoffs
            observation = next_observation

    def run_equilibrium_phase(
        self,
        learner: FollowerLearner,
        actor: Actor,
        rng: np.random.Generator,
        trace: EpisodeTrace,
    ) -> FollowerLearner:
        game = self.game
        for subepisode in range(self.schedule.equilibrium_subepisodes):
            types = game.sample_types(rng)
            messages = sample_actions(learner, types, rng)
            rows: list[np.ndarray] = []
            leader_payoff = 0.0
            for follower, space in enumerate(game.action_spaces):
                utilities = np.zeros(len(space))
                for deviation in range(len(space)):
                    deviated = list(messages)
                    deviated[follower] = deviation
                    state = PomdpState(
                        phase=Phase.EQUILIBRIUM,
                        learner=learner,
                        types=types,
                        messages=tuple(deviated),
                        round=None,
                        target_index=follower,
                        counterfactual_action=deviation,
                        utilities=utilities,
                        subepisode=subepisode,
                    )
                    payoffs = self.rollout(state, actor, trace)
                    utilities[deviation] = payoffs[follower + 1]
                    if follower == 0 and deviation == messages[0]:
                        leader_payoff = float(payoffs[0])
                rows.append(utilities)
            scaled = update_weights(learner, types, messages, rows)
            realized = [leader_payoff, *(row[m] for row, m in zip(rows, messages))]
            trace.history.record(types, messages, realized, scaled)
        return learner

    def run_reward_phase(
        self,
        learner: FollowerLearner,
        actor: Actor,
        rng: np.random.Generator,
        trace: EpisodeTrace,
    ) -> list[float]:
        payoffs: list[float] = []
        for subepisode in range(self.schedule.reward_subepisodes):
            types = self.game.sample_types(rng)
            messages = sample_actions(learner, types, rng)
            state = PomdpState(
                phase=Phase.REWARD,
                learner=learner,
                types=types,
                messages=messages,
                round=None,
                subepisode=subepisode,
            )
            payoffs.append(float(self.rollout(state, actor, trace)[0]))
        trace.reward_payoffs.extend(payoffs)
        return payoffs

    def run_episode(self, actor: Actor, seed: int) -> EpisodeTrace:
        """Fresh learner, equilibrium phase, then reward phase; deterministic in ``seed``."""

        rng = np.random.default_rng(seed)
        actor.reset()
        learner = FollowerLearner.for_game(self.game, self.epsilon)
        trace = EpisodeTrace(seed=seed, learner=learner)
        trace.history.learner = learner
        self.run_equilibrium_phase(learner, actor, rng, trace)
        self.run_reward_phase(learner, actor, rng, trace)
        return trace


def run_episode(
    game: BayesianGame,
    actor: Actor,
    schedule: EpisodeSchedule,
    seed: int,
    *,
    epsilon: float = MW_EPSILON,
) -> EpisodeTrace:
    return StackelbergPomdp(game, schedule, epsilon=epsilon).run_episode(actor, seed)


def trace_to_csv(traces: Sequence[EpisodeTrace]) -> str:
    """Row-per-step export: ``episode,phase,subepisode,observation,action,reward``."""

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["episode", "phase", "subepisode", "observation", "action", "reward"])
    for episode, trace in enumerate(traces):
        for step in trace.steps:
            writer.writerow(
                [
                    episode,
                    step.phase.value,
                    step.subepisode,
                    step.observation.index,
                    "|".join(str(a) for a in step.action),
                    f"{step.reward:.6f}",
                ]
            )
    return buffer.getvalue()


__all__ = [
    "Actor",
    "AllocationProtocol",
    "DecisionMap",
    "EpisodeSchedule",
    "EpisodeTrace",
    "IndexProtocol",
    "InvalidActionError",
    "LeaderAction",
    "MappedActor",
    "Observation",
    "OneShotRound",
    "Phase",
    "PomdpState",
    "RolloutError",
    "SettingProtocol",
    "SpmProtocol",
    "StackelbergPomdp",
    "TraceStep",
    "WEIGHT_LEVELS",
    "WeightVectorProtocol",
    "protocol_for",
    "run_episode",
    "trace_to_csv",
]
