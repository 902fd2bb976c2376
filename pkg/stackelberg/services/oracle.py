"""Exhaustive ground-truth solvers for the desk-scale settings.

Every solver enumerates: leader actions against follower best responses,
leader mixtures on a simplex grid, posted-price decision trees, or cache
maps of a tabular policy. Each raises ``OracleSizeError`` rather than run
past its enumeration cap.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from ..config import MW_EPSILON
from .games import (
    ActionProfile,
    BayesianGame,
    MuSpmGame,
    NormalFormGame,
    SpmAction,
    SpmRoundState,
    SpmSetting,
    TypeProfile,
    make_mu_spm,
)
from .no_regret import FollowerLearner, counterfactual_payoffs
from .pomdp import EpisodeSchedule, Observation, SettingProtocol, protocol_for
from .policy import LeaderPolicy

LOGGER = logging.getLogger(__name__)

PROFILE_CAP = 1_000_000
BRANCH_CAP = 100_000
TREE_CAP = 1_000_000
TIE_CAP = 64
TOLERANCE = 1e-9


class OracleSizeError(RuntimeError):
    """Raised when an enumeration would exceed its cap."""


@dataclass(slots=True)
class StackelbergSolution:
    leader_strategy: Any
    follower_response: dict[tuple[int, int], int]
    leader_value: float
    follower_values: list[float]
    enumeration_size: int
    optimal_actions: list[Any] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Matrix settings
# ---------------------------------------------------------------------------


def _weakly_dominant(
    game: BayesianGame, leader_action: Any, types: TypeProfile, follower: int
) -> list[int]:
    spaces = [range(len(space)) for space in game.action_spaces]
    others = [spaces[j] for j in range(game.n_followers) if j != follower]
    dominant = []
    for candidate in spaces[follower]:
        holds = True
        for rest in itertools.product(*others):
            base = list(rest)
            base.insert(follower, candidate)
            mine = game.payoff(leader_action, types, tuple(base))[follower + 1]
            for alternative in spaces[follower]:
                base[follower] = alternative
                if game.payoff(leader_action, types, tuple(base))[follower + 1] > mine + TOLERANCE:
                    holds = False
                    break
            if not holds:
                break
        if holds:
            dominant.append(candidate)
    return dominant


def _single_follower_response(
    game: BayesianGame, leader_action: Any
) -> tuple[float, np.ndarray, dict[tuple[int, int], int]]:
    value = 0.0
    follower_value = np.zeros(1)
    response: dict[tuple[int, int], int] = {}
    for types, probability in game.type_profiles():
        payoffs = [game.payoff(leader_action, types, (a,)) for a in range(len(game.action_spaces[0]))]
        best = max(p[1] for p in payoffs)
        # Follower-optimistic: among best responses take the leader's favourite.
        choice = max(
            (a for a, p in enumerate(payoffs) if p[1] >= best - TOLERANCE),
            key=lambda a: (payoffs[a][0], -a),
        )
        response[(0, types[0])] = choice
        value += probability * payoffs[choice][0]
        follower_value += probability * payoffs[choice][1:]
    return value, follower_value, response


def _multi_follower_response(
    game: BayesianGame, leader_action: Any
) -> tuple[float, np.ndarray, dict[tuple[int, int], int]]:
    value = 0.0
    follower_value = np.zeros(game.n_followers)
    response: dict[tuple[int, int], int] = {}
    for types, probability in game.type_profiles():
        dominant = [_weakly_dominant(game, leader_action, types, i) for i in range(game.n_followers)]
        if all(dominant):
            profiles = list(itertools.product(*dominant))
            choice = max(profiles, key=lambda a: game.payoff(leader_action, types, a)[0])
        else:
            profiles = list(game.action_profiles())
            choice = min(profiles, key=lambda a: game.payoff(leader_action, types, a)[0])
        payoffs = game.payoff(leader_action, types, choice)
        for follower, action in enumerate(choice):
            response[(follower, types[follower])] = action
        value += probability * payoffs[0]
        follower_value += probability * payoffs[1:]
    return value, follower_value, response


def solve_deterministic_stackelberg(game: BayesianGame) -> StackelbergSolution:
    """Best deterministic commitment.

    One follower best-responds with ties resolved in the leader's favour.
    Several followers play a weakly dominant profile when one exists; a
    leader action without one is scored by its worst pure outcome.
    """

    leader_actions = list(game.leader_actions())
    size = len(leader_actions) * len(game.type_profiles()) * math.prod(
        len(space) for space in game.action_spaces
    )
    if size > PROFILE_CAP:
        raise OracleSizeError(f"{size} joint profiles exceed the cap of {PROFILE_CAP}")
    respond = _single_follower_response if game.n_followers == 1 else _multi_follower_response
    scored = []
    for leader_action in leader_actions:
        value, follower_value, response = respond(game, leader_action)
        scored.append((leader_action, value, follower_value, response))
    best_value = max(value for _, value, _, _ in scored)
    optimal = [entry for entry in scored if entry[1] >= best_value - TOLERANCE]
    leader_action, value, follower_value, response = optimal[0]
    LOGGER.info("Deterministic oracle for %s enumerated %s profiles", game.name, size)
    return StackelbergSolution(
        leader_strategy=leader_action,
        follower_response=response,
        leader_value=float(value),
        follower_values=[float(v) for v in follower_value],
        enumeration_size=size,
        optimal_actions=[entry[0] for entry in optimal],
    )


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head, *tail)


def _score_mixtures(matrix: np.ndarray, mixtures: np.ndarray) -> np.ndarray:
    """Leader value per mixture with leader-pessimistic follower ties."""

    follower = mixtures @ matrix[:, :, 1]
    leader = mixtures @ matrix[:, :, 0]
    best = follower.max(axis=1, keepdims=True)
    return np.where(follower >= best - TOLERANCE, leader, np.inf).min(axis=1)


def solve_randomized_stackelberg(
    game: NormalFormGame, grid_resolution: float = 0.01, refinements: int = 2
) -> StackelbergSolution:
    """Grid search over leader mixtures against a weak (pessimistic) follower.

    After the coarse grid, each refinement searches a ten times finer grid
    within one coarse cell of the incumbent.
    """

    if game.n_followers != 1 or not isinstance(game, NormalFormGame):
        raise ValueError("Randomized commitments are solved for single-follower normal form games")
    if not 0 < grid_resolution <= 1:
        raise ValueError("grid_resolution must lie in (0, 1]")
    size = game.size
    steps = int(round(1.0 / grid_resolution))
    count = math.comb(steps + size - 1, size - 1)
    if count > PROFILE_CAP:
        raise OracleSizeError(f"{count} grid points exceed the cap of {PROFILE_CAP}")
    mixtures = np.array(list(_compositions(steps, size)), dtype=float) / steps
    scores = _score_mixtures(game.matrix, mixtures)
    best = int(np.argmax(scores))
    incumbent, value = mixtures[best], float(scores[best])
    enumerated = len(mixtures)

    cell = 1.0 / steps
    for _ in range(refinements):
        fine = cell / 10.0
        offsets = np.array(list(itertools.product(range(-10, 11), repeat=size - 1)), dtype=float)
        if len(offsets) > PROFILE_CAP:
            raise OracleSizeError("Refinement grid exceeds the cap")
        free = incumbent[:-1] + offsets * fine
        last = 1.0 - free.sum(axis=1, keepdims=True)
        candidates = np.round(np.hstack([free, last]), 12)
        candidates = candidates[np.all(candidates >= 0, axis=1) & np.all(candidates <= 1, axis=1)]
        scores = _score_mixtures(game.matrix, candidates)
        enumerated += len(candidates)
        best = int(np.argmax(scores))
        if scores[best] > value + TOLERANCE:
            incumbent, value = candidates[best], float(scores[best])
        cell = fine

    follower_payoffs = incumbent @ game.matrix[:, :, 1]
    leader_payoffs = incumbent @ game.matrix[:, :, 0]
    ties = np.flatnonzero(follower_payoffs >= follower_payoffs.max() - TOLERANCE)
    column = int(ties[np.argmin(leader_payoffs[ties])])
    LOGGER.info("Randomized oracle for %s scored %s mixtures", game.name, enumerated)
    return StackelbergSolution(
        leader_strategy=tuple(float(w) for w in incumbent),
        follower_response={(0, 0): column},
        leader_value=value,
        follower_values=[float(follower_payoffs[column])],
        enumeration_size=enumerated,
        optimal_actions=[tuple(float(w) for w in incumbent)],
    )


# ---------------------------------------------------------------------------
# Sequential posted prices
# ---------------------------------------------------------------------------

NodeKey = tuple[tuple[int, ...], tuple[bool, ...]]
Tree = dict[NodeKey, SpmAction]
Profiles = list[tuple[TypeProfile, float]]


@dataclass(slots=True)
class SpmMechanism:
    """Message-routed decision trees over the observed allocation history.

    ``routes`` sends every message profile to the on-path profile whose
    tree it uses; nodes a tree does not cover fall back to visiting the
    lowest-index remaining agent at the lowest grid prices.
    """

    setting: SpmSetting
    routes: dict[ActionProfile, ActionProfile]
    trees: dict[ActionProfile, Tree]

    def __call__(self, messages: tuple[int, ...], state: SpmRoundState) -> SpmAction:
        tree = self.trees[self.routes[tuple(messages)]]
        action = tree.get((state.allocation, state.visited))
        if action is not None:
            return action
        lowest = self.setting.price_grid[0]
        return SpmAction(state.residual_agents[0], tuple((i, lowest) for i in state.residual_items))

    def decisions(self, protocol: SettingProtocol) -> dict[int, tuple[int, ...]]:
        """Decision map over POMDP observation indices for every covered node."""

        grid = self.setting.price_grid
        decisions: dict[int, tuple[int, ...]] = {}
        for messages, route in self.routes.items():
            for (allocation, visited), action in self.trees[route].items():
                state = SpmRoundState(allocation, visited, (0.0,) * self.setting.n_agents)
                prices = dict(action.prices)
                indices = tuple(
                    grid.index(prices[item]) if item in prices else 0
                    for item in range(self.setting.n_items)
                )
                decisions[protocol.observe(messages, state)] = (action.agent, *indices)
        return decisions

    def describe(self) -> list[str]:
        lines = []
        for messages in sorted(self.routes):
            route = self.routes[messages]
            for (allocation, visited), action in sorted(self.trees[route].items()):
                prices = ", ".join(f"item {i} at {p:.1f}" for i, p in action.prices)
                lines.append(
                    f"messages={messages} allocation={allocation} visited={visited}: "
                    f"visit agent {action.agent} ({prices})"
                )
        return lines


@dataclass(slots=True)
class SpmSolution:
    mechanism: SpmMechanism
    messaging: tuple[tuple[int, ...], ...] | None
    expected_welfare: float
    first_best: float
    dominant: bool | None
    lost_realizations: list[dict[str, Any]]
    enumeration_size: int


def _candidate_prices(setting: SpmSetting, agent: int, item: int) -> list[float]:
    """Lowest and highest grid price of every purchase class for this agent and item."""

    values = sorted({values[item] for values, _ in setting.valuations[agent]})
    classes: dict[int, list[float]] = {}
    for price in setting.price_grid:
        buyers = sum(1 for v in values if v - price > 0)
        classes.setdefault(buyers, []).append(price)
    chosen = sorted({p for prices in classes.values() for p in (prices[0], prices[-1])})
    return chosen


class _TreeSearch:
    def __init__(self, setting: SpmSetting) -> None:
        self.setting = setting
        self.evaluations = 0
        self._prices = {
            (agent, item): _candidate_prices(setting, agent, item)
            for agent in range(setting.n_agents)
            for item in range(setting.n_items)
        }

    def options(self, state: SpmRoundState) -> Iterator[SpmAction]:
        residual = state.residual_items
        for agent in state.residual_agents:
            grids = [self._prices[(agent, item)] for item in residual]
            for prices in itertools.product(*grids):
                yield SpmAction(agent, tuple(zip(residual, prices)))

    def optimal_trees(self, state: SpmRoundState, profiles: Profiles) -> tuple[float, list[Tree]]:
        """Welfare-optimal trees for the type profiles reaching ``state``, ties kept."""

        if state.done or not profiles:
            return 0.0, [{}]
        setting = self.setting
        scored: list[tuple[float, SpmAction, list[Tree]]] = []
        for action in self.options(state):
            self.evaluations += 1
            if self.evaluations > TREE_CAP:
                raise OracleSizeError(f"Posted-price search exceeded {TREE_CAP} evaluations")
            prices = dict(action.prices)
            groups: dict[tuple[int, ...], Profiles] = {}
            gain = 0.0
            for types, probability in profiles:
                values = setting.values(action.agent, types[action.agent])
                bundle = setting.choose_bundle(values, prices)
                gain += probability * math.fsum(values[item] for item in bundle)
                groups.setdefault(bundle, []).append((types, probability))
            value = gain
            children: list[list[Tree]] = []
            for bundle, group in groups.items():
                allocation = list(state.allocation)
                for item in bundle:
                    allocation[item] = action.agent
                visited = list(state.visited)
                visited[action.agent] = True
                child = SpmRoundState(tuple(allocation), tuple(visited), state.payments)
                child_value, child_trees = self.optimal_trees(child, group)
                value += child_value
                children.append(child_trees)
            scored.append((value, action, children))
        best = max(value for value, _, _ in scored)
        trees: list[Tree] = []
        key = (state.allocation, state.visited)
        for value, action, children in scored:
            if value < best - TOLERANCE:
                continue
            for combination in itertools.islice(itertools.product(*children), TIE_CAP * 4):
                tree: Tree = {key: action}
                for subtree in combination:
                    tree.update(subtree)
                trees.append(tree)
            if len(trees) >= TIE_CAP * 4:
                break
        return best, trees


def _messaging_profiles(setting: SpmSetting) -> Iterator[tuple[tuple[int, ...], ...]]:
    per_agent = [
        list(itertools.product(range(setting.message_space_size), repeat=len(law)))
        for law in setting.valuations
    ]
    return itertools.product(*per_agent)


def _nearest(target: ActionProfile, candidates: Sequence[ActionProfile]) -> ActionProfile:
    return min(candidates, key=lambda c: (sum(a != b for a, b in zip(c, target)), c))


def _expected_welfare(
    game: MuSpmGame, mechanism: SpmMechanism, messaging: Sequence[Sequence[int]]
) -> float:
    total = 0.0
    for types, probability in game.type_profiles():
        messages = tuple(messaging[i][t] for i, t in enumerate(types))
        state = game.run_mechanism(mechanism, types, messages)
        total += probability * game.setting.welfare(types, state.allocation)
    return total


def _utility(
    game: MuSpmGame,
    mechanism: SpmMechanism,
    agent: int,
    own_type: int,
    message: int,
    messaging: Sequence[Sequence[int]],
) -> float:
    utility = 0.0
    for types, probability in game.conditional_type_profiles(agent, own_type):
        messages = [messaging[i][t] for i, t in enumerate(types)]
        messages[agent] = message
        state = game.run_mechanism(mechanism, types, tuple(messages))
        utility += probability * game.outcome_payoffs(types, state)[agent + 1]
    return utility


def _best_response_fixed_point(
    game: MuSpmGame, mechanism: SpmMechanism, start: tuple[tuple[int, ...], ...]
) -> tuple[tuple[int, ...], ...] | None:
    """Iterate pure best responses; ``None`` when play cycles."""

    current = [list(row) for row in start]
    seen = {start}
    m = game.setting.message_space_size
    while True:
        changed = False
        for agent, law in enumerate(game.setting.valuations):
            for own_type in range(len(law)):
                utilities = [
                    _utility(game, mechanism, agent, own_type, message, current)
                    for message in range(m)
                ]
                keep = current[agent][own_type]
                best = max(utilities)
                if utilities[keep] < best - TOLERANCE:
                    current[agent][own_type] = utilities.index(best)
                    changed = True
        frozen = tuple(tuple(row) for row in current)
        if not changed:
            return frozen
        if frozen in seen:
            return None
        seen.add(frozen)


def _is_dominant(
    game: MuSpmGame, mechanism: SpmMechanism, messaging: tuple[tuple[int, ...], ...]
) -> bool:
    setting = game.setting
    all_profiles = list(_messaging_profiles(setting))
    for agent, law in enumerate(setting.valuations):
        for own_type in range(len(law)):
            chosen = messaging[agent][own_type]
            for others in all_profiles:
                utilities = [
                    _utility(game, mechanism, agent, own_type, message, others)
                    for message in range(setting.message_space_size)
                ]
                if utilities[chosen] < max(utilities) - TOLERANCE:
                    return False
    return True


def _signature(
    game: MuSpmGame, messages: ActionProfile, tree: Tree
) -> tuple:
    mechanism = SpmMechanism(game.setting, {messages: messages}, {messages: tree})
    outcome = []
    for types, _ in game.type_profiles():
        state = game.run_mechanism(mechanism, types, messages)
        outcome.append((state.allocation, tuple(round(p, 9) for p in state.payments)))
    return tuple(outcome)


def _dedupe(game: MuSpmGame, messages: ActionProfile, trees: list[Tree]) -> list[Tree]:
    unique: dict[tuple, Tree] = {}
    for tree in trees:
        unique.setdefault(_signature(game, messages, tree), tree)
        if len(unique) >= TIE_CAP:
            break
    return list(unique.values())


def _lost_realizations(
    game: MuSpmGame, mechanism: SpmMechanism, messaging: Sequence[Sequence[int]]
) -> list[dict[str, Any]]:
    lost = []
    for types, probability in game.type_profiles():
        messages = tuple(messaging[i][t] for i, t in enumerate(types))
        state = game.run_mechanism(mechanism, types, messages)
        realized = game.setting.welfare(types, state.allocation)
        optimum = game.setting.first_best(types)
        if optimum - realized > TOLERANCE:
            lost.append(
                {
                    "values": [list(game.setting.values(a, t)) for a, t in enumerate(types)],
                    "probability": probability,
                    "realized": realized,
                    "first_best": optimum,
                }
            )
    return lost


def solve_spm_exhaustive(setting: SpmSetting, with_messages: bool) -> SpmSolution:
    """Welfare-optimal sequential posted-price mechanism, optionally message-conditioned."""

    if setting.n_agents > 3 or setting.n_items > 2:
        raise OracleSizeError("Exhaustive SPM search supports up to 3 agents and 2 items")
    game = make_mu_spm(setting)
    search = _TreeSearch(setting)
    profiles = game.type_profiles()
    first_best = math.fsum(p * setting.first_best(t) for t, p in profiles)
    message_profiles = list(
        itertools.product(range(setting.message_space_size), repeat=setting.n_agents)
    )

    _, blind_trees = search.optimal_trees(SpmRoundState.initial(setting), profiles)
    blind = SpmMechanism(
        setting,
        routes={messages: message_profiles[0] for messages in message_profiles},
        trees={message_profiles[0]: blind_trees[0]},
    )
    silent = tuple((0,) * len(law) for law in setting.valuations)
    best = SpmSolution(
        mechanism=blind,
        messaging=silent if with_messages else None,
        expected_welfare=_expected_welfare(game, blind, silent),
        first_best=first_best,
        dominant=True if with_messages else None,
        lost_realizations=_lost_realizations(game, blind, silent),
        enumeration_size=search.evaluations,
    )
    if not with_messages:
        LOGGER.info("SPM oracle without messages: welfare %.4f", best.expected_welfare)
        return best

    checked = 0
    for messaging in _messaging_profiles(setting):
        groups: dict[ActionProfile, Profiles] = {}
        for types, probability in profiles:
            messages = tuple(messaging[i][t] for i, t in enumerate(types))
            groups.setdefault(messages, []).append((types, probability))
        on_path = sorted(groups)
        tie_sets = []
        for messages in on_path:
            _, trees = search.optimal_trees(SpmRoundState.initial(setting), groups[messages])
            tie_sets.append(_dedupe(game, messages, trees))
        routes = {messages: _nearest(messages, on_path) for messages in message_profiles}
        for combination in itertools.product(*tie_sets):
            checked += 1
            if checked > BRANCH_CAP:
                raise OracleSizeError(f"More than {BRANCH_CAP} message mechanisms to check")
            mechanism = SpmMechanism(setting, routes, dict(zip(on_path, combination)))
            settled = _best_response_fixed_point(game, mechanism, messaging)
            if settled is None:
                continue
            welfare = _expected_welfare(game, mechanism, settled)
            if welfare > best.expected_welfare + TOLERANCE:
                best = SpmSolution(
                    mechanism=mechanism,
                    messaging=settled,
                    expected_welfare=welfare,
                    first_best=first_best,
                    dominant=_is_dominant(game, mechanism, settled),
                    lost_realizations=_lost_realizations(game, mechanism, settled),
                    enumeration_size=0,
                )
    best.enumeration_size = search.evaluations + checked
    LOGGER.info(
        "SPM oracle with messages: welfare %.4f after %s mechanisms", best.expected_welfare, checked
    )
    return best


# ---------------------------------------------------------------------------
# Exact objective of a tabular policy
# ---------------------------------------------------------------------------


def _observation(protocol: SettingProtocol, index: int) -> Observation:
    features = np.zeros(protocol.observation_count)
    features[index] = 1.0
    return Observation(index, features, protocol.observation_mask(index))


def _action_table(
    policy: LeaderPolicy, protocol: SettingProtocol
) -> list[list[tuple[tuple[int, ...], float]]]:
    table = []
    for index in range(protocol.observation_count):
        heads = policy.head_probabilities(_observation(protocol, index))
        choices = []
        for action in itertools.product(*(range(len(h)) for h in heads)):
            probability = math.prod(float(heads[h][a]) for h, a in enumerate(action))
            if probability > 1e-300:
                choices.append((action, probability))
        table.append(choices)
    return table


def _equilibrium_outcomes(
    game: BayesianGame,
    strategy: Any,
    learner: FollowerLearner,
    rounds: int,
    probability: float,
    budget: list[int],
) -> Iterator[tuple[FollowerLearner, float]]:
    """Exact distribution over learner states after ``rounds`` of dynamics."""

    if rounds == 0:
        yield learner, probability
        return
    expand_actions = game.n_followers > 1
    for types, type_probability in game.type_profiles():
        if expand_actions:
            rows = learner.strategy_rows()
            branches = [
                (actions, math.prod(rows[i][types[i], a] for i, a in enumerate(actions)))
                for actions in game.action_profiles()
            ]
        else:
            branches = [((0,), 1.0)]
        for actions, action_probability in branches:
            if action_probability <= 0:
                continue
            budget[0] += 1
            if budget[0] > BRANCH_CAP:
                raise OracleSizeError(f"Exact objective exceeded {BRANCH_CAP} branches")
            successor = learner.copy()
            rows = counterfactual_payoffs(game, strategy, types, actions)
            base = 1.0 + successor.epsilon
            for follower, (type_index, row) in enumerate(zip(types, rows)):
                weights = successor.weights[follower][type_index]
                weights *= np.power(base, successor.scale(row))
            yield from _equilibrium_outcomes(
                game,
                strategy,
                successor,
                rounds - 1,
                probability * type_probability * action_probability,
                budget,
            )


def expected_leader_reward(game: BayesianGame, strategy: Any, learner: FollowerLearner) -> float:
    """Normalized leader payoff of one reward sub-episode against frozen followers."""

    rows = learner.strategy_rows()
    total = 0.0
    for types, type_probability in game.type_profiles():
        for actions in game.action_profiles():
            probability = math.prod(rows[i][types[i], a] for i, a in enumerate(actions))
            if probability > 0:
                payoff = game.payoff(strategy, types, actions)[0]
                total += type_probability * probability * game.normalize_leader_reward(payoff)
    return total


def exact_objective(
    game: BayesianGame,
    schedule: EpisodeSchedule,
    policy: LeaderPolicy,
    *,
    epsilon: float = MW_EPSILON,
    frozen_learner: FollowerLearner | None = None,
) -> float:
    """Exact expected training return (mean normalized reward) of a tabular policy.

    The per-episode cache makes the policy equivalent to a decision map
    drawn up front, one independent draw per observation class, so the
    expectation runs over decision maps, then over follower dynamics.
    """

    protocol = protocol_for(game)
    table = _action_table(policy, protocol)
    maps = math.prod(len(choices) for choices in table)
    if maps > BRANCH_CAP:
        raise OracleSizeError(f"{maps} decision maps exceed the cap of {BRANCH_CAP}")
    budget = [maps]
    objective = 0.0
    for combination in itertools.product(*table):
        map_probability = math.prod(probability for _, probability in combination)
        decisions = {index: action for index, (action, _) in enumerate(combination)}
        strategy = protocol.strategy_from_map(decisions)
        if frozen_learner is not None:
            outcomes = [(frozen_learner, 1.0)]
        else:
            start = FollowerLearner.for_game(game, epsilon)
            outcomes = _equilibrium_outcomes(
                game, strategy, start, schedule.equilibrium_subepisodes, 1.0, budget
            )
        for learner, probability in outcomes:
            objective += map_probability * probability * expected_leader_reward(
                game, strategy, learner
            )
    return objective


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class OracleReport:
    setting: str
    strategy: list[str]
    value: float
    normalized_value: float
    enumeration_size: int
    wall_time: float
    extras: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            f"setting: {self.setting}",
            f"value: {self.value:.6f} (normalized {self.normalized_value:.6f})",
            f"enumeration size: {self.enumeration_size}",
            f"wall time: {self.wall_time:.3f}s",
            "strategy:",
            *(f"  {line}" for line in self.strategy),
        ]
        for key, value in sorted(self.extras.items()):
            lines.append(f"{key}: {value}")
        return "\n".join(lines) + "\n"


def oracle_report(game: BayesianGame, *, grid_resolution: float = 0.01) -> OracleReport:
    """Run the oracle matching the game and summarize it."""

    started = time.perf_counter()
    extras: dict[str, Any] = {}
    if isinstance(game, MuSpmGame):
        blind = solve_spm_exhaustive(game.setting, with_messages=False)
        solution = solve_spm_exhaustive(game.setting, with_messages=True)
        value = solution.expected_welfare - solution.first_best
        strategy = solution.mechanism.describe()
        size = blind.enumeration_size + solution.enumeration_size
        extras = {
            "first_best_welfare": round(solution.first_best, 9),
            "expected_welfare": round(solution.expected_welfare, 9),
            "no_message_welfare": round(blind.expected_welfare, 9),
            "no_message_reward": round(blind.expected_welfare - blind.first_best, 9),
            "no_message_lost_realizations": blind.lost_realizations,
            "messaging": [list(row) for row in solution.messaging or ()],
            "dominant": solution.dominant,
        }
    elif isinstance(game, NormalFormGame) and game.randomized:
        result = solve_randomized_stackelberg(game, grid_resolution)
        value = result.leader_value
        strategy = [f"mixture {tuple(round(w, 4) for w in result.leader_strategy)}"]
        size = result.enumeration_size
        extras = {"follower_response": {f"{k[0]}/{k[1]}": v for k, v in result.follower_response.items()}}
    else:
        result = solve_deterministic_stackelberg(game)
        value = result.leader_value
        strategy = [f"leader action {result.leader_strategy!r}"]
        size = result.enumeration_size
        extras = {
            "optimal_actions": [repr(a) for a in result.optimal_actions],
            "follower_response": {f"{k[0]}/{k[1]}": v for k, v in result.follower_response.items()},
        }
    return OracleReport(
        setting=game.name,
        strategy=strategy,
        value=float(value),
        normalized_value=float(game.normalize_leader_reward(value)),
        enumeration_size=size,
        wall_time=time.perf_counter() - started,
        extras=extras,
    )


__all__ = [
    "OracleReport",
    "OracleSizeError",
    "SpmMechanism",
    "SpmSolution",
    "StackelbergSolution",
    "exact_objective",
    "expected_leader_reward",
    "oracle_report",
    "solve_deterministic_stackelberg",
    "solve_randomized_stackelberg",
    "solve_spm_exhaustive",
]
