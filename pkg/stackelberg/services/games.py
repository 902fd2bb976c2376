"""Bayesian Stackelberg games and the concrete desk-scale settings."""
from __future__ import annotations

import itertools
import logging
import math
import string
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Hashable, Iterator, Literal, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:
    from ..schemas import SettingConfig

LOGGER = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12
WELFARE_TOLERANCE = 1e-9

TypeProfile = tuple[int, ...]
ActionProfile = tuple[int, ...]


class GameConfigurationError(ValueError):
    """Raised when a game or setting cannot be constructed."""


class InvalidActionError(RuntimeError):
    """Raised when a leader action is not valid in the current state."""


# ---------------------------------------------------------------------------
# Generic game model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class LeaderActionSpace:
    """Shape of the leader's commitment space."""

    kind: Literal["discrete", "weight_vector", "mechanism"]
    size: int = 0

    def normalize(self, weights: Sequence[float] | np.ndarray) -> np.ndarray:
        """Turn nonnegative row weights into a probability vector."""

        if self.kind != "weight_vector":
            raise GameConfigurationError(f"{self.kind} actions carry no weights")
        vector = np.asarray(weights, dtype=float)
        if vector.shape != (self.size,):
            raise GameConfigurationError(
                f"Expected {self.size} weights, received shape {vector.shape}"
            )
        if not np.all(np.isfinite(vector)) or np.any(vector < 0):
            raise GameConfigurationError("Weights must be finite and nonnegative")
        total = float(vector.sum())
        if total <= 0.0:
            raise GameConfigurationError("All-zero weight vectors are not valid actions")
        return vector / total


@dataclass(frozen=True, eq=False, kw_only=True)
class BayesianGame:
    """A leader commitment followed by a Bayesian game among the followers.

    Types and actions are referred to by their index into ``type_spaces`` and
    ``action_spaces``; the spaces themselves only hold display labels.
    ``payoff`` returns a vector whose component 0 is the leader's payoff and
    component ``i + 1`` is follower ``i``'s payoff.
    """

    name: str
    type_spaces: tuple[tuple[Hashable, ...], ...]
    action_spaces: tuple[tuple[Hashable, ...], ...]
    type_distribution: Mapping[TypeProfile, float]
    leader_space: LeaderActionSpace
    follower_bounds: tuple[float, float]
    leader_bounds: tuple[float, float]
    _profiles: tuple[TypeProfile, ...] = field(init=False, repr=False)
    _cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.type_spaces) != len(self.action_spaces) or not self.type_spaces:
            raise GameConfigurationError("Every follower needs a type space and an action space")
        if any(not space for space in (*self.type_spaces, *self.action_spaces)):
            raise GameConfigurationError("Type and action spaces must be nonempty")
        probabilities: list[float] = []
        for profile, probability in self.type_distribution.items():
            if len(profile) != self.n_followers:
                raise GameConfigurationError(f"Type profile {profile!r} has the wrong length")
            for follower, type_index in enumerate(profile):
                if not 0 <= type_index < len(self.type_spaces[follower]):
                    raise GameConfigurationError(f"Type profile {profile!r} is out of range")
            if not math.isfinite(probability) or probability < 0:
                raise GameConfigurationError(f"Invalid probability {probability!r} for {profile!r}")
            probabilities.append(probability)
        if abs(math.fsum(probabilities) - 1.0) > PROBABILITY_TOLERANCE:
            raise GameConfigurationError("Type distribution must sum to 1")
        support = tuple(sorted(p for p, prob in self.type_distribution.items() if prob > 0))
        object.__setattr__(self, "_profiles", support)
        cumulative = np.cumsum([self.type_distribution[p] for p in support])
        cumulative[-1] = 1.0
        object.__setattr__(self, "_cumulative", cumulative)
        for low, high in (self.follower_bounds, self.leader_bounds):
            if not high > low:
                raise GameConfigurationError("Payoff bounds must satisfy low < high")

    @property
    def n_followers(self) -> int:
        return len(self.type_spaces)

    def payoff(self, leader_action: Any, types: TypeProfile, actions: ActionProfile) -> np.ndarray:
        raise NotImplementedError

    def leader_actions(self) -> Sequence[Any]:
        """Enumerate the leader's commitments when the space is finite."""

        raise GameConfigurationError(f"{self.name} has no finite leader action list")

    def type_profiles(self) -> list[tuple[TypeProfile, float]]:
        return [(profile, self.type_distribution[profile]) for profile in self._profiles]

    def sample_types(self, rng: np.random.Generator) -> TypeProfile:
        index = int(np.searchsorted(self._cumulative, rng.random(), side="right"))
        return self._profiles[min(index, len(self._profiles) - 1)]

    def conditional_type_profiles(
        self, follower: int, own_type: int
    ) -> list[tuple[TypeProfile, float]]:
        """Distribution over full profiles given one follower's own type."""

        matching = [
            (profile, prob) for profile, prob in self.type_profiles() if profile[follower] == own_type
        ]
        total = math.fsum(prob for _, prob in matching)
        if total <= 0:
            return []
        return [(profile, prob / total) for profile, prob in matching]

    def action_profiles(self) -> Iterator[ActionProfile]:
        return itertools.product(*(range(len(space)) for space in self.action_spaces))

    def normalize_leader_reward(self, reward: float) -> float:
        low, high = self.leader_bounds
        return (reward - low) / (high - low)

    def _check_total(self) -> None:
        for leader_action in self.leader_actions():
            for profile, _ in self.type_profiles():
                for actions in self.action_profiles():
                    values = self.payoff(leader_action, profile, actions)
                    if values.shape != (self.n_followers + 1,) or not np.all(np.isfinite(values)):
                        raise GameConfigurationError(
                            f"Payoff undefined for leader action {leader_action!r}, "
                            f"types {profile!r}, actions {actions!r}"
                        )


def _labels(count: int) -> tuple[str, ...]:
    letters = string.ascii_uppercase
    return tuple(letters[i] if i < len(letters) else f"X{i}" for i in range(count))


def _bounds(values: Sequence[float], *, floor: float | None = None) -> tuple[float, float]:
    low = min(values) if floor is None else min(floor, min(values))
    high = max(values)
    if high <= low:
        high = low + 1.0
    return float(low), float(high)


# ---------------------------------------------------------------------------
# Normal form games
# ---------------------------------------------------------------------------

MAINTAIN_MATRIX: tuple[tuple[tuple[float, float], ...], ...] = (
    ((20, 15), (0, 0), (0, 0)),
    ((30, 0), (10, 5), (0, 0)),
    ((0, 0), (0, 0), (5, 10)),
)

ESCAPE_MATRIX: tuple[tuple[tuple[float, float], ...], ...] = (
    ((15, 15), (10, 10), (0, 0)),
    ((10, 10), (10, 10), (0, 0)),
    ((0, 0), (0, 0), (30, 30)),
)


@dataclass(frozen=True, eq=False, kw_only=True)
class NormalFormGame(BayesianGame):
    """Leader picks a row (or a row mixture), one follower picks a column."""

    matrix: np.ndarray
    randomized: bool = False

    def __post_init__(self) -> None:
        BayesianGame.__post_init__(self)
        self._check_total()

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def row_distribution(self, leader_action: Any) -> np.ndarray:
        if isinstance(leader_action, (int, np.integer)):
            if not 0 <= int(leader_action) < self.size:
                raise InvalidActionError(f"Row {leader_action!r} is out of range")
            return np.eye(self.size)[int(leader_action)]
        if not self.randomized:
            raise InvalidActionError("Deterministic games take a row index")
        return self.leader_space.normalize(leader_action)

    def payoff(self, leader_action: Any, types: TypeProfile, actions: ActionProfile) -> np.ndarray:
        rows = self.row_distribution(leader_action)
        column = actions[0]
        return rows @ self.matrix[:, column, :]

    def leader_actions(self) -> Sequence[Any]:
        return tuple(range(self.size))


def make_normal_form(
    payoff_matrix: Sequence[Sequence[Sequence[float]]],
    randomized: bool = False,
    *,
    name: str = "normal_form",
) -> NormalFormGame:
    """Build a single-follower normal form game from a square payoff table."""

    if not payoff_matrix or not payoff_matrix[0]:
        raise GameConfigurationError("Payoff matrix must be nonempty")
    try:
        matrix = np.asarray(payoff_matrix, dtype=float)
    except ValueError as exc:
        raise GameConfigurationError("Payoff matrix rows must be equally long") from exc
    if matrix.ndim != 3 or matrix.shape[0] != matrix.shape[1] or matrix.shape[2] != 2:
        raise GameConfigurationError(
            f"Expected a square table of payoff pairs, received shape {matrix.shape}"
        )
    if not np.all(np.isfinite(matrix)):
        raise GameConfigurationError("Payoffs must be finite")
    size = matrix.shape[0]
    space = LeaderActionSpace("weight_vector" if randomized else "discrete", size)
    matrix.setflags(write=False)
    return NormalFormGame(
        name=name,
        type_spaces=(("*",),),
        action_spaces=(_labels(size),),
        type_distribution={(0,): 1.0},
        leader_space=space,
        follower_bounds=_bounds(matrix[:, :, 1].ravel().tolist()),
        leader_bounds=_bounds(matrix[:, :, 0].ravel().tolist(), floor=0.0),
        matrix=matrix,
        randomized=randomized,
    )


def make_maintain(randomized: bool = False) -> NormalFormGame:
    return make_normal_form(
        MAINTAIN_MATRIX, randomized, name="maintain_randomized" if randomized else "maintain"
    )


def make_escape(randomized: bool = False) -> NormalFormGame:
    return make_normal_form(ESCAPE_MATRIX, randomized, name="escape")


# ---------------------------------------------------------------------------
# Matrix design
# ---------------------------------------------------------------------------

MATRIX_DESIGN_BASE: tuple[tuple[tuple[float, float], ...], ...] = (
    ((3, 3), (6, 4)),
    ((4, 6), (2, 2)),
)
DEFAULT_PAYMENTS: tuple[float, ...] = tuple(float(tau) for tau in range(11))


def actions_differ(actions: ActionProfile) -> bool:
    return len(set(actions)) == len(actions)


@dataclass(frozen=True, eq=False, kw_only=True)
class MatrixDesignGame(BayesianGame):
    """Two followers play a 2x2 game whose payoffs the leader can raise by tau.

    The row player's (A, A) payoff and the column player's (B, B) payoff are
    each increased by the chosen payment.
    """

    base: np.ndarray
    payments: tuple[float, ...]
    reward_rule: Callable[[ActionProfile], bool] = actions_differ

    def __post_init__(self) -> None:
        BayesianGame.__post_init__(self)
        self._check_total()

    def payment_index(self, tau: float) -> int:
        for index, payment in enumerate(self.payments):
            if math.isclose(payment, tau):
                return index
        raise InvalidActionError(f"Payment {tau!r} is not in the payment set")

    def follower_payoffs(self, tau: float, actions: ActionProfile) -> tuple[float, float]:
        row, column = actions
        row_payoff, column_payoff = self.base[row, column]
        if (row, column) == (0, 0):
            row_payoff += tau
        if (row, column) == (1, 1):
            column_payoff += tau
        return float(row_payoff), float(column_payoff)

    def payoff(self, leader_action: Any, types: TypeProfile, actions: ActionProfile) -> np.ndarray:
        if not 0 <= int(leader_action) < len(self.payments):
            raise InvalidActionError(f"Payment index {leader_action!r} is out of range")
        tau = self.payments[int(leader_action)]
        row_payoff, column_payoff = self.follower_payoffs(tau, actions)
        leader = 1.0 if self.reward_rule(tuple(actions)) else 0.0
        return np.array([leader, row_payoff, column_payoff])

    def leader_actions(self) -> Sequence[Any]:
        return tuple(range(len(self.payments)))


def make_matrix_design(
    base_matrix: Sequence[Sequence[Sequence[float]]] = MATRIX_DESIGN_BASE,
    payment_set: Sequence[float] = DEFAULT_PAYMENTS,
    leader_reward_rule: Callable[[ActionProfile], bool] = actions_differ,
    *,
    name: str = "matrix_design",
) -> MatrixDesignGame:
    base = np.asarray(base_matrix, dtype=float)
    if base.shape != (2, 2, 2) or not np.all(np.isfinite(base)):
        raise GameConfigurationError("Matrix design needs a finite 2x2 table of payoff pairs")
    payments = tuple(sorted(float(tau) for tau in payment_set))
    if not payments:
        raise GameConfigurationError("Payment set must be nonempty")
    if any(tau < 0 or not math.isfinite(tau) for tau in payments):
        raise GameConfigurationError("Payments must be nonnegative reals")
    base.setflags(write=False)
    follower_values = base[:, :, :].ravel().tolist() + [
        float(base[0, 0, 0]) + payments[-1],
        float(base[1, 1, 1]) + payments[-1],
    ]
    return MatrixDesignGame(
        name=name,
        type_spaces=(("*",), ("*",)),
        action_spaces=(_labels(2), _labels(2)),
        type_distribution={(0, 0): 1.0},
        leader_space=LeaderActionSpace("discrete", len(payments)),
        follower_bounds=_bounds(follower_values),
        leader_bounds=(0.0, 1.0),
        base=base,
        payments=payments,
        reward_rule=leader_reward_rule,
    )


# ---------------------------------------------------------------------------
# Simple allocation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False, kw_only=True)
class AllocationGame(BayesianGame):
    """One follower wants one of ``n_items`` items and may send one of ``m`` messages."""

    n_items: int
    message_space_size: int

    def __post_init__(self) -> None:
        BayesianGame.__post_init__(self)
        self._check_total()

    def allocated_item(self, leader_action: Any, message: int) -> int:
        if isinstance(leader_action, (int, np.integer)):
            item = int(leader_action)
        else:
            decoding = tuple(leader_action)
            if len(decoding) != self.message_space_size:
                raise InvalidActionError("Allocation rule must map every message to an item")
            item = int(decoding[message])
        if not 0 <= item < self.n_items:
            raise InvalidActionError(f"Item {item!r} is out of range")
        return item

    def payoff(self, leader_action: Any, types: TypeProfile, actions: ActionProfile) -> np.ndarray:
        item = self.allocated_item(leader_action, actions[0])
        value = 1.0 if item == types[0] else 0.0
        return np.array([value, value])

    def leader_actions(self) -> Sequence[Any]:
        return tuple(itertools.product(range(self.n_items), repeat=self.message_space_size))


def make_simple_allocation(n_items: int, message_space_size: int) -> AllocationGame:
    if n_items < 1 or message_space_size < 1:
        raise GameConfigurationError("Allocation needs at least one item and one message")
    share = 1.0 / n_items
    return AllocationGame(
        name=f"allocation_k{n_items}_m{message_space_size}",
        type_spaces=(tuple(range(1, n_items + 1)),),
        action_spaces=(tuple(range(1, message_space_size + 1)),),
        type_distribution={(item,): share for item in range(n_items)},
        leader_space=LeaderActionSpace("discrete", n_items),
        follower_bounds=(0.0, 1.0),
        leader_bounds=(0.0, 1.0),
        n_items=n_items,
        message_space_size=message_space_size,
    )


# ---------------------------------------------------------------------------
# Sequential price mechanisms with messages
# ---------------------------------------------------------------------------


def default_price_grid() -> tuple[float, ...]:
    return tuple(round(0.1 * step, 1) for step in range(31))


@dataclass(frozen=True, slots=True)
class SpmSetting:
    """Agents, items, message space, price grid and per-agent valuation laws.

    ``valuations[i]`` lists ``(value_vector, probability)`` pairs for agent
    ``i``; agents draw independently.
    """

    n_agents: int
    n_items: int
    message_space_size: int
    price_grid: tuple[float, ...]
    valuations: tuple[tuple[tuple[tuple[float, ...], float], ...], ...]
    demand: Literal["additive", "unit_demand"] = "unit_demand"

    def validate(self) -> None:
        if self.n_agents < 1 or self.n_items < 1:
            raise GameConfigurationError("SPM settings need agents and items")
        if self.message_space_size < 2:
            raise GameConfigurationError("Message space size must be at least 2")
        if not self.price_grid:
            raise GameConfigurationError("Price grid must be nonempty")
        if any(b <= a for a, b in zip(self.price_grid, self.price_grid[1:])):
            raise GameConfigurationError("Price grid must be strictly increasing")
        if len(self.valuations) != self.n_agents:
            raise GameConfigurationError("Every agent needs a valuation distribution")
        for agent, law in enumerate(self.valuations):
            if not law:
                raise GameConfigurationError(f"Agent {agent} has an empty valuation support")
            for values, probability in law:
                if len(values) != self.n_items:
                    raise GameConfigurationError(
                        f"Agent {agent} values {values!r} do not match {self.n_items} items"
                    )
                if probability < 0 or any(v < 0 or not math.isfinite(v) for v in values):
                    raise GameConfigurationError(f"Agent {agent} has an invalid valuation entry")
            if abs(math.fsum(p for _, p in law) - 1.0) > PROBABILITY_TOLERANCE:
                raise GameConfigurationError(f"Agent {agent} valuation probabilities must sum to 1")

    def values(self, agent: int, type_index: int) -> tuple[float, ...]:
        return self.valuations[agent][type_index][0]

    def on_grid(self, price: float) -> bool:
        return any(math.isclose(price, level, abs_tol=1e-9) for level in self.price_grid)

    def choose_bundle(self, values: Sequence[float], prices: Mapping[int, float]) -> tuple[int, ...]:
        """Utility-maximizing bundle; buyers decline when indifferent."""

        surplus = {item: values[item] - price for item, price in prices.items()}
        if self.demand == "additive":
            return tuple(sorted(item for item, gain in surplus.items() if gain > 0))
        best = None
        for item in sorted(surplus):
            if surplus[item] > 0 and (best is None or surplus[item] > surplus[best]):
                best = item
        return () if best is None else (best,)

    def welfare(self, types: TypeProfile, allocation: Sequence[int]) -> float:
        return math.fsum(
            self.values(owner, types[owner])[item]
            for item, owner in enumerate(allocation)
            if owner >= 0
        )

    def first_best(self, types: TypeProfile) -> float:
        """Maximum welfare over all feasible allocations for one realization."""

        best = 0.0
        for allocation in itertools.product(range(-1, self.n_agents), repeat=self.n_items):
            if self.demand == "unit_demand":
                owners = [owner for owner in allocation if owner >= 0]
                if len(owners) != len(set(owners)):
                    continue
            best = max(best, self.welfare(types, allocation))
        return best


@dataclass(frozen=True, slots=True)
class SpmRoundState:
    """Partial allocation and residual of one mechanism run."""

    allocation: tuple[int, ...]
    visited: tuple[bool, ...]
    payments: tuple[float, ...]

    @classmethod
    def initial(cls, setting: SpmSetting) -> "SpmRoundState":
        return cls(
            allocation=(-1,) * setting.n_items,
            visited=(False,) * setting.n_agents,
            payments=(0.0,) * setting.n_agents,
        )

    @property
    def residual_items(self) -> tuple[int, ...]:
        return tuple(item for item, owner in enumerate(self.allocation) if owner < 0)

    @property
    def residual_agents(self) -> tuple[int, ...]:
        return tuple(agent for agent, seen in enumerate(self.visited) if not seen)

    @property
    def done(self) -> bool:
        return not self.residual_items or not self.residual_agents


@dataclass(frozen=True, slots=True)
class SpmAction:
    """Visit ``agent`` and post ``prices`` (item, price) for every remaining item."""

    agent: int
    prices: tuple[tuple[int, float], ...]


Mechanism = Callable[[tuple[int, ...], SpmRoundState], SpmAction]


def visit_agent(
    setting: SpmSetting, state: SpmRoundState, action: SpmAction, types: TypeProfile
) -> SpmRoundState:
    """Apply one posted-price visit and let the buyer choose a bundle."""

    if not 0 <= action.agent < setting.n_agents or state.visited[action.agent]:
        raise InvalidActionError(f"Agent {action.agent!r} cannot be visited")
    prices = dict(action.prices)
    residual = set(state.residual_items)
    if set(prices) != residual:
        raise InvalidActionError(
            f"Prices must cover exactly the remaining items {sorted(residual)}, got {sorted(prices)}"
        )
    if any(not setting.on_grid(price) for price in prices.values()):
        raise InvalidActionError(f"Prices {prices!r} are not on the price grid")
    bundle = setting.choose_bundle(setting.values(action.agent, types[action.agent]), prices)
    allocation = list(state.allocation)
    for item in bundle:
        allocation[item] = action.agent
    visited = list(state.visited)
    visited[action.agent] = True
    payments = list(state.payments)
    payments[action.agent] += math.fsum(prices[item] for item in bundle)
    return SpmRoundState(tuple(allocation), tuple(visited), tuple(payments))


def reward_from_welfare(realized_welfare: float, optimal_welfare: float) -> float:
    """Negated welfare loss: zero at the optimum, negative otherwise."""

    if optimal_welfare < realized_welfare - WELFARE_TOLERANCE:
        raise ValueError(
            f"Realized welfare {realized_welfare} exceeds the optimum {optimal_welfare}"
        )
    loss = optimal_welfare - realized_welfare
    return -loss if loss > 0 else 0.0


@dataclass(frozen=True, eq=False, kw_only=True)
class MuSpmGame(BayesianGame):
    """Followers message first; the leader commits to an adaptive posted-price mechanism."""

    setting: SpmSetting

    @property
    def step_cap(self) -> int:
        return self.setting.n_agents + 2

    def run_mechanism(
        self, mechanism: Mechanism, types: TypeProfile, messages: ActionProfile
    ) -> SpmRoundState:
        state = SpmRoundState.initial(self.setting)
        for _ in range(self.step_cap):
            if state.done:
                return state
            state = visit_agent(self.setting, state, mechanism(tuple(messages), state), types)
        if not state.done:
            raise InvalidActionError("Mechanism exceeded the step cap")
        return state

    def outcome_payoffs(self, types: TypeProfile, state: SpmRoundState) -> np.ndarray:
        setting = self.setting
        utilities = []
        for agent in range(setting.n_agents):
            values = setting.values(agent, types[agent])
            won = math.fsum(values[item] for item, owner in enumerate(state.allocation) if owner == agent)
            utilities.append(won - state.payments[agent])
        leader = reward_from_welfare(
            setting.welfare(types, state.allocation), setting.first_best(types)
        )
        return np.array([leader, *utilities])

    def payoff(self, leader_action: Any, types: TypeProfile, actions: ActionProfile) -> np.ndarray:
        return self.outcome_payoffs(types, self.run_mechanism(leader_action, types, actions))

    def max_welfare(self) -> float:
        return max(self.setting.first_best(profile) for profile, _ in self.type_profiles())


def make_mu_spm(setting: SpmSetting, *, name: str = "mu_spm") -> MuSpmGame:
    setting.validate()
    distribution: dict[TypeProfile, float] = {}
    for profile in itertools.product(*(range(len(law)) for law in setting.valuations)):
        probability = math.prod(setting.valuations[a][t][1] for a, t in enumerate(profile))
        distribution[profile] = distribution.get(profile, 0.0) + probability
    best_bundle = max(
        sum(values) if setting.demand == "additive" else max(values)
        for law in setting.valuations
        for values, _ in law
    )
    max_welfare = max(setting.first_best(profile) for profile in distribution)
    return MuSpmGame(
        name=name,
        type_spaces=tuple(tuple(values for values, _ in law) for law in setting.valuations),
        action_spaces=tuple(
            tuple(range(setting.message_space_size)) for _ in range(setting.n_agents)
        ),
        type_distribution=distribution,
        leader_space=LeaderActionSpace("mechanism"),
        follower_bounds=_bounds([0.0, best_bundle]),
        leader_bounds=_bounds([-max_welfare, 0.0]),
        setting=setting,
    )


def agrawal_setting(epsilon: float = 0.2, message_space_size: int = 2) -> SpmSetting:
    """Two agents, one item; agent 1 is rarely high-value, agent 2 is a coin flip."""

    return SpmSetting(
        n_agents=2,
        n_items=1,
        message_space_size=message_space_size,
        price_grid=default_price_grid(),
        valuations=(
            (((0.5,), 1.0 - epsilon), ((round(1.0 / (2.0 * epsilon), 10),), epsilon)),
            (((0.0,), 0.5), ((1.0,), 0.5)),
        ),
    )


# ---------------------------------------------------------------------------
# Catalogue
# ---------------------------------------------------------------------------


def build_game(setting: "SettingConfig") -> BayesianGame:
    """Construct the game a validated setting block describes."""

    kind = setting.kind
    if kind == "maintain":
        return make_maintain(randomized=False)
    if kind == "maintain_randomized":
        return make_maintain(randomized=True)
    if kind == "escape":
        return make_escape(randomized=setting.randomized)
    if kind == "normal_form":
        return make_normal_form(setting.matrix, setting.randomized)
    if kind == "matrix_design":
        return make_matrix_design(
            setting.base_matrix if setting.base_matrix is not None else MATRIX_DESIGN_BASE,
            setting.payments if setting.payments is not None else DEFAULT_PAYMENTS,
        )
    if kind == "allocation":
        return make_simple_allocation(setting.n_items, setting.message_space_size)
    if kind == "mu_spm":
        message_space_size = setting.message_space_size or 2
        if setting.agents is None:
            return make_mu_spm(agrawal_setting(setting.agrawal_epsilon, message_space_size))
        spm = SpmSetting(
            n_agents=len(setting.agents),
            n_items=setting.n_items,
            message_space_size=message_space_size,
            price_grid=tuple(setting.price_grid) if setting.price_grid else default_price_grid(),
            valuations=tuple(
                tuple(
                    (tuple(float(v) for v in values), float(probability))
                    for values, probability in zip(agent.values, agent.probabilities)
                )
                for agent in setting.agents
            ),
            demand=setting.demand,
        )
        return make_mu_spm(spm)
    raise GameConfigurationError(f"Unknown setting kind {kind!r}")


__all__ = [
    "AllocationGame",
    "BayesianGame",
    "DEFAULT_PAYMENTS",
    "ESCAPE_MATRIX",
    "GameConfigurationError",
    "InvalidActionError",
    "LeaderActionSpace",
    "MAINTAIN_MATRIX",
    "MATRIX_DESIGN_BASE",
    "MatrixDesignGame",
    "Mechanism",
    "MuSpmGame",
    "NormalFormGame",
    "SpmAction",
    "SpmRoundState",
    "SpmSetting",
    "actions_differ",
    "agrawal_setting",
    "build_game",
    "default_price_grid",
    "make_escape",
    "make_maintain",
    "make_matrix_design",
    "make_mu_spm",
    "make_normal_form",
    "make_simple_allocation",
    "reward_from_welfare",
    "visit_agent",
]
