"""Tests for the Stackelberg POMDP episode structure."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from ..services import games, pomdp
from ..services.games import InvalidActionError
from ..services.no_regret import FollowerLearner, empirical_strategy, verify_epsilon_bcce
from ..services.pomdp import (
    EpisodeSchedule,
    IndexProtocol,
    MappedActor,
    Phase,
    RolloutError,
    SpmProtocol,
    StackelbergPomdp,
)


class LowestAgentActor:
    """Visits the lowest unvisited agent at the lowest price."""

    def __init__(self, protocol: SpmProtocol) -> None:
        self.protocol = protocol

    def reset(self) -> None:
        pass

    def decide(self, observation):
        _, state = self.protocol.decode_observation(observation.index)
        return self.protocol.default_action(state), True


class NeverDone(IndexProtocol):
    def done(self, round_state) -> bool:
        return False


def test_episode_layout_and_rewards() -> None:
    game = games.make_maintain()
    env = StackelbergPomdp(game, EpisodeSchedule(5, 2), epsilon=0.1)

    trace = env.run_episode(MappedActor({0: (0,)}), seed=3)

    assert len(trace) == 5 * 3 + 2
    equilibrium = [step for step in trace.steps if step.phase is Phase.EQUILIBRIUM]
    reward = [step for step in trace.steps if step.phase is Phase.REWARD]
    assert len(equilibrium) == 15
    assert all(step.reward == 0.0 for step in equilibrium)
    assert [step.reward for step in reward] == trace.reward_payoffs
    assert trace.total_reward == pytest.approx(sum(trace.reward_payoffs))
    assert len(trace.history) == 5
    assert trace.learner.weights[0][0][0] == pytest.approx(1.1**5)


def test_cache_marks_only_first_visit_fresh() -> None:
    game = games.make_maintain()
    env = StackelbergPomdp(game, EpisodeSchedule(3, 1))

    trace = env.run_episode(MappedActor({0: (0,)}), seed=0)

    assert [step.fresh for step in trace.steps].count(True) == 1
    assert trace.steps[0].fresh


def test_episodes_are_deterministic_in_seed() -> None:
    game = games.make_simple_allocation(3, 2)
    env = StackelbergPomdp(game, EpisodeSchedule(10, 4))
    actor = MappedActor({0: (0,), 1: (1,)})

    first = pomdp.trace_to_csv([env.run_episode(actor, seed=5)])
    second = pomdp.trace_to_csv([env.run_episode(actor, seed=5)])

    assert first == second
    assert first.splitlines()[0] == "episode,phase,subepisode,observation,action,reward"


def test_allocation_rolls_out_every_message() -> None:
    game = games.make_simple_allocation(2, 2)
    env = StackelbergPomdp(game, EpisodeSchedule(1, 1))

    trace = env.run_episode(MappedActor({0: (0,), 1: (1,)}), seed=0)
    rolled_out = [step.observation.index for step in trace.steps if step.phase is Phase.EQUILIBRIUM]

    assert sorted(rolled_out) == [0, 1]


def test_invalid_actions_are_rejected() -> None:
    game = games.make_maintain()
    env = StackelbergPomdp(game, EpisodeSchedule(1, 1))

    with pytest.raises(InvalidActionError):
        env.run_episode(MappedActor({0: (5,)}), seed=0)
    with pytest.raises(InvalidActionError):
        env.run_episode(MappedActor({}), seed=0)


def test_step_cap_raises_rollout_error() -> None:
    game = games.make_maintain()
    env = StackelbergPomdp(game, EpisodeSchedule(1, 1), protocol=NeverDone(game, 3))

    with pytest.raises(RolloutError):
        env.run_episode(MappedActor({0: (0,)}), seed=0)


def test_weight_vector_decoding() -> None:
    protocol = pomdp.protocol_for(games.make_maintain(randomized=True))

    assert protocol.heads == (11, 11, 11)
    assert protocol.decode((1, 3, 0)).tolist() == pytest.approx([0.25, 0.75, 0.0])
    assert protocol.decode((0, 0, 0)).tolist() == pytest.approx([1 / 3] * 3)


def test_spm_observations_round_trip_and_mask() -> None:
    game = games.make_mu_spm(games.agrawal_setting())
    protocol = pomdp.protocol_for(game)
    state = games.SpmRoundState(allocation=(-1,), visited=(False, True), payments=(0.0, 0.0))

    index = protocol.observe((1, 0), state)
    messages, decoded = protocol.decode_observation(index)

    assert messages == (1, 0)
    assert decoded.visited == (False, True)
    agents, prices = protocol.observation_mask(index)
    assert agents.tolist() == [True, False]
    assert prices.all()


def test_spm_rollout_terminates_with_welfare_loss() -> None:
    game = games.make_mu_spm(games.agrawal_setting())
    env = StackelbergPomdp(game, EpisodeSchedule(3, 4))

    trace = env.run_episode(LowestAgentActor(env.protocol), seed=2)

    assert len(trace.reward_payoffs) == 4
    assert all(payoff <= 0.0 for payoff in trace.reward_payoffs)
    assert all(step.reward <= 0.0 for step in trace.steps)


def test_state_features_expose_hidden_state() -> None:
    game = games.make_maintain()
    env = StackelbergPomdp(game, EpisodeSchedule(2, 1))

    trace = env.run_episode(MappedActor({0: (0,)}), seed=0)
    sizes = {len(step.state_features) for step in trace.steps}

    assert sizes == {env.state_feature_size}
    assert env.state_feature_size == 14
    first, last = trace.steps[0].state_features, trace.steps[-1].state_features
    assert first[0] == 1.0 and last[0] == 0.0
    assert not np.allclose(first, last)


def test_reward_phase_leaves_followers_frozen() -> None:
    game = games.make_maintain()
    env = StackelbergPomdp(game, EpisodeSchedule(4, 3))
    actor = MappedActor({0: (0,)})
    rng = np.random.default_rng(1)
    learner = FollowerLearner.for_game(game)
    trace = pomdp.EpisodeTrace(seed=1, learner=learner)

    env.run_equilibrium_phase(learner, actor, rng, trace)
    before = learner.weights[0].copy()
    payoffs = env.run_reward_phase(learner, actor, rng, trace)

    assert np.array_equal(learner.weights[0], before)
    assert payoffs == trace.reward_payoffs
    assert len(trace.history.records) == 4
    assert len(payoffs) == 3


class RandomVisitActor:
    """Visits a random unvisited agent at random grid prices and records what it saw."""

    def __init__(self, protocol: SpmProtocol, seed: int) -> None:
        self.protocol = protocol
        self.rng = np.random.default_rng(seed)
        self.seen: list[tuple[int, games.SpmRoundState, tuple[int, ...]]] = []

    def reset(self) -> None:
        pass

    def decide(self, observation):
        _, state = self.protocol.decode_observation(observation.index)
        agent = int(self.rng.choice(state.residual_agents))
        prices = tuple(
            int(self.rng.integers(len(self.protocol.setting.price_grid))) if owner < 0 else 0
            for owner in state.allocation
        )
        action = (agent, *prices)
        self.seen.append((observation.index, state, action))
        return action, True


def test_observations_ignore_phase_and_hidden_fields() -> None:
    game = games.make_mu_spm(games.agrawal_setting())
    env = StackelbergPomdp(game, EpisodeSchedule(2, 2))
    round_state = env.protocol.start()
    equilibrium = pomdp.PomdpState(
        phase=Phase.EQUILIBRIUM,
        learner=FollowerLearner.for_game(game),
        types=(0, 1),
        messages=(1, 0),
        round=round_state,
        target_index=0,
        counterfactual_action=1,
        utilities=np.array([0.3, 0.0]),
    )
    variants = [
        replace(equilibrium, target_index=1, counterfactual_action=0, utilities=np.array([0.0, 9.0])),
        replace(equilibrium, phase=Phase.REWARD, types=(1, 0), utilities=None),
        replace(equilibrium, learner=FollowerLearner([np.full((2, 2), 7.0), np.ones((2, 2))])),
    ]

    reference = env.observe(equilibrium)
    for state in variants:
        observation = env.observe(state)
        assert observation.index == reference.index
        assert np.array_equal(observation.features, reference.features)
        assert all(np.array_equal(a, b) for a, b in zip(observation.mask, reference.mask))


def test_same_public_history_gives_same_observations_in_both_phases() -> None:
    game = games.make_simple_allocation(3, 3)
    env = StackelbergPomdp(game, EpisodeSchedule(20, 20))

    trace = env.run_episode(MappedActor({m: (m,) for m in range(3)}), seed=4)

    by_phase = {
        phase: {step.observation.index for step in trace.steps if step.phase is phase}
        for phase in (Phase.EQUILIBRIUM, Phase.REWARD)
    }
    assert by_phase[Phase.REWARD] <= by_phase[Phase.EQUILIBRIUM]
    for step in trace.steps:
        assert step.observation.features.tolist() == np.eye(3)[step.observation.index].tolist()


def test_posted_prices_conserve_items_and_visit_agents_once() -> None:
    game = games.make_mu_spm(games.agrawal_setting())
    env = StackelbergPomdp(game, EpisodeSchedule(6, 6))
    actor = RandomVisitActor(env.protocol, seed=3)

    trace = env.run_episode(actor, seed=9)

    assert len(actor.seen) == len(trace)
    for _, state, action in actor.seen:
        allocated = [item for item, owner in enumerate(state.allocation) if owner >= 0]
        assert len(allocated) + len(state.residual_items) == game.setting.n_items
        assert all(state.visited[state.allocation[item]] for item in allocated)
        assert not state.visited[action[0]]
    done_steps = [step for step in trace.steps if step.done]
    assert len(done_steps) == 6 * 4 + 6


def test_posted_price_rounds_issue_one_rollout_per_agent_message() -> None:
    game = games.make_mu_spm(games.agrawal_setting())
    env = StackelbergPomdp(game, EpisodeSchedule(3, 1))

    trace = env.run_episode(LowestAgentActor(env.protocol), seed=0)

    finished = [step.subepisode for step in trace.steps if step.phase is Phase.EQUILIBRIUM and step.done]
    assert sorted(finished) == [0] * 4 + [1] * 4 + [2] * 4
    assert len(trace.history.records) == 3


def test_truthful_decoding_teaches_the_follower_to_reveal_its_type() -> None:
    game = games.make_simple_allocation(3, 3)
    env = StackelbergPomdp(game, EpisodeSchedule(1000, 1), epsilon=0.1)
    rng = np.random.default_rng(0)
    learner = FollowerLearner.for_game(game, 0.1)
    trace = pomdp.EpisodeTrace(seed=0, learner=learner)

    env.run_equilibrium_phase(learner, MappedActor({m: (m,) for m in range(3)}), rng, trace)

    for item in range(3):
        assert learner.probabilities(0, item)[item] > 0.95


@pytest.mark.slow
def test_bcce_violation_does_not_grow_with_longer_equilibration() -> None:
    game = games.make_maintain()
    actor = MappedActor({0: (1,)})

    def mean_violation(rounds: int) -> float:
        env = StackelbergPomdp(game, EpisodeSchedule(rounds, 1))
        violations = []
        for seed in range(20):
            trace = env.run_episode(actor, seed)
            sigma = empirical_strategy(trace.history)
            violations.append(verify_epsilon_bcce(game, 1, sigma, 0.0).worst_violation)
        return float(np.mean(violations))

    short, medium, long = (mean_violation(rounds) for rounds in (100, 400, 1600))
    assert medium <= short + 0.02
    assert long <= medium + 0.02
    assert long <= short + 0.02
