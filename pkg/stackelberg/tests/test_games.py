"""Tests for game construction, payoffs and the posted-price primitives."""
from __future__ import annotations

import numpy as np
import pytest

from ..schemas import SettingConfig, SpmAgentConfig
from ..services import games
from ..services.games import (
    GameConfigurationError,
    InvalidActionError,
    SpmAction,
    SpmRoundState,
)


def test_maintain_payoffs_and_normalization() -> None:
    game = games.make_maintain()

    assert game.payoff(0, (0,), (0,)).tolist() == [20.0, 15.0]
    assert game.payoff(1, (0,), (1,)).tolist() == [10.0, 5.0]
    assert game.leader_bounds == (0.0, 30.0)
    assert game.follower_bounds == (0.0, 15.0)
    assert game.normalize_leader_reward(20.0) == pytest.approx(2 / 3)


def test_randomized_row_mixture_payoff() -> None:
    game = games.make_maintain(randomized=True)

    payoff = game.payoff(np.array([1.0, 3.0, 0.0]), (0,), (0,))

    assert payoff[0] == pytest.approx(27.5)
    assert payoff[1] == pytest.approx(3.75)


def test_all_zero_weights_are_rejected() -> None:
    game = games.make_maintain(randomized=True)

    with pytest.raises(GameConfigurationError):
        game.payoff(np.zeros(3), (0,), (0,))


def test_deterministic_game_rejects_weight_vectors() -> None:
    game = games.make_escape()

    with pytest.raises(InvalidActionError):
        game.payoff(np.array([0.5, 0.5, 0.0]), (0,), (0,))


@pytest.mark.parametrize(
    "matrix",
    [
        [],
        [[(1, 1), (2, 2)]],
        [[(1, 1), (2, 2)], [(3, 3), (float("nan"), 0)]],
    ],
)
def test_invalid_normal_form_matrices(matrix) -> None:
    with pytest.raises(GameConfigurationError):
        games.make_normal_form(matrix)


def test_matrix_design_payments_raise_diagonal_payoffs() -> None:
    game = games.make_matrix_design()
    tau_four = game.payment_index(4.0)

    assert game.payoff(tau_four, (0, 0), (0, 0)).tolist() == [0.0, 7.0, 3.0]
    assert game.payoff(tau_four, (0, 0), (1, 1)).tolist() == [0.0, 2.0, 6.0]
    assert game.payoff(tau_four, (0, 0), (0, 1)).tolist() == [1.0, 6.0, 4.0]
    assert game.leader_actions() == tuple(range(11))


def test_matrix_design_rejects_negative_payments() -> None:
    with pytest.raises(GameConfigurationError):
        games.make_matrix_design(payment_set=[0.0, -1.0])


def test_allocation_decodes_messages() -> None:
    game = games.make_simple_allocation(3, 2)

    assert game.payoff((0, 1), (0,), (0,)).tolist() == [1.0, 1.0]
    assert game.payoff((0, 1), (0,), (1,)).tolist() == [0.0, 0.0]
    assert len(game.leader_actions()) == 9
    with pytest.raises(InvalidActionError):
        game.payoff((0,), (0,), (0,))


def test_type_sampling_is_seeded() -> None:
    game = games.make_simple_allocation(3, 3)
    first = [game.sample_types(np.random.default_rng(7)) for _ in range(3)]
    second = [game.sample_types(np.random.default_rng(7)) for _ in range(3)]

    assert first == second
    assert {profile for profile, _ in game.type_profiles()} == {(0,), (1,), (2,)}


# ---------------------------------------------------------------------------
# Posted prices
# ---------------------------------------------------------------------------


@pytest.fixture()
def agrawal() -> games.MuSpmGame:
    return games.make_mu_spm(games.agrawal_setting())


def test_agrawal_distribution_and_first_best(agrawal: games.MuSpmGame) -> None:
    probabilities = dict(agrawal.type_profiles())

    assert probabilities[(0, 0)] == pytest.approx(0.4)
    assert probabilities[(0, 1)] == pytest.approx(0.4)
    assert probabilities[(1, 0)] == pytest.approx(0.1)
    assert probabilities[(1, 1)] == pytest.approx(0.1)
    expected = sum(p * agrawal.setting.first_best(t) for t, p in agrawal.type_profiles())
    assert expected == pytest.approx(1.1)
    assert agrawal.leader_bounds == (-2.5, 0.0)


def test_buyers_decline_when_indifferent() -> None:
    setting = games.agrawal_setting()

    assert setting.choose_bundle((0.5,), {0: 0.5}) == ()
    assert setting.choose_bundle((0.5,), {0: 0.4}) == (0,)


def test_unit_demand_and_additive_bundles() -> None:
    unit = games.SpmSetting(
        n_agents=1,
        n_items=2,
        message_space_size=2,
        price_grid=games.default_price_grid(),
        valuations=((((1.0, 2.0), 1.0),),),
    )
    additive = games.SpmSetting(
        n_agents=1,
        n_items=2,
        message_space_size=2,
        price_grid=games.default_price_grid(),
        valuations=((((1.0, 2.0), 1.0),),),
        demand="additive",
    )

    assert unit.choose_bundle((1.0, 2.0), {0: 0.0, 1: 0.5}) == (1,)
    assert unit.choose_bundle((1.0, 2.0), {0: 0.0, 1: 1.0}) == (0,)
    assert additive.choose_bundle((1.0, 2.0), {0: 0.0, 1: 0.5}) == (0, 1)
    assert unit.first_best((0,)) == pytest.approx(2.0)
    assert additive.first_best((0,)) == pytest.approx(3.0)


def test_visit_agent_validates_actions() -> None:
    setting = games.agrawal_setting()
    state = SpmRoundState.initial(setting)
    after = games.visit_agent(setting, state, SpmAction(1, ((0, 0.0),)), (0, 1))

    assert after.allocation == (1,)
    assert after.done
    with pytest.raises(InvalidActionError):
        games.visit_agent(setting, state, SpmAction(0, ((0, 0.05),)), (0, 1))
    with pytest.raises(InvalidActionError):
        games.visit_agent(setting, state, SpmAction(0, ()), (0, 1))
    declined = games.visit_agent(setting, state, SpmAction(1, ((0, 0.0),)), (0, 0))
    with pytest.raises(InvalidActionError):
        games.visit_agent(setting, declined, SpmAction(1, ((0, 0.0),)), (0, 0))


def test_reward_from_welfare() -> None:
    assert games.reward_from_welfare(1.0, 1.0) == 0.0
    assert games.reward_from_welfare(0.5, 1.0) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        games.reward_from_welfare(2.0, 1.0)


def test_mechanism_payoffs(agrawal: games.MuSpmGame) -> None:
    def agent_two_first(messages, state):
        agent = 1 if not state.visited[1] else 0
        return SpmAction(agent, tuple((item, 0.0) for item in state.residual_items))

    assert agrawal.payoff(agent_two_first, (0, 1), (0, 0)).tolist() == [0.0, 0.0, 1.0]
    # Agent 2 declines at value 0 and agent 1 buys at 0.
    assert agrawal.payoff(agent_two_first, (1, 0), (0, 0)).tolist() == [0.0, 2.5, 0.0]
    lost = agrawal.payoff(agent_two_first, (1, 1), (0, 0))
    assert lost[0] == pytest.approx(-1.5)


def test_build_game_catalogue() -> None:
    assert games.build_game(SettingConfig(kind="maintain")).name == "maintain"
    assert games.build_game(SettingConfig(kind="maintain_randomized")).randomized
    assert isinstance(
        games.build_game(SettingConfig(kind="allocation", n_items=3, message_space_size=2)),
        games.AllocationGame,
    )
    custom = games.build_game(
        SettingConfig(
            kind="mu_spm",
            n_items=1,
            agents=[
                SpmAgentConfig(values=[[1.0], [2.0]], probabilities=[0.5, 0.5]),
                SpmAgentConfig(values=[[0.5]], probabilities=[1.0]),
            ],
            price_grid=[0.0, 0.5, 1.0, 1.5],
        )
    )
    assert isinstance(custom, games.MuSpmGame)
    assert custom.setting.n_agents == 2
    assert custom.setting.price_grid == (0.0, 0.5, 1.0, 1.5)
    normal = games.build_game(
        SettingConfig(kind="normal_form", matrix=[[[1, 1], [0, 0]], [[0, 0], [2, 2]]])
    )
    assert normal.size == 2


# ---------------------------------------------------------------------------
# Invariants across settings
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("scale", [0.5, 2.0, 40.0])
def test_weight_vectors_are_scale_free(scale: float) -> None:
    game = games.make_maintain(randomized=True)
    rng = np.random.default_rng(3)

    for _ in range(5):
        weights = rng.random(3) + 0.01
        for column in range(3):
            assert np.allclose(
                game.payoff(weights, (0,), (column,)), game.payoff(scale * weights, (0,), (column,))
            )


def test_matrix_design_rewards_exactly_the_split_profiles() -> None:
    game = games.make_matrix_design()

    for leader_action in game.leader_actions():
        for actions in game.action_profiles():
            reward = game.payoff(leader_action, (0, 0), actions)[0]
            assert reward == (1.0 if actions[0] != actions[1] else 0.0)


@pytest.mark.parametrize("n_items,messages", [(1, 1), (3, 1), (3, 3), (4, 2)])
def test_allocation_pays_one_item_per_type(n_items: int, messages: int) -> None:
    game = games.make_simple_allocation(n_items, messages)

    for (item_wanted,), _ in game.type_profiles():
        for message in range(messages):
            total = sum(game.payoff(item, (item_wanted,), (message,))[1] for item in range(n_items))
            assert total == pytest.approx(1.0)


def test_declined_offers_leave_every_buyer_at_zero(agrawal: games.MuSpmGame) -> None:
    top_price = agrawal.setting.price_grid[-1]

    def overpriced(messages, state):
        return SpmAction(state.residual_agents[0], tuple((item, top_price) for item in state.residual_items))

    for types, _ in agrawal.type_profiles():
        payoff = agrawal.payoff(overpriced, types, (0, 1))
        assert payoff[1:].tolist() == [0.0, 0.0]
        assert payoff[0] == pytest.approx(-agrawal.setting.first_best(types))
