"""Tests for reward shaping, the gradient estimator and the training loop."""
from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from ..schemas import TrainConfig
from ..services import games
from ..services.oracle import exact_objective
from ..services.policy import CachedActor, LeaderPolicy
from ..services.pomdp import EpisodeSchedule, MappedActor, StackelbergPomdp
from ..services.trainer import (
    LeaderTrainer,
    build_batch,
    clipped_surrogate_loss,
    evaluate,
    normalized_rewards,
    policy_gradient_estimate,
    proximal_update,
    reward_to_go,
)


def _config(**overrides) -> TrainConfig:
    values = dict(
        total_steps=300,
        eval_interval=100,
        batch_episodes=2,
        update_epochs=2,
        minibatch_size=16,
        seed=4,
    )
    values.update(overrides)
    return TrainConfig(**values)


def test_reward_to_go() -> None:
    assert reward_to_go(np.array([0.0, 1.0, 0.0, 2.0])).tolist() == [3.0, 3.0, 2.0, 2.0]


def test_normalized_return_is_mean_reward() -> None:
    game = games.make_maintain()
    schedule = EpisodeSchedule(4, 5)
    env = StackelbergPomdp(game, schedule)
    trace = env.run_episode(MappedActor({0: (1,)}), seed=8)

    rewards = normalized_rewards(game, schedule)(trace)
    expected = np.mean([game.normalize_leader_reward(r) for r in trace.reward_payoffs])
    assert rewards.sum() == pytest.approx(expected)


def test_proximal_update_moves_the_policy() -> None:
    game = games.make_simple_allocation(2, 2)
    schedule = EpisodeSchedule(3, 2)
    env = StackelbergPomdp(game, schedule)
    policy = LeaderPolicy(2, (2,))
    actor = CachedActor(policy, "sample", np.random.default_rng(1))
    traces = [env.run_episode(actor, seed) for seed in range(6)]
    batch = build_batch(traces, policy.heads, normalized_rewards(game, schedule))
    optimizer = torch.optim.Adam(policy.parameters(), lr=0.05)

    loss = proximal_update(policy, optimizer, batch, _config(), generator=torch.Generator().manual_seed(0))

    assert math.isfinite(loss)
    assert not torch.allclose(policy.logits, torch.zeros_like(policy.logits))


def test_zero_advantages_leave_the_policy_unchanged() -> None:
    game = games.make_simple_allocation(2, 2)
    env = StackelbergPomdp(game, EpisodeSchedule(3, 2))
    policy = LeaderPolicy(2, (2,))
    policy.set_tabular(np.array([[0.3, -0.1], [0.0, 0.2]]))
    before = policy.logits.detach().clone()
    actor = CachedActor(policy, "sample", np.random.default_rng(2))
    traces = [env.run_episode(actor, seed) for seed in range(4)]
    batch = build_batch(traces, policy.heads, lambda trace: np.zeros(len(trace.steps)))
    optimizer = torch.optim.Adam(policy.parameters(), lr=0.05)

    loss = proximal_update(policy, optimizer, batch, _config(), generator=torch.Generator().manual_seed(0))

    assert loss == 0.0
    assert torch.equal(policy.logits, before)


def test_clipped_ratios_carry_no_gradient() -> None:
    log_probs = torch.log(torch.tensor([0.9, 0.1, 0.55], dtype=torch.float64)).requires_grad_()
    old_log_probs = torch.log(torch.full((3,), 0.5, dtype=torch.float64))
    advantages = torch.tensor([1.0, -1.0, 1.0], dtype=torch.float64)

    loss = clipped_surrogate_loss(log_probs, old_log_probs, advantages, clip_ratio=0.2)
    loss.backward()

    # Ratios 1.8 and 0.2 sit outside [0.8, 1.2] on the side their advantage favours.
    assert loss.item() == pytest.approx(-(1.2 - 0.8 + 1.1) / 3)
    assert log_probs.grad[:2].tolist() == [0.0, 0.0]
    assert log_probs.grad[2].item() == pytest.approx(-1.1 / 3)


def _greedy_policy(observations: int, heads: tuple[int, ...], choices: dict[int, tuple[int, ...]]) -> LeaderPolicy:
    policy = LeaderPolicy(observations, heads)
    logits = np.zeros((observations, sum(heads)))
    for observation, action in choices.items():
        offset = 0
        for choice, size in zip(action, heads):
            logits[observation, offset + choice] = 50.0
            offset += size
    policy.set_tabular(logits)
    return policy


def test_evaluate_row_a_on_maintain() -> None:
    pomdp = StackelbergPomdp(games.make_maintain(), EpisodeSchedule(100, 10))
    policy = _greedy_policy(1, (3,), {0: (0,)})

    assert evaluate(policy, pomdp, seed=0) == pytest.approx(2 / 3)


def test_evaluate_row_c_on_escape() -> None:
    pomdp = StackelbergPomdp(games.make_escape(), EpisodeSchedule(100, 10))
    policy = _greedy_policy(1, (3,), {0: (2,)})

    assert evaluate(policy, pomdp, seed=0) == pytest.approx(1.0)


def test_evaluate_truthful_allocation() -> None:
    pomdp = StackelbergPomdp(games.make_simple_allocation(3, 3), EpisodeSchedule(1000, 100))
    policy = _greedy_policy(3, (3,), {message: (message,) for message in range(3)})

    assert evaluate(policy, pomdp, seed=0) == pytest.approx(1.0)


def test_evaluate_mixed_commitment_on_randomized_maintain() -> None:
    game = games.make_maintain(randomized=True)
    pomdp = StackelbergPomdp(game, EpisodeSchedule(200, 10), epsilon=4.0)
    # Weights 3/11 on row A and 8/11 on row B keep column A the best response.
    policy = _greedy_policy(1, pomdp.protocol.heads, {0: (3, 8, 0)})

    assert evaluate(policy, pomdp, seed=0) == pytest.approx((20 * 3 + 30 * 8) / 11 / 30, abs=1e-3)


def test_training_rows_and_determinism() -> None:
    game = games.make_maintain()
    schedule = EpisodeSchedule(3, 1)

    first = LeaderTrainer(game, schedule, _config())
    rows = first.train()
    second = LeaderTrainer(game, schedule, _config())
    again = second.train()

    assert [row.step for row in rows] == [100, 200, 300]
    assert [row.eval_reward for row in rows] == [row.eval_reward for row in again]
    assert torch.equal(first.policy.logits, second.policy.logits)
    assert all(0.0 <= row.eval_reward <= 1.0 for row in rows)
    assert all(row.mode == "centralized_critic" and row.seed == 4 for row in rows)


def test_reinforce_with_plain_critic() -> None:
    game = games.make_simple_allocation(2, 2)
    trainer = LeaderTrainer(
        game,
        EpisodeSchedule(2, 2),
        _config(algorithm="reinforce", mode="plain", total_steps=120, eval_interval=60),
        verbose_rewards=True,
    )

    rows = trainer.train()

    assert len(rows) == 2
    assert all(row.train_reward is not None for row in rows)
    assert not trainer.critic.centralized
    assert set(trainer.greedy_decisions()) == {0, 1}


def _finite_difference(game, schedule, policy: LeaderPolicy, theta: np.ndarray, epsilon: float) -> np.ndarray:
    step = 1e-5
    numeric = np.zeros(theta.size)
    for index in range(theta.size):
        shift = np.zeros(theta.size)
        shift[index] = step
        policy.set_tabular(theta + shift.reshape(theta.shape))
        upper = exact_objective(game, schedule, policy, epsilon=epsilon)
        policy.set_tabular(theta - shift.reshape(theta.shape))
        lower = exact_objective(game, schedule, policy, epsilon=epsilon)
        numeric[index] = (upper - lower) / (2 * step)
    policy.set_tabular(theta)
    return numeric


def _sampled_gradients(game, schedule, policy: LeaderPolicy, epsilon: float, episodes: int, baseline: float = 0.0) -> np.ndarray:
    env = StackelbergPomdp(game, schedule, epsilon=epsilon)
    reward_fn = normalized_rewards(game, schedule)
    actor = CachedActor(policy, "sample", np.random.default_rng(0))
    return np.array(
        [
            policy_gradient_estimate(
                [env.run_episode(actor, seed)], policy, reward_fn=reward_fn, baseline=baseline
            )
            for seed in range(episodes)
        ]
    )


def test_score_function_gradient_matches_finite_differences() -> None:
    game = games.make_simple_allocation(2, 2)
    schedule = EpisodeSchedule(2, 1)
    theta = np.array([[0.4, -0.3], [-0.2, 0.5]])
    policy = LeaderPolicy(2, (2,))
    policy.set_tabular(theta)

    samples = _sampled_gradients(game, schedule, policy, epsilon=0.5, episodes=3000)
    estimate = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(len(samples))
    numeric = _finite_difference(game, schedule, policy, theta, epsilon=0.5)

    assert np.linalg.norm(numeric) > 1e-3
    assert np.all(np.abs(estimate - numeric) <= 4 * stderr + 1e-3)


@pytest.mark.slow
def test_gradient_over_ten_thousand_episodes_is_within_two_percent() -> None:
    # The leader's payoff depends on its row only, so the follower adds no variance.
    game = games.make_normal_form([[(1.0, 1.0), (1.0, 0.0)], [(0.0, 0.0), (0.0, 1.0)]])
    schedule = EpisodeSchedule(2, 1)
    theta = np.array([[0.05, -0.05]])
    policy = LeaderPolicy(1, (2,))
    policy.set_tabular(theta)
    value = exact_objective(game, schedule, policy, epsilon=0.1)

    estimate = _sampled_gradients(game, schedule, policy, 0.1, 10_000, baseline=value).mean(axis=0)
    numeric = _finite_difference(game, schedule, policy, theta, epsilon=0.1)

    assert np.all(np.abs(estimate - numeric) <= 0.02 * np.abs(numeric))


@pytest.mark.slow
def test_allocation_gradient_over_ten_thousand_episodes() -> None:
    game = games.make_simple_allocation(2, 2)
    schedule = EpisodeSchedule(2, 1)
    theta = np.array([[0.4, -0.3], [-0.2, 0.5]])
    policy = LeaderPolicy(2, (2,))
    policy.set_tabular(theta)
    value = exact_objective(game, schedule, policy, epsilon=0.5)

    samples = _sampled_gradients(game, schedule, policy, 0.5, 10_000, baseline=value)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(len(samples))
    numeric = _finite_difference(game, schedule, policy, theta, epsilon=0.5)

    assert np.all(np.abs(samples.mean(axis=0) - numeric) <= 0.02 * np.abs(numeric) + 4 * stderr)


@pytest.mark.slow
def test_maintain_converges_to_row_a() -> None:
    game = games.make_maintain()
    trainer = LeaderTrainer(
        game, EpisodeSchedule(100, 10), _config(total_steps=100_000, eval_interval=10_000, seed=0)
    )
    trainer.train()

    assert trainer.greedy_decisions()[0] == (0,)


@pytest.mark.slow
def test_escape_reaches_row_c() -> None:
    trainer = LeaderTrainer(
        games.make_escape(),
        EpisodeSchedule(100, 10),
        TrainConfig(total_steps=50_000, eval_interval=5_000, seed=0),
    )
    rows = trainer.train()

    assert max(row.eval_reward for row in rows) == pytest.approx(1.0)


@pytest.mark.slow
def test_randomized_maintain_approaches_the_mixed_optimum() -> None:
    trainer = LeaderTrainer(
        games.make_maintain(randomized=True),
        EpisodeSchedule(100, 10),
        TrainConfig(total_steps=200_000, eval_interval=10_000, mw_epsilon=4.0, seed=0),
    )
    rows = trainer.train()

    assert rows[-1].eval_reward >= 0.883


@pytest.mark.slow
@pytest.mark.parametrize("messages", [1, 2, 3])
def test_allocation_plateaus_at_messages_over_items(messages: int) -> None:
    trainer = LeaderTrainer(
        games.make_simple_allocation(3, messages),
        EpisodeSchedule(1000, 100),
        TrainConfig(total_steps=300_000, eval_interval=10_000, seed=0),
    )
    rows = trainer.train()

    assert rows[-1].eval_reward == pytest.approx(messages / 3, abs=0.05)


@pytest.mark.slow
def test_matrix_design_pays_at_least_four() -> None:
    game = games.make_matrix_design()
    trainer = LeaderTrainer(
        game, EpisodeSchedule(100, 10), TrainConfig(total_steps=300_000, eval_interval=10_000, seed=0)
    )
    rows = trainer.train()

    assert rows[-1].eval_reward == pytest.approx(1.0)
    assert trainer.greedy_decisions()[0][0] >= game.payment_index(4.0)


@pytest.mark.slow
def test_posted_prices_beat_the_no_message_mechanism() -> None:
    game = games.make_mu_spm(games.agrawal_setting())
    trainer = LeaderTrainer(
        game,
        EpisodeSchedule(1000, 100),
        TrainConfig(learning_rate=3e-5, total_steps=500_000, eval_interval=10_000, seed=0),
    )
    rows = trainer.train()

    assert rows[-1].eval_reward > game.normalize_leader_reward(-0.15)


@pytest.mark.slow
def test_centralized_critic_fits_returns_better_than_plain() -> None:
    game = games.make_matrix_design()
    final_losses = {}
    for mode in ("centralized_critic", "plain"):
        losses = []
        for seed in range(3):
            trainer = LeaderTrainer(
                game,
                EpisodeSchedule(100, 10),
                TrainConfig(mode=mode, total_steps=100_000, eval_interval=10_000, seed=seed),
            )
            losses.append(trainer.train()[-1].value_loss)
        final_losses[mode] = float(np.mean(losses))

    assert final_losses["centralized_critic"] < 0.2
    assert final_losses["centralized_critic"] < final_losses["plain"]
