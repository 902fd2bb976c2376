"""Tests for the leader policy, its cache and the critic."""
from __future__ import annotations

import numpy as np
import pytest
import torch

from ..services.policy import (
    CachedActor,
    CriticNet,
    LeaderPolicy,
    ObservationActionCache,
    act,
    flat_mask,
)
from ..services.pomdp import Observation


def _observation(index: int, count: int, mask=None) -> Observation:
    features = np.zeros(count)
    features[index] = 1.0
    return Observation(index, features, mask)


def test_uniform_start_and_masking() -> None:
    policy = LeaderPolicy(2, (3,))

    (probabilities,) = policy.head_probabilities(_observation(0, 2))
    assert probabilities.tolist() == pytest.approx([1 / 3] * 3)

    masked = _observation(1, 2, (np.array([True, False, True]),))
    (probabilities,) = policy.head_probabilities(masked)
    assert probabilities.tolist() == pytest.approx([0.5, 0.0, 0.5])


def test_factorized_heads_are_independent() -> None:
    policy = LeaderPolicy(1, (2, 3))
    logits = np.zeros((1, 5))
    logits[0, 1] = np.log(3.0)
    policy.set_tabular(logits)

    first, second = policy.head_probabilities(_observation(0, 1))
    assert first.tolist() == pytest.approx([0.25, 0.75])
    assert second.tolist() == pytest.approx([1 / 3] * 3)
    assert flat_mask((2, 3), None).tolist() == [True] * 5


def test_cache_returns_stored_action() -> None:
    policy = LeaderPolicy(1, (2,))
    policy.set_tabular(np.array([[5.0, 0.0]]))
    cache = ObservationActionCache()
    observation = _observation(0, 1)

    assert act(policy, cache, observation, "greedy") == (0,)
    policy.set_tabular(np.array([[0.0, 5.0]]))
    assert act(policy, cache, observation, "greedy") == (0,)
    cache.clear()
    assert act(policy, cache, observation, "greedy") == (1,)


def test_sampling_needs_a_generator() -> None:
    with pytest.raises(ValueError):
        act(LeaderPolicy(1, (2,)), ObservationActionCache(), _observation(0, 1), "sample")


def test_cached_actor_reports_fresh_draws() -> None:
    actor = CachedActor(LeaderPolicy(2, (4,)), "sample", np.random.default_rng(0))

    first, fresh = actor.decide(_observation(0, 2))
    again, repeated = actor.decide(_observation(0, 2))
    assert first == again
    assert fresh and not repeated
    actor.reset()
    _, fresh = actor.decide(_observation(0, 2))
    assert fresh


def test_log_prob_matches_probabilities() -> None:
    policy = LeaderPolicy(2, (2, 2))
    policy.set_tabular(np.array([[1.0, 0.0, 0.0, 2.0], [0.0, 0.0, 0.0, 0.0]]))
    features = torch.eye(2, dtype=torch.float64)
    actions = torch.tensor([[0, 1], [1, 0]])

    log_probs = policy.log_prob(features, actions)
    expected_first = np.log(np.e / (np.e + 1)) + np.log(np.e**2 / (1 + np.e**2))
    assert log_probs[0].item() == pytest.approx(expected_first)
    assert log_probs[1].item() == pytest.approx(2 * np.log(0.5))


def test_mlp_policy_and_critic_shapes() -> None:
    torch.manual_seed(0)
    policy = LeaderPolicy(4, (3, 2), architecture="mlp", hidden_width=8)
    critic = CriticNet(6, 8, centralized=True)

    heads = policy.distributions(torch.eye(4, dtype=torch.float64))
    assert [dist.probs.shape for dist in heads] == [(4, 3), (4, 2)]
    assert critic(torch.zeros(5, 6, dtype=torch.float64)).shape == (5,)
    with pytest.raises(ValueError):
        policy.set_tabular(np.zeros((4, 5)))


def test_unknown_architecture() -> None:
    with pytest.raises(ValueError):
        LeaderPolicy(1, (2,), architecture="recurrent")


@pytest.mark.parametrize("heads", [(3,), (2, 3)])
def test_score_function_has_zero_mean(heads: tuple[int, ...]) -> None:
    policy = LeaderPolicy(2, heads)
    policy.set_tabular(np.random.default_rng(5).normal(size=(2, sum(heads))))
    profiles = [tuple(int(a) for a in action) for action in np.ndindex(*heads)]
    actions = torch.tensor(profiles)

    for index in range(2):
        features = torch.zeros(len(profiles), 2, dtype=torch.float64)
        features[:, index] = 1.0
        log_probs = policy.log_prob(features, actions)
        weights = log_probs.detach().exp()
        assert weights.sum().item() == pytest.approx(1.0)
        (gradient,) = torch.autograd.grad((weights * log_probs).sum(), [policy.logits])
        assert np.abs(gradient.numpy()).max() < 1e-8
