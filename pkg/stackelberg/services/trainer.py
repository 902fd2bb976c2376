"""Actor-critic training of the leader policy on the Stackelberg POMDP."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..schemas import TrainConfig
from .games import BayesianGame
from .pomdp import DecisionMap, EpisodeSchedule, EpisodeTrace, Phase, StackelbergPomdp
from .policy import CachedActor, CriticNet, LeaderPolicy, flat_mask

LOGGER = logging.getLogger(__name__)

DEFAULT_CRITIC_LEARNING_RATE = 1e-3
MAX_GRAD_NORM = 0.5

RewardFn = Callable[[EpisodeTrace], np.ndarray]


class TrainingError(RuntimeError):
    """Raised when a gradient, loss or update stops being finite."""


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class RolloutBatch:
    observations: torch.Tensor
    masks: torch.Tensor
    actions: torch.Tensor
    states: torch.Tensor
    returns: torch.Tensor
    fresh: torch.Tensor
    episodes: int

    def __len__(self) -> int:
        return int(self.returns.shape[0])

    def critic_inputs(self, critic: CriticNet) -> torch.Tensor:
        return self.states if critic.centralized else self.observations


def raw_rewards(trace: EpisodeTrace) -> np.ndarray:
    return np.array([step.reward for step in trace.steps], dtype=float)


def normalized_rewards(game: BayesianGame, schedule: EpisodeSchedule) -> RewardFn:
    """Each reward sub-episode pays its normalized leader payoff divided by R."""

    def rewards(trace: EpisodeTrace) -> np.ndarray:
        values = np.zeros(len(trace.steps))
        for index, step in enumerate(trace.steps):
            if step.phase is Phase.REWARD and step.done:
                values[index] = (
                    game.normalize_leader_reward(step.reward) / schedule.reward_subepisodes
                )
        return values

    return rewards


def reward_to_go(rewards: np.ndarray) -> np.ndarray:
    return np.cumsum(rewards[::-1])[::-1].copy()


def build_batch(
    traces: Sequence[EpisodeTrace], heads: Sequence[int], reward_fn: RewardFn | None = None
) -> RolloutBatch:
    reward_fn = reward_fn or raw_rewards
    observations, masks, actions, states, returns, fresh = [], [], [], [], [], []
    for trace in traces:
        returns.append(reward_to_go(reward_fn(trace)))
        for step in trace.steps:
            observations.append(step.observation.features)
            masks.append(flat_mask(heads, step.observation.mask))
            actions.append(step.action)
            states.append(step.state_features)
            fresh.append(step.fresh)
    if not observations:
        raise TrainingError("Cannot build a batch from empty traces")
    return RolloutBatch(
        observations=torch.as_tensor(np.array(observations), dtype=torch.float64),
        masks=torch.as_tensor(np.array(masks), dtype=torch.bool),
        actions=torch.as_tensor(np.array(actions), dtype=torch.long),
        states=torch.as_tensor(np.array(states), dtype=torch.float64),
        returns=torch.as_tensor(np.concatenate(returns), dtype=torch.float64),
        fresh=torch.as_tensor(np.array(fresh), dtype=torch.bool),
        episodes=len(traces),
    )


def _check_finite(name: str, tensor: torch.Tensor) -> None:
    if not torch.all(torch.isfinite(tensor)):
        raise TrainingError(
            f"{name} is not finite (min={tensor.min().item()!r}, max={tensor.max().item()!r})"
        )


# ---------------------------------------------------------------------------
# Estimators and updates
# ---------------------------------------------------------------------------


def policy_gradient_estimate(
    traces: Sequence[EpisodeTrace],
    policy: LeaderPolicy,
    critic: CriticNet | None = None,
    *,
    reward_fn: RewardFn | None = None,
    fresh_only: bool = True,
    baseline: float = 0.0,
) -> np.ndarray:
    """Batch-averaged score-function gradient with reward-to-go.

    Under the observation-action cache an episode's action probability is the
    product over cache misses, so by default only fresh steps contribute.
    A constant ``baseline`` is subtracted from every return; it leaves the
    expectation unchanged.
    """

    batch = build_batch(traces, policy.heads, reward_fn)
    advantages = batch.returns - baseline
    if critic is not None:
        with torch.no_grad():
            advantages = advantages - critic(batch.critic_inputs(critic))
    selected = batch.fresh if fresh_only else torch.ones_like(batch.fresh)
    parameters = [p for p in policy.parameters() if p.requires_grad]
    log_probs = policy.log_prob(
        batch.observations[selected], batch.actions[selected], batch.masks[selected]
    )
    objective = (log_probs * advantages[selected]).sum() / batch.episodes
    grads = torch.autograd.grad(objective, parameters, allow_unused=True)
    vector = torch.cat(
        [
            (g if g is not None else torch.zeros_like(p)).reshape(-1)
            for g, p in zip(grads, parameters)
        ]
    )
    _check_finite("policy gradient", vector)
    return vector.detach().numpy()


def critic_update(
    critic: CriticNet, optimizer: torch.optim.Optimizer, batch: RolloutBatch
) -> float:
    """One regression step toward reward-to-go targets; returns the MSE before the step."""

    values = critic(batch.critic_inputs(critic))
    loss = F.mse_loss(values, batch.returns)
    _check_finite("value loss", loss.detach())
    optimizer.zero_grad()
    loss.backward()
    torch.nn.utils.clip_grad_norm_(critic.parameters(), MAX_GRAD_NORM)
    optimizer.step()
    return float(loss.item())


def clipped_surrogate_loss(
    log_probs: torch.Tensor,
    old_log_probs: torch.Tensor,
    advantages: torch.Tensor,
    clip_ratio: float,
) -> torch.Tensor:
    """Negated clipped surrogate averaged over the minibatch."""

    ratio = torch.exp(log_probs - old_log_probs)
    surrogate = ratio * advantages
    clipped = torch.clamp(ratio, 1 - clip_ratio, 1 + clip_ratio) * advantages
    return -torch.min(surrogate, clipped).mean()


def proximal_update(
    policy: LeaderPolicy,
    optimizer: torch.optim.Optimizer,
    batch: RolloutBatch,
    config: TrainConfig,
    critic: CriticNet | None = None,
    critic_optimizer: torch.optim.Optimizer | None = None,
    *,
    generator: torch.Generator | None = None,
) -> float:
    """Clipped-surrogate epochs over shuffled minibatches; returns the mean value loss."""

    with torch.no_grad():
        old_log_probs = policy.log_prob(batch.observations, batch.actions, batch.masks)
        values = (
            critic(batch.critic_inputs(critic)) if critic is not None else torch.zeros_like(batch.returns)
        )
    advantages = batch.returns - values
    value_losses: list[float] = []
    if torch.all(advantages == 0):
        return 0.0
    if len(advantages) > 1 and advantages.std() > 1e-8:
        advantages = (advantages - advantages.mean()) / advantages.std()
    entropy_coef = config.effective_entropy_coef
    size = len(batch)
    for _ in range(config.update_epochs):
        order = torch.randperm(size, generator=generator)
        for start in range(0, size, config.minibatch_size):
            index = order[start : start + config.minibatch_size]
            log_probs = policy.log_prob(
                batch.observations[index], batch.actions[index], batch.masks[index]
            )
            loss = clipped_surrogate_loss(
                log_probs, old_log_probs[index], advantages[index], config.clip_ratio
            )
            if entropy_coef:
                loss = loss - entropy_coef * policy.entropy(
                    batch.observations[index], batch.masks[index]
                ).mean()
            _check_finite("policy loss", loss.detach())
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(policy.parameters(), MAX_GRAD_NORM)
            optimizer.step()
            if critic is not None and critic_optimizer is not None:
                sub = RolloutBatch(
                    observations=batch.observations[index],
                    masks=batch.masks[index],
                    actions=batch.actions[index],
                    states=batch.states[index],
                    returns=batch.returns[index],
                    fresh=batch.fresh[index],
                    episodes=batch.episodes,
                )
                value_losses.append(critic_update(critic, critic_optimizer, sub))
    for parameter in policy.parameters():
        _check_finite("policy parameters", parameter.detach())
    return float(np.mean(value_losses)) if value_losses else 0.0


def evaluate(policy: LeaderPolicy, pomdp: StackelbergPomdp, seed: int) -> float:
    """Greedy episode; mean normalized leader payoff over the reward sub-episodes."""

    trace = pomdp.run_episode(CachedActor(policy, "greedy"), seed)
    game = pomdp.game
    return float(np.mean([game.normalize_leader_reward(r) for r in trace.reward_payoffs]))


def greedy_decisions(policy: LeaderPolicy, pomdp: StackelbergPomdp) -> dict[int, tuple[int, ...]]:
    """Argmax action for every observation class."""

    protocol = pomdp.protocol
    decisions: dict[int, tuple[int, ...]] = {}
    for index in range(protocol.observation_count):
        features = torch.zeros(1, protocol.observation_count, dtype=torch.float64)
        features[0, index] = 1.0
        masks = torch.as_tensor(flat_mask(policy.heads, protocol.observation_mask(index))).unsqueeze(0)
        with torch.no_grad():
            heads = policy.distributions(features, masks)
        decisions[index] = tuple(int(torch.argmax(dist.probs[0])) for dist in heads)
    return decisions


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(slots=True, frozen=True)
class EvaluationRow:
    step: int
    eval_reward: float
    value_loss: float
    mode: str
    seed: int
    train_reward: float | None = None


class LeaderTrainer:
    """Collects batches of long episodes and updates policy and critic between them."""

    def __init__(
        self,
        game: BayesianGame,
        schedule: EpisodeSchedule,
        config: TrainConfig,
        *,
        verbose_rewards: bool = False,
    ) -> None:
        self.game = game
        self.schedule = schedule
        self.config = config
        self.verbose_rewards = verbose_rewards
        torch.manual_seed(config.seed)
        self.rng = np.random.default_rng(config.seed)
        self.generator = torch.Generator().manual_seed(config.seed)
        self.pomdp = StackelbergPomdp(game, schedule, epsilon=config.mw_epsilon)
        protocol = self.pomdp.protocol
        self.policy = LeaderPolicy(
            protocol.observation_count,
            protocol.heads,
            architecture=config.architecture,
            hidden_width=config.hidden_width,
        )
        centralized = config.mode == "centralized_critic"
        self.critic = CriticNet(
            self.pomdp.state_feature_size if centralized else protocol.observation_count,
            config.critic_hidden_width,
            centralized=centralized,
        )
        self.optimizer = torch.optim.Adam(self.policy.parameters(), lr=config.learning_rate)
        self.critic_optimizer = torch.optim.Adam(
            self.critic.parameters(),
            lr=config.critic_learning_rate or DEFAULT_CRITIC_LEARNING_RATE,
        )
        self.reward_fn = normalized_rewards(game, schedule)
        self.steps = 0
        self.log: list[EvaluationRow] = []

    def _episode_seed(self) -> int:
        return int(self.rng.integers(0, 2**31 - 1))

    def collect(self) -> list[EpisodeTrace]:
        actor = CachedActor(self.policy, "sample", self.rng)
        return [
            self.pomdp.run_episode(actor, self._episode_seed())
            for _ in range(self.config.batch_episodes)
        ]

    def update(self, traces: Sequence[EpisodeTrace]) -> float:
        batch = build_batch(traces, self.policy.heads, self.reward_fn)
        if self.config.algorithm == "reinforce":
            gradient = policy_gradient_estimate(
                traces, self.policy, self.critic, reward_fn=self.reward_fn
            )
            self._apply_ascent(gradient)
            return critic_update(self.critic, self.critic_optimizer, batch)
        return proximal_update(
            self.policy,
            self.optimizer,
            batch,
            self.config,
            self.critic,
            self.critic_optimizer,
            generator=self.generator,
        )

    def _apply_ascent(self, gradient: np.ndarray) -> None:
        offset = 0
        self.optimizer.zero_grad()
        for parameter in self.policy.parameters():
            count = parameter.numel()
            chunk = torch.as_tensor(gradient[offset : offset + count]).reshape(parameter.shape)
            parameter.grad = -chunk.to(parameter.dtype)
            offset += count
        self.optimizer.step()

    def evaluation_seed(self, index: int) -> int:
        return self.config.seed * 100_003 + index

    def evaluate(self, index: int) -> float:
        return evaluate(self.policy, self.pomdp, self.evaluation_seed(index))

    def greedy_episode(self, index: int) -> EpisodeTrace:
        """The full greedy episode behind evaluation ``index``, hidden state included."""

        return self.pomdp.run_episode(CachedActor(self.policy, "greedy"), self.evaluation_seed(index))

    def train(self, total_steps: int | None = None) -> list[EvaluationRow]:
        """Train until ``total_steps`` environment steps; one evaluation per interval boundary."""

        total = total_steps if total_steps is not None else self.config.total_steps
        interval = self.config.eval_interval
        # Boundaries and evaluation seeds follow the step count across resumes.
        next_eval = (self.steps // interval + 1) * interval
        value_loss = math.nan
        while self.steps < total:
            traces = self.collect()
            self.steps += sum(len(trace) for trace in traces)
            value_loss = self.update(traces)
            train_reward = None
            if self.verbose_rewards:
                train_reward = float(np.mean([self.reward_fn(t).sum() for t in traces]))
                LOGGER.info(
                    "seed=%s step=%s train_reward=%.4f", self.config.seed, self.steps, train_reward
                )
            while next_eval <= min(self.steps, total):
                reward = self.evaluate(next_eval // interval - 1)
                row = EvaluationRow(
                    step=next_eval,
                    eval_reward=reward,
                    value_loss=value_loss,
                    mode=self.config.mode,
                    seed=self.config.seed,
                    train_reward=train_reward,
                )
                self.log.append(row)
                LOGGER.info(
                    "seed=%s step=%s eval_reward=%.4f value_loss=%.4f",
                    row.seed,
                    row.step,
                    row.eval_reward,
                    row.value_loss,
                )
                next_eval += interval
        return self.log

    def greedy_decisions(self) -> DecisionMap:
        return greedy_decisions(self.policy, self.pomdp)


__all__ = [
    "EvaluationRow",
    "LeaderTrainer",
    "RolloutBatch",
    "TrainingError",
    "build_batch",
    "clipped_surrogate_loss",
    "critic_update",
    "evaluate",
    "greedy_decisions",
    "normalized_rewards",
    "policy_gradient_estimate",
    "proximal_update",
    "raw_rewards",
    "reward_to_go",
]
