"""Leader policy, observation-action cache and critic networks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import torch
import torch.nn as nn
from torch.distributions import Categorical

from .pomdp import LeaderAction, Observation

LOGGER = logging.getLogger(__name__)

ActMode = Literal["sample", "greedy"]

MASKED_LOGIT = -1e9


class LeaderPolicy(nn.Module):
    """Factorized categorical policy over one or more action heads.

    The tabular architecture keeps one logit row per observation class; the
    MLP architecture scores the observation's one-hot features with a single
    hidden layer.
    """

    def __init__(
        self,
        observation_count: int,
        heads: Sequence[int],
        architecture: Literal["tabular", "mlp"] = "tabular",
        hidden_width: int = 64,
    ) -> None:
        super().__init__()
        self.observation_count = observation_count
        self.heads = tuple(int(size) for size in heads)
        self.architecture = architecture
        width = sum(self.heads)
        if architecture == "tabular":
            self.logits = nn.Parameter(torch.zeros(observation_count, width, dtype=torch.float64))
            self.body = None
        elif architecture == "mlp":
            self.logits = None
            self.body = nn.Sequential(
                nn.Linear(observation_count, hidden_width),
                nn.Tanh(),
                nn.Linear(hidden_width, width),
            ).double()
        else:
            raise ValueError(f"Unknown policy architecture {architecture!r}")

    def scores(self, features: torch.Tensor) -> torch.Tensor:
        if self.logits is not None:
            return features @ self.logits
        return self.body(features)

    def distributions(
        self, features: torch.Tensor, masks: torch.Tensor | None = None
    ) -> list[Categorical]:
        scores = self.scores(features)
        if masks is not None:
            scores = scores.masked_fill(~masks, MASKED_LOGIT)
        return [Categorical(logits=chunk) for chunk in torch.split(scores, self.heads, dim=-1)]

    def log_prob(
        self, features: torch.Tensor, actions: torch.Tensor, masks: torch.Tensor | None = None
    ) -> torch.Tensor:
        heads = self.distributions(features, masks)
        return torch.stack([dist.log_prob(actions[:, h]) for h, dist in enumerate(heads)]).sum(0)

    def entropy(self, features: torch.Tensor, masks: torch.Tensor | None = None) -> torch.Tensor:
        return torch.stack([dist.entropy() for dist in self.distributions(features, masks)]).sum(0)

    def head_probabilities(self, observation: Observation) -> list[np.ndarray]:
        features = torch.as_tensor(observation.features, dtype=torch.float64).unsqueeze(0)
        masks = flat_mask(self.heads, observation.mask)
        with torch.no_grad():
            heads = self.distributions(features, torch.as_tensor(masks).unsqueeze(0))
        return [dist.probs[0].numpy() for dist in heads]

    def set_tabular(self, logits: np.ndarray) -> None:
        if self.logits is None:
            raise ValueError("Only tabular policies accept explicit logits")
        with torch.no_grad():
            self.logits.copy_(torch.as_tensor(logits, dtype=torch.float64))


class CriticNet(nn.Module):
    """State-value regressor; centralized critics read the full hidden state."""

    def __init__(self, input_size: int, hidden_width: int = 64, *, centralized: bool = True) -> None:
        super().__init__()
        self.centralized = centralized
        self.net = nn.Sequential(
            nn.Linear(input_size, hidden_width),
            nn.Tanh(),
            nn.Linear(hidden_width, hidden_width),
            nn.Tanh(),
            nn.Linear(hidden_width, 1),
        ).double()

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.net(features).squeeze(-1)


def flat_mask(heads: Sequence[int], mask: tuple[np.ndarray, ...] | None) -> np.ndarray:
    if mask is None:
        return np.ones(sum(heads), dtype=bool)
    return np.concatenate([np.asarray(part, dtype=bool) for part in mask])


# ---------------------------------------------------------------------------
# Acting through the per-episode cache
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class ObservationActionCache:
    """Per-episode memo: a repeated observation always gets the stored action."""

    entries: dict[int, LeaderAction] = field(default_factory=dict)

    def __contains__(self, index: int) -> bool:
        return index in self.entries

    def get(self, index: int) -> LeaderAction | None:
        return self.entries.get(index)

    def store(self, index: int, action: LeaderAction) -> None:
        self.entries[index] = action

    def clear(self) -> None:
        self.entries.clear()


def act(
    policy: LeaderPolicy,
    cache: ObservationActionCache,
    observation: Observation,
    mode: ActMode,
    rng: np.random.Generator | None = None,
) -> LeaderAction:
    """Return the cached action, or draw (``sample``) / argmax (``greedy``) and store it."""

    cached = cache.get(observation.index)
    if cached is not None:
        return cached
    choices = []
    for probabilities in policy.head_probabilities(observation):
        if mode == "greedy":
            choices.append(int(np.argmax(probabilities)))
        else:
            if rng is None:
                raise ValueError("Sample mode needs a random generator")
            probabilities = probabilities / probabilities.sum()
            choices.append(int(rng.choice(len(probabilities), p=probabilities)))
    action = tuple(choices)
    cache.store(observation.index, action)
    return action


class CachedActor:
    """Actor used inside POMDP episodes: the policy behind a fresh cache per episode."""

    def __init__(
        self,
        policy: LeaderPolicy,
        mode: ActMode = "sample",
        rng: np.random.Generator | None = None,
    ) -> None:
        self.policy = policy
        self.mode = mode
        self.rng = rng
        self.cache = ObservationActionCache()

    def reset(self) -> None:
        self.cache.clear()

    def decide(self, observation: Observation) -> tuple[LeaderAction, bool]:
        fresh = observation.index not in self.cache
        return act(self.policy, self.cache, observation, self.mode, self.rng), fresh


__all__ = [
    "ActMode",
    "CachedActor",
    "CriticNet",
    "LeaderPolicy",
    "ObservationActionCache",
    "act",
    "flat_mask",
]
