"""Versioned checkpoint container: one JSON header line, then a torch payload."""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch

from ..config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from ..schemas import TrainConfig
from .trainer import LeaderTrainer

LOGGER = logging.getLogger(__name__)


class CheckpointError(RuntimeError):
    """Raised when a checkpoint file is malformed or from another version."""


@dataclass(slots=True)
class Checkpoint:
    header: dict[str, Any]
    policy_state: dict[str, torch.Tensor]
    critic_state: dict[str, torch.Tensor]
    config: TrainConfig
    rng_state: dict[str, Any]
    optimizer_state: dict[str, Any]
    critic_optimizer_state: dict[str, Any]
    generator_state: torch.Tensor


def save_checkpoint(path: Path, trainer: LeaderTrainer, *, setting: str) -> Path:
    header = {
        "setting": setting,
        "mode": trainer.config.mode,
        "seed": trainer.config.seed,
        "steps": trainer.steps,
        "observation_count": trainer.policy.observation_count,
        "heads": list(trainer.policy.heads),
    }
    payload = {
        "policy": trainer.policy.state_dict(),
        "critic": trainer.critic.state_dict(),
        "config": json.dumps(trainer.config.model_dump(mode="json")),
        "rng": json.dumps(trainer.rng.bit_generator.state),
        "optimizer": trainer.optimizer.state_dict(),
        "critic_optimizer": trainer.critic_optimizer.state_dict(),
        "generator": trainer.generator.get_state(),
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    path.parent.mkdir(parents=True, exist_ok=True)
    line = f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} {json.dumps(header, sort_keys=True)}\n"
    path.write_bytes(line.encode("utf-8") + buffer.getvalue())
    LOGGER.debug("Wrote checkpoint %s", path)
    return path


def read_header(path: Path) -> dict[str, Any]:
    with path.open("rb") as handle:
        return _parse_header(handle.readline())


def _parse_header(line: bytes) -> dict[str, Any]:
    try:
        magic, version, body = line.decode("utf-8").rstrip("\n").split(" ", 2)
    except (UnicodeDecodeError, ValueError) as exc:
        raise CheckpointError("Checkpoint header is unreadable") from exc
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"Not a checkpoint file (magic {magic!r})")
    if version != f"v{CHECKPOINT_VERSION}":
        raise CheckpointError(f"Unsupported checkpoint version {version!r}")
    return json.loads(body)


def load_checkpoint(path: Path) -> Checkpoint:
    with path.open("rb") as handle:
        header = _parse_header(handle.readline())
        payload = torch.load(io.BytesIO(handle.read()), weights_only=True)
    return Checkpoint(
        header=header,
        policy_state=payload["policy"],
        critic_state=payload["critic"],
        config=TrainConfig.model_validate(json.loads(payload["config"])),
        rng_state=json.loads(payload["rng"]),
        optimizer_state=payload["optimizer"],
        critic_optimizer_state=payload["critic_optimizer"],
        generator_state=payload["generator"],
    )


def restore_trainer(trainer: LeaderTrainer, checkpoint: Checkpoint) -> LeaderTrainer:
    trainer.policy.load_state_dict(checkpoint.policy_state)
    trainer.critic.load_state_dict(checkpoint.critic_state)
    trainer.optimizer.load_state_dict(checkpoint.optimizer_state)
    trainer.critic_optimizer.load_state_dict(checkpoint.critic_optimizer_state)
    trainer.rng.bit_generator.state = checkpoint.rng_state
    trainer.generator.set_state(checkpoint.generator_state)
    trainer.steps = int(checkpoint.header.get("steps", 0))
    return trainer


__all__ = [
    "Checkpoint",
    "CheckpointError",
    "load_checkpoint",
    "read_header",
    "restore_trainer",
    "save_checkpoint",
]
