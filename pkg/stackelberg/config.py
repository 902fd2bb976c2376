"""Application configuration settings."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Final

BASE_DIR: Final[Path] = Path(__file__).resolve().parent.parent
DATA_DIR: Final[Path] = BASE_DIR / "data"
DEFAULT_OUTPUT_ROOT: Final[Path] = DATA_DIR / "results"
OUTPUT_ROOT: Final[Path] = Path(
    os.getenv("STACKELBERG_OUTPUT_ROOT", str(DEFAULT_OUTPUT_ROOT))
)
CONFIG_DIR: Final[Path] = Path(
    os.getenv("STACKELBERG_CONFIG_DIR", str(BASE_DIR / "configs"))
)

# Seeds of one experiment run in parallel up to this many worker processes.
WORKERS: Final[int] = int(os.getenv("STACKELBERG_WORKERS", 1))

# Multiplicative-weights update magnitude used when a config omits it.
MW_EPSILON: Final[float] = float(os.getenv("STACKELBERG_MW_EPSILON", 0.1))

# Environment steps between greedy evaluation episodes.
EVAL_INTERVAL: Final[int] = int(os.getenv("STACKELBERG_EVAL_INTERVAL", 10_000))

CHECKPOINT_MAGIC: Final[str] = "STACKELBERG-CHECKPOINT"
CHECKPOINT_VERSION: Final[int] = 2
SCHEMA_VERSION: Final[int] = 1
