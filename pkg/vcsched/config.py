"""Harness settings read from the environment (and an optional ``.env`` file)."""

import os
import logging
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_SEED = 1
DEFAULT_REPETITIONS = 3
DEFAULT_EXACT_BUDGET = 10**8
DEFAULT_HOST_MEM_BYTES = 4 * 1024**3


def _default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))


@dataclass(frozen=True)
class Settings:
    """Defaults the CLI falls back to when a flag is not given."""

    seed: int = DEFAULT_SEED
    workers: int = 1
    repetitions: int = DEFAULT_REPETITIONS
    exact_budget: int = DEFAULT_EXACT_BUDGET
    host_mem_bytes: int = DEFAULT_HOST_MEM_BYTES


def _read_int(name: str, default: int, minimum: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring {name}={raw!r}: not an integer")
        return default
    if value < minimum:
        logger.warning(f"Ignoring {name}={value}: must be >= {minimum}")
        return default
    return value


def load_settings(dotenv_path: Optional[str] = None) -> Settings:
    """Load settings, letting process environment values override ``.env``."""
    load_dotenv(dotenv_path)

    return Settings(
        seed=_read_int("VCSCHED_SEED", DEFAULT_SEED, 0),
        workers=_read_int("VCSCHED_WORKERS", _default_workers(), 1),
        repetitions=_read_int("VCSCHED_REPETITIONS", DEFAULT_REPETITIONS, 1),
        exact_budget=_read_int("VCSCHED_EXACT_BUDGET", DEFAULT_EXACT_BUDGET, 1),
        host_mem_bytes=_read_int(
            "VCSCHED_HOST_MEM_BYTES", DEFAULT_HOST_MEM_BYTES, 1
        ),
    )
