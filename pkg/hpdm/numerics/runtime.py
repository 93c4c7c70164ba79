"""Thread count and determinism switches for the torch backend."""

import logging
import os
from typing import Optional

import torch

logger = logging.getLogger(__name__)

THREADS_ENV = "HPDM_THREADS"


def resolve_threads(configured: int) -> int:
    """Thread count after applying the HPDM_THREADS override (0 = torch default)."""
    override = os.environ.get(THREADS_ENV)
    if override:
        try:
            return max(0, int(override))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, override)
    return configured


def configure_threads(threads: Optional[int] = None, deterministic: bool = False) -> int:
    """Apply thread settings; deterministic mode forces one thread.

    Returns the effective intra-op thread count.
    """
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True, warn_only=True)
    else:
        torch.use_deterministic_algorithms(False)
        if threads:
            torch.set_num_threads(threads)
    effective = torch.get_num_threads()
    logger.debug("torch threads=%d deterministic=%s", effective, deterministic)
    return effective
