"""Uniform construction of allocator models from a RunConfig.

Every model exposes the same surface: ``allocate(size, record_id=None)``,
``deallocate(addr)``, ``check_access(addr, length)``, ``snapshot()``,
``live_chunks()``, ``stats()``, plus ``history``/``records`` when history
recording is enabled.
"""

from __future__ import annotations

from dataclasses import replace

from .allocator import ClusterTagAllocator
from .baselines import BaselineAllocator
from .config import RunConfig


def build_model(config: RunConfig):
    if config.strategy == "clustertag":
        return ClusterTagAllocator(config)
    return BaselineAllocator(config)


def with_seed(config: RunConfig, seed: int) -> RunConfig:
    return replace(config, seed=int(seed))
