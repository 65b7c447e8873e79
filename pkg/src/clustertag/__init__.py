"""Cluster-based tagged-heap allocator model and tag-collision analytics.

The package simulates a 64-bit heap at desk scale: a clustered allocator
with three-layer randomized placement and circular-shift tag updating, the
classic random/staggered/fixed tag-assignment baselines, collision-distance
metrics with closed-form entropy results, and a probabilistic
vulnerability-detection harness.
"""

from .addressing import AddressSpace, ShadowMap, TagFault, tag_of, tag_with, untag
from .allocator import ClusterTagAllocator
from .baselines import BaselineAllocator, StrategyModel
from .config import RunConfig
from .models import build_model

__version__ = "0.1.0"

__all__ = [
    "AddressSpace",
    "BaselineAllocator",
    "ClusterTagAllocator",
    "RunConfig",
    "ShadowMap",
    "StrategyModel",
    "TagFault",
    "build_model",
    "tag_of",
    "tag_with",
    "untag",
    "__version__",
]
