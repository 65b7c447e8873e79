"""Run configuration shared by the allocator models, simulations, and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field

STRATEGIES = (
    "clustertag",
    "random",
    "random-header",
    "staggered",
    "fixed-temporal",
    "sticky",
)


@dataclass
class RunConfig:
    """Knobs for one reproducible run.

    Defaults match the primary experimental setup: density 5, 16 quarantine
    tags, 8-bit tags, 239 allocatable slots per 256-slot cluster (tag 0 stays
    reserved for cluster metadata and untagged memory).
    """

    seed: int = 1
    density: int = 5                  # 1/density of each 1GB pool is usable
    quarantine: int = 16              # tags per cluster never given to live chunks
    cache_capacity: int = 64          # ready chunks staged per size class
    scan_period: int = 1024           # deallocations per region between scans
    page_threshold: int = 4           # min run of freed pages for fragmented release
    tag_bits: int = 8
    strategy: str = "clustertag"
    allocatable_per_cluster: int = 239
    warmup_ops: int = 5000            # randomized ops before each detection trial
    record_history: bool = True       # keep per-slot tag assignment history
    size_classes: tuple = field(default=None, repr=False)  # None = default table

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.density < 1:
            raise ValueError("density must be >= 1")
        if not 1 <= self.quarantine <= 255:
            raise ValueError("quarantine must be in 1..255")
        if self.tag_bits not in (4, 8):
            raise ValueError("tag_bits must be 4 or 8")
        if self.strategy == "clustertag" and self.tag_bits != 8:
            raise ValueError("the clustered allocator needs the 8-bit tag space")
        if not 1 <= self.allocatable_per_cluster <= 255:
            raise ValueError("allocatable_per_cluster must be in 1..255")
        if self.allocatable_per_cluster + self.quarantine > 255:
            # tag 0 is reserved, so slots plus quarantine must fit in 255 tags
            raise ValueError("allocatable_per_cluster + quarantine must be <= 255")
        if self.cache_capacity < 1 or self.scan_period < 1 or self.page_threshold < 1:
            raise ValueError("cache_capacity, scan_period, page_threshold must be >= 1")
