"""Size-class taxonomy and the randomized region/pool/cluster placement.

Each size class owns a 1TB region (region id = class index + 1; id 0 is kept
as an unused guard region, so stray negative offsets from region 1 land in
untagged space).  Clusters are placed at random page-aligned offsets inside
1GB pools; each placement reserves twice the cluster size and occupies only
the first half, which keeps any two same-tag chunks at least 256 chunk sizes
apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .addressing import PAGE_SIZE, AddressSpace, untag
from .errors import OverlapError, PlacementExhaustedError, RegionFullError

CLUSTER_SLOTS = 256
POOL_SIZE = 1 << 30
REGION_SIZE = 1 << 40
POOLS_PER_REGION = REGION_SIZE // POOL_SIZE  # 1024
LARGE_OBJECT_THRESHOLD = 0x10000
LARGE_REGION_ID = 31
PLACEMENT_RETRIES = 64
MAX_FRESH_POOLS_PER_PLACEMENT = 8

# 30 chunk sizes, every one a multiple of 0x10: 0x20-byte steps up to 0x100,
# 0x100-byte steps up to 0x1000, then 0x2000-byte steps ending at 0x10000
# (the 0xE000 step is skipped to land on exactly 30 entries).  The table is
# data; everything downstream is parameterized over it.
DEFAULT_SIZE_CLASSES = tuple(
    list(range(0x20, 0x100 + 1, 0x20))
    + list(range(0x200, 0x1000 + 1, 0x100))
    + [0x2000, 0x4000, 0x6000, 0x8000, 0xA000, 0xC000, 0x10000]
)
assert len(DEFAULT_SIZE_CLASSES) == 30
assert all(sz % 0x10 == 0 for sz in DEFAULT_SIZE_CLASSES)


@dataclass(frozen=True)
class SizeClass:
    index: int
    chunk_size: int

    @property
    def cluster_size(self) -> int:
        # 256 * (0x10 * N) = 4096 * N keeps clusters page aligned
        return CLUSTER_SLOTS * self.chunk_size

    @property
    def region_id(self) -> int:
        return self.index + 1


class SizeClassTable:
    def __init__(self, chunk_sizes=DEFAULT_SIZE_CLASSES):
        sizes = tuple(chunk_sizes)
        if not sizes or any(s % 0x10 or s <= 0 for s in sizes):
            raise ValueError("chunk sizes must be positive multiples of 0x10")
        if list(sizes) != sorted(set(sizes)):
            raise ValueError("chunk sizes must be strictly increasing")
        self.classes = tuple(SizeClass(i, sz) for i, sz in enumerate(sizes))
        self._max = sizes[-1]

    def __len__(self):
        return len(self.classes)

    def __getitem__(self, index: int) -> SizeClass:
        return self.classes[index]

    def size_class_of(self, request: int) -> SizeClass | None:
        """Smallest class holding the request; None marks the large-object path.

        Zero-byte requests round up to the smallest class, mirroring common
        allocator behavior.  Requests above the largest class (64KB) are
        large objects; a request of exactly 64KB still uses the table.
        """
        if request < 0:
            raise ValueError("negative allocation size")
        if request > self._max:
            return None
        for cls in self.classes:
            if cls.chunk_size >= request:
                return cls
        raise AssertionError("unreachable")


def region_of(addr: int) -> int:
    """Region id owning a pointer: (PTR >> 40) & 0xFF, tag bits ignored."""
    return (untag(addr) >> 40) & 0xFF


def region_base(region_id: int) -> int:
    return region_id << 40


@dataclass
class PoolState:
    """1GB-aligned window constraining cluster randomization."""

    base: int
    capacity: int                 # POOL_SIZE // density
    used_bytes: int = 0           # includes the 2x placement reservations

    @property
    def end(self) -> int:
        return self.base + POOL_SIZE


@dataclass
class RegionState:
    """1TB window dedicated to one size class."""

    size_class: SizeClass
    pools: list = field(default_factory=list)
    opened_slots: set = field(default_factory=set)
    active_pool: PoolState = None
    clusters: list = field(default_factory=list)   # live ClusterState chain
    dealloc_count: int = 0

    @property
    def region_id(self) -> int:
        return self.size_class.region_id

    @property
    def base(self) -> int:
        return region_base(self.region_id)


def open_new_pool(region: RegionState, rng, density: int) -> PoolState:
    """Open a uniformly random still-unopened 1GB slot of the region."""
    opened = region.opened_slots
    if len(opened) >= POOLS_PER_REGION:
        raise RegionFullError(f"region {region.region_id} has all 1024 pools open")
    if 2 * len(opened) < POOLS_PER_REGION:
        # mostly-empty region: rejection sampling stays uniform and cheap
        while True:
            slot = int(rng.integers(POOLS_PER_REGION))
            if slot not in opened:
                break
    else:
        free = [k for k in range(POOLS_PER_REGION) if k not in opened]
        slot = free[int(rng.integers(len(free)))]
    region.opened_slots.add(slot)
    pool = PoolState(base=region.base + slot * POOL_SIZE, capacity=POOL_SIZE // density)
    region.pools.append(pool)
    region.active_pool = pool
    return pool


def place_new_cluster(region: RegionState, space: AddressSpace, rng,
                      density: int, owner=None):
    """Reserve a 2x-cluster-size block at a random offset in an admitting pool.

    Only the first half will hold the cluster; the second half stays reserved
    but non-resident, so adjacent clusters keep at least one cluster size of
    dead space between their occupied halves.  Returns the reservation.
    """
    span = 2 * region.size_class.cluster_size
    fresh_pools = 0
    while True:
        pool = region.active_pool
        if pool is None or pool.used_bytes + span > pool.capacity:
            if fresh_pools >= MAX_FRESH_POOLS_PER_PLACEMENT:
                raise PlacementExhaustedError(
                    f"no room for a {span:#x}-byte cluster block in region "
                    f"{region.region_id}")
            try:
                pool = open_new_pool(region, rng, density)
            except RegionFullError as exc:
                raise PlacementExhaustedError(str(exc)) from exc
            fresh_pools += 1
            continue
        max_page = (POOL_SIZE - span) // PAGE_SIZE
        for _ in range(PLACEMENT_RETRIES):
            base = pool.base + int(rng.integers(max_page + 1)) * PAGE_SIZE
            try:
                res = space.reserve(base, span, owner=owner)
            except OverlapError:
                continue
            pool.used_bytes += span
            # the unoccupied second half never backs data; drop its residency
            space.release(base + span // 2, span // 2)
            return res, pool
        # rejection sampling failed 64 times: fall through to a fresh pool
        region.active_pool = None
