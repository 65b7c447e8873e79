"""Cluster-based allocation/deallocation runtime.

Small requests are size-classed and served from per-class cache arrays.
Empty caches refill either by reusing a uniformly chosen idle cluster
(rotating its free tags first) or by placing a fresh randomized cluster.
Every ``scan_period`` deallocations a region's cluster chain is scanned:
fully freed clusters are returned whole, and runs of fully-freed pages of at
least ``page_threshold`` pages are returned individually.  Requests above
64KB bypass clustering and get a randomized page-aligned mapping with one
random tag.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import layout, tag_engine
from .addressing import PAGE_SIZE, AddressSpace, ShadowMap, TagFault, tag_of, tag_with, untag
from .config import RunConfig
from .errors import DoubleFreeError, InvalidFreeError, PlacementExhaustedError, TagMismatchError
from .layout import CLUSTER_SLOTS, LARGE_REGION_ID, SizeClassTable, region_base, region_of
from .metrics import SlotTagHistory, SnapshotView
from .tag_engine import CACHED, FREE, INFO, INUSE


@dataclass
class AllocRecord:
    """One allocation event; history is append-only and rounds increase."""

    id: int
    addr: int               # tagged address as returned to the caller
    class_index: int | None  # None marks the large-object path
    size: int
    round: int


@dataclass
class ReleaseReport:
    full_released: int = 0
    pages_released: int = 0


class ClusterState:
    """256 contiguous same-size slots plus quarantine tags and metadata.

    The leading ``info_slots`` slots model the in-band metadata area: they
    keep tag 0 and are never handed out, which is also where the quarantine
    tags come from.  Slot tags of in-use, freed, and cached slots plus the
    quarantine list always form a duplicate-free multiset.
    """

    __slots__ = ("size_class", "reservation", "pool", "tags", "status",
                 "quarantine", "quarantine_size", "info_slots", "reuse_rounds",
                 "free_count", "cached_count", "live_count", "rotation_log")

    def __init__(self, size_class, reservation, pool, allocatable, quarantine_size,
                 log_rotations=False):
        self.size_class = size_class
        self.reservation = reservation
        self.pool = pool
        self.info_slots = CLUSTER_SLOTS - allocatable
        self.quarantine_size = quarantine_size
        self.tags = [0] * CLUSTER_SLOTS
        self.status = bytearray([INFO] * self.info_slots + [FREE] * allocatable)
        self.quarantine: list[int] = []
        self.reuse_rounds = 0
        self.free_count = allocatable
        self.cached_count = 0
        self.live_count = 0
        self.rotation_log = [] if log_rotations else None

    @property
    def base(self) -> int:
        return self.reservation.base

    @property
    def allocatable(self) -> int:
        return CLUSTER_SLOTS - self.info_slots

    def slot_base(self, slot: int) -> int:
        return self.base + slot * self.size_class.chunk_size

    def tag_multiset_ok(self) -> bool:
        """Intra-cluster spatial uniqueness: no duplicate among slot tags + quarantine."""
        tags = [self.tags[i] for i in range(self.info_slots, CLUSTER_SLOTS)]
        tags += self.quarantine
        return len(tags) == len(set(tags)) and 0 not in tags

    def fully_freed(self) -> bool:
        return self.live_count == 0 and self.cached_count == 0


def choose_idle_cluster(idle, rng):
    """Uniform pick among clusters that still hold freed (uncached) slots."""
    return idle[int(rng.integers(len(idle)))]


class ClusterTagAllocator:
    """The clustered allocator model; one mutator at a time, seed-reproducible."""

    name = "clustertag"

    def __init__(self, config: RunConfig | None = None, *,
                 space: AddressSpace | None = None, shadow: ShadowMap | None = None):
        self.config = config or RunConfig()
        self.table = SizeClassTable(self.config.size_classes or layout.DEFAULT_SIZE_CLASSES)
        if self.table[len(self.table) - 1].region_id >= LARGE_REGION_ID:
            raise ValueError("size-class table too large for the region id map")
        self.space = space if space is not None else AddressSpace()
        self.shadow = shadow if shadow is not None else ShadowMap()
        self.rng = np.random.default_rng(self.config.seed)
        self.regions: dict[int, layout.RegionState] = {}
        self.caches: dict[int, deque] = {}
        self.large_live: dict[int, tuple] = {}
        self.round = 0
        self.live_count = 0
        self.peak_live = 0
        self.clusters_placed = 0
        self.clusters_released = 0
        self.records: list[AllocRecord] = [] if self.config.record_history else None
        self.history = SlotTagHistory() if self.config.record_history else None

    # -- helpers ----------------------------------------------------------

    def _region(self, class_index: int) -> layout.RegionState:
        region = self.regions.get(class_index)
        if region is None:
            region = layout.RegionState(size_class=self.table[class_index])
            self.regions[class_index] = region
        return region

    def _record(self, addr: int, class_index, size: int, record_id) -> None:
        self.round += 1
        self.live_count += 1
        self.peak_live = max(self.peak_live, self.live_count)
        if self.records is not None:
            rid = self.round if record_id is None else record_id
            self.records.append(AllocRecord(rid, addr, class_index, size, self.round))
        if self.history is not None:
            self.history.add(untag(addr), tag_of(addr), self.round)

    # -- cache management -------------------------------------------------

    def refill_cache(self, class_index: int) -> None:
        """Restock an empty per-class cache from an idle or fresh cluster."""
        cache = self.caches.setdefault(class_index, deque())
        assert not cache, "refill with a non-empty cache"
        region = self._region(class_index)
        idle = [c for c in region.clusters if c.free_count > 0]
        if idle:
            cluster = choose_idle_cluster(idle, self.rng)
            tag_engine.rotate_tags(cluster)
        else:
            cluster = self._place_cluster(region)
        for slot in range(cluster.info_slots, CLUSTER_SLOTS):
            if len(cache) >= self.config.cache_capacity:
                break
            if cluster.status[slot] == FREE:
                cluster.status[slot] = CACHED
                cluster.free_count -= 1
                cluster.cached_count += 1
                cache.append((cluster, slot))
        assert cache, "refill produced no ready chunks"

    def _place_cluster(self, region: layout.RegionState) -> ClusterState:
        reservation, pool = layout.place_new_cluster(
            region, self.space, self.rng, self.config.density)
        cluster = ClusterState(
            region.size_class, reservation, pool,
            allocatable=self.config.allocatable_per_cluster,
            quarantine_size=self.config.quarantine,
            log_rotations=self.config.record_history)
        reservation.owner = cluster
        tag_engine.init_cluster_tags(cluster, self.rng)
        region.clusters.append(cluster)
        self.clusters_placed += 1
        return cluster

    # -- allocation --------------------------------------------------------

    def allocate(self, size: int, record_id=None) -> int:
        """Return a tagged address for the request; 16-aligned untagged base."""
        if size < 0:
            raise ValueError("negative allocation size")
        cls = self.table.size_class_of(size)
        if cls is None:
            return self._allocate_large(size, record_id)
        cache = self.caches.setdefault(cls.index, deque())
        if not cache:
            self.refill_cache(cls.index)
        cluster, slot = cache.popleft()
        assert cluster.status[slot] == CACHED
        cluster.status[slot] = INUSE
        cluster.cached_count -= 1
        cluster.live_count += 1
        base = cluster.slot_base(slot)
        if cluster.reservation.released:
            self._re_reside(cluster, slot)
        tag = cluster.tags[slot]
        self.shadow.write(base, cls.chunk_size, tag)
        addr = tag_with(base, tag)
        self._record(addr, cls.index, size, record_id)
        return addr

    def _re_reside(self, cluster: ClusterState, slot: int) -> None:
        chunk = cluster.size_class.chunk_size
        off = slot * chunk
        first = off // PAGE_SIZE
        last = (off + chunk - 1) // PAGE_SIZE
        self.space.mark_resident(cluster.base + first * PAGE_SIZE,
                                 (last - first + 1) * PAGE_SIZE)

    def _allocate_large(self, size: int, record_id) -> int:
        span = (size + PAGE_SIZE - 1) // PAGE_SIZE * PAGE_SIZE
        base0 = region_base(LARGE_REGION_ID)
        max_page = (layout.REGION_SIZE - span) // PAGE_SIZE
        for _ in range(layout.PLACEMENT_RETRIES):
            base = base0 + int(self.rng.integers(max_page + 1)) * PAGE_SIZE
            try:
                res = self.space.reserve(base, span)
            except Exception:
                continue
            tag = int(self.rng.integers(1, 1 << self.config.tag_bits))
            res.owner = ("large", base)
            self.large_live[base] = (res, size, tag)
            self.shadow.write(base, span, tag)
            addr = tag_with(base, tag)
            self._record(addr, None, size, record_id)
            return addr
        raise PlacementExhaustedError("large-object region full")

    # -- deallocation ------------------------------------------------------

    def deallocate(self, addr: int) -> None:
        base = untag(addr)
        if region_of(addr) == LARGE_REGION_ID:
            self._deallocate_large(addr, base)
            return
        res = self.space.find(base)
        cluster = res.owner if res is not None else None
        if not isinstance(cluster, ClusterState):
            raise InvalidFreeError(f"{addr:#x} maps to no live chunk")
        chunk = cluster.size_class.chunk_size
        offset = base - cluster.base
        slot, phase = divmod(offset, chunk)
        if phase or not cluster.info_slots <= slot < CLUSTER_SLOTS:
            raise InvalidFreeError(f"{addr:#x} is not a chunk base")
        status = cluster.status[slot]
        if status in (FREE, CACHED):
            # status field, not tags, catches every double free
            raise DoubleFreeError(f"{addr:#x} already freed")
        if tag_of(addr) != cluster.tags[slot]:
            raise TagMismatchError(
                f"free key {tag_of(addr):#x} != lock {cluster.tags[slot]:#x}")
        cluster.status[slot] = FREE
        cluster.free_count += 1
        cluster.live_count -= 1
        self.live_count -= 1
        self.shadow.write(base, chunk, 0)
        region = self._region(cluster.size_class.index)
        region.dealloc_count += 1
        if region.dealloc_count % self.config.scan_period == 0:
            self.periodic_scan(region)

    def _deallocate_large(self, addr: int, base: int) -> None:
        entry = self.large_live.get(base)
        if entry is None:
            raise InvalidFreeError(f"{addr:#x} is not a live large object")
        res, _size, tag = entry
        if tag_of(addr) != tag:
            raise TagMismatchError(f"free key {tag_of(addr):#x} != lock {tag:#x}")
        del self.large_live[base]
        self.shadow.write(base, res.size, 0)
        self.space.release(res.base, res.size)
        self.live_count -= 1

    # -- periodic release ---------------------------------------------------

    def periodic_scan(self, region: layout.RegionState) -> ReleaseReport:
        """Full release of all-freed clusters, fragmented release elsewhere."""
        report = ReleaseReport()
        for cluster in list(region.clusters):
            if cluster.fully_freed():
                pages = self.space.release(cluster.reservation.base,
                                           cluster.reservation.size)
                cluster.pool.used_bytes -= cluster.reservation.size
                region.clusters.remove(cluster)
                self.clusters_released += 1
                report.full_released += 1
                report.pages_released += pages
            elif cluster.free_count:
                report.pages_released += self._fragmented_release(cluster)
        return report

    def _fragmented_release(self, cluster: ClusterState) -> int:
        """Release maximal resident runs of fully-freed pages (>= threshold).

        Slot metadata survives; the pages fault back in when a slot on them
        is next handed out.
        """
        chunk = cluster.size_class.chunk_size
        npages = cluster.size_class.cluster_size // PAGE_SIZE
        released = cluster.reservation.released
        run_start = None
        run_len = 0
        dropped = 0

        def flush(start, length):
            if length >= self.config.page_threshold:
                return self.space.release(cluster.base + start * PAGE_SIZE,
                                          length * PAGE_SIZE)
            return 0

        for page in range(npages):
            lo = (page * PAGE_SIZE) // chunk
            hi = ((page + 1) * PAGE_SIZE - 1) // chunk
            all_freed = all(cluster.status[s] == FREE for s in range(lo, hi + 1))
            if all_freed and page not in released:
                if run_start is None:
                    run_start = page
                    run_len = 0
                run_len += 1
            else:
                if run_start is not None:
                    dropped += flush(run_start, run_len)
                run_start = None
        if run_start is not None:
            dropped += flush(run_start, run_len)
        return dropped

    # -- queries -------------------------------------------------------------

    def check_access(self, addr: int, length: int) -> TagFault | None:
        return self.shadow.check_access(addr, length)

    def live_chunks(self):
        """Yield (class_index, tag, untagged_base, chunk_size) of live chunks."""
        for class_index, region in self.regions.items():
            chunk = region.size_class.chunk_size
            for cluster in region.clusters:
                for slot in range(cluster.info_slots, CLUSTER_SLOTS):
                    if cluster.status[slot] == INUSE:
                        yield class_index, cluster.tags[slot], cluster.slot_base(slot), chunk

    def snapshot(self) -> dict[int, SnapshotView]:
        """Per-class views of live chunk positions, in chunk units."""
        views: dict[int, SnapshotView] = {}
        for class_index, tag, base, chunk in self.live_chunks():
            views.setdefault(class_index, SnapshotView()).add(tag, base // chunk)
        return views

    def stats(self) -> dict:
        return {
            "rounds": self.round,
            "live": self.live_count,
            "peak_live": self.peak_live,
            "resident_pages": self.space.resident_pages,
            "clusters_placed": self.clusters_placed,
            "clusters_released": self.clusters_released,
        }
