"""Comparable models of the random, staggered, and fixed tag-assignment families.

These models isolate tag behavior from layout: chunks of one size class sit
contiguously in a flat arena (no clustering, no randomization), slots are
reused LIFO, and only the tag rules differ:

* ``random``        - fresh uniform tag on every (re)assignment; freed memory
                      is re-tagged with a fresh random lock.
* ``random-header`` - like random but a 16-byte tag-0 header granule precedes
                      every chunk, and payload tags avoid 0.
* ``staggered``     - the tag space is split into two parity groups; even
                      slots draw from one half, odd slots from the other, and
                      a reused slot redraws within its group excluding the
                      previous tag.  Freed memory keeps its lock.
* ``fixed-temporal``- random spatial tags, but a slot's tag increments by one
                      (mod the tag space) when the object is released.
* ``sticky``        - slot index mod the tag space, persistent forever; no
                      retag on free or reuse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .addressing import GRANULE, ShadowMap, TagFault, tag_of, tag_with, untag
from .config import RunConfig
from .errors import InvalidFreeError, TagMismatchError
from .layout import SizeClassTable, region_of
from .metrics import SlotTagHistory, SnapshotView

RANDOM = "random"
RANDOM_HEADER = "random-header"
STAGGERED = "staggered"
FIXED_TEMPORAL = "fixed-temporal"
STICKY = "sticky"
KINDS = (RANDOM, RANDOM_HEADER, STAGGERED, FIXED_TEMPORAL, STICKY)

BASELINE_REGION_ID = 0x80          # class arenas live at 0x80 + class_index
BASELINE_LARGE_REGION_ID = 0xF0


@dataclass
class StrategyModel:
    """Pure tag rules of one assignment family, parameterized by tag width."""

    kind: str
    tag_bits: int = 8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        self.space = 1 << self.tag_bits
        self.half = self.space // 2

    def assign_spatial(self, slot_index: int, rng) -> int:
        """Tag for the first assignment of a slot."""
        assert slot_index >= 0
        if self.kind == STICKY:
            return slot_index % self.space
        if self.kind == RANDOM_HEADER:
            return int(rng.integers(1, self.space))  # 0 belongs to headers
        if self.kind == STAGGERED:
            group = (slot_index % 2) * self.half
            return group + int(rng.integers(self.half))
        return int(rng.integers(self.space))

    def assign_temporal(self, prev_tag: int, rng) -> int:
        """Tag replacing ``prev_tag`` on the same slot at the next reuse event."""
        assert 0 <= prev_tag < self.space
        if self.kind == STICKY:
            return prev_tag
        if self.kind == FIXED_TEMPORAL:
            return (prev_tag + 1) % self.space
        if self.kind == RANDOM_HEADER:
            return int(rng.integers(1, self.space))
        if self.kind == STAGGERED:
            # redraw within the parity group holding prev_tag, excluding it
            group = 0 if prev_tag < self.half else self.half
            pick = group + int(rng.integers(self.half - 1))
            return pick + 1 if pick >= prev_tag else pick
        return int(rng.integers(self.space))


class _Arena:
    """Contiguous slots of one size class with a LIFO free stack."""

    __slots__ = ("base", "chunk", "stride", "payload_off", "tags", "live",
                 "free_stack", "class_index")

    def __init__(self, class_index, base, chunk, header):
        self.class_index = class_index
        self.base = base
        self.chunk = chunk
        self.payload_off = GRANULE if header else 0
        self.stride = chunk + self.payload_off
        self.tags: list[int] = []
        self.live: list[bool] = []
        self.free_stack: list[int] = []

    def slot_payload(self, slot: int) -> int:
        return self.base + slot * self.stride + self.payload_off

    def slot_of(self, addr: int) -> int | None:
        off = addr - self.base
        slot, phase = divmod(off, self.stride)
        if phase != self.payload_off or not 0 <= slot < len(self.tags):
            return None
        return slot


class BaselineAllocator:
    """Flat-arena allocator driven by one StrategyModel; uniform model API."""

    def __init__(self, config: RunConfig, *, shadow: ShadowMap | None = None):
        assert config.strategy in KINDS
        self.config = config
        self.strategy = StrategyModel(config.strategy, config.tag_bits)
        self.table = SizeClassTable(config.size_classes) if config.size_classes \
            else SizeClassTable()
        self.shadow = shadow if shadow is not None else ShadowMap()
        self.rng = np.random.default_rng(config.seed)
        self.arenas: dict[int, _Arena] = {}
        self.large_live: dict[int, tuple] = {}
        self._large_bump = BASELINE_LARGE_REGION_ID << 40
        self._large_seq = 0
        self.round = 0
        self.live_count = 0
        self.peak_live = 0
        self.records = [] if config.record_history else None
        self.history = SlotTagHistory() if config.record_history else None

    @property
    def name(self) -> str:
        return self.strategy.kind

    def _arena(self, class_index: int) -> _Arena:
        arena = self.arenas.get(class_index)
        if arena is None:
            arena = _Arena(class_index,
                           base=(BASELINE_REGION_ID + class_index) << 40,
                           chunk=self.table[class_index].chunk_size,
                           header=self.strategy.kind == RANDOM_HEADER)
            self.arenas[class_index] = arena
        return arena

    def _record(self, addr, class_index, size, record_id):
        self.round += 1
        self.live_count += 1
        self.peak_live = max(self.peak_live, self.live_count)
        if self.records is not None:
            self.records.append((self.round if record_id is None else record_id,
                                 addr, class_index, size, self.round))
        if self.history is not None:
            self.history.add(untag(addr), tag_of(addr), self.round)

    # -- allocation ---------------------------------------------------------

    def allocate(self, size: int, record_id=None) -> int:
        cls = self.table.size_class_of(size)
        if cls is None:
            return self._allocate_large(size, record_id)
        arena = self._arena(cls.index)
        if arena.free_stack:
            slot = arena.free_stack.pop()
            tag = arena.tags[slot]
            if self.strategy.kind != FIXED_TEMPORAL:
                # fixed-temporal already advanced the tag when it was released
                tag = self.strategy.assign_temporal(tag, self.rng)
        else:
            slot = len(arena.tags)
            arena.tags.append(0)
            arena.live.append(False)
            tag = self.strategy.assign_spatial(slot, self.rng)
        arena.tags[slot] = tag
        arena.live[slot] = True
        payload = arena.slot_payload(slot)
        self.shadow.write(payload, arena.chunk, tag)
        addr = tag_with(payload, tag)
        self._record(addr, cls.index, size, record_id)
        return addr

    def _allocate_large(self, size, record_id):
        span = (size + GRANULE - 1) // GRANULE * GRANULE
        base = self._large_bump
        self._large_bump = base + span + GRANULE   # one guard granule between
        tag = self.strategy.assign_spatial(self._large_seq, self.rng)
        self._large_seq += 1
        self.large_live[base] = (span, tag)
        self.shadow.write(base, span, tag)
        addr = tag_with(base, tag)
        self._record(addr, None, size, record_id)
        return addr

    # -- deallocation ---------------------------------------------------------

    def deallocate(self, addr: int) -> None:
        """Tag-checked free.

        A key/lock mismatch raises TagMismatchError (the sanitizer trapped the
        free); a free of an already-freed slot whose lock still matches the key
        passes silently, exactly the miss these models exhibit.
        """
        base = untag(addr)
        rid = region_of(addr)
        if rid == BASELINE_LARGE_REGION_ID:
            self._deallocate_large(addr, base)
            return
        arena = self.arenas.get(rid - BASELINE_REGION_ID)
        slot = arena.slot_of(base) if arena is not None else None
        if slot is None:
            raise InvalidFreeError(f"{addr:#x} maps to no chunk")
        if tag_of(addr) != arena.tags[slot]:
            raise TagMismatchError(
                f"free key {tag_of(addr):#x} != lock {arena.tags[slot]:#x}")
        if not arena.live[slot]:
            return  # double free with a matching lock: silently missed
        arena.live[slot] = False
        arena.free_stack.append(slot)
        self.live_count -= 1
        if self.strategy.kind in (RANDOM, RANDOM_HEADER, FIXED_TEMPORAL):
            # these allocators re-lock memory when the object is released
            arena.tags[slot] = self.strategy.assign_temporal(arena.tags[slot], self.rng)
            self.shadow.write(arena.slot_payload(slot), arena.chunk, arena.tags[slot])

    def _deallocate_large(self, addr, base):
        entry = self.large_live.get(base)
        if entry is None:
            raise InvalidFreeError(f"{addr:#x} is not a live large object")
        span, tag = entry
        if tag_of(addr) != tag:
            raise TagMismatchError(f"free key {tag_of(addr):#x} != lock {tag:#x}")
        del self.large_live[base]
        self.shadow.write(base, span, 0)
        self.live_count -= 1

    # -- queries ---------------------------------------------------------------

    def check_access(self, addr: int, length: int) -> TagFault | None:
        return self.shadow.check_access(addr, length)

    def live_chunks(self):
        for class_index, arena in self.arenas.items():
            for slot, live in enumerate(arena.live):
                if live:
                    yield class_index, arena.tags[slot], arena.slot_payload(slot), arena.chunk

    def snapshot(self) -> dict[int, SnapshotView]:
        """Per-class live positions in chunk units (slot index)."""
        views: dict[int, SnapshotView] = {}
        for class_index, arena in self.arenas.items():
            view = SnapshotView()
            occupied = False
            for slot, live in enumerate(arena.live):
                if live:
                    view.add(arena.tags[slot], slot)
                    occupied = True
            if occupied:
                views[class_index] = view
        return views

    def stats(self) -> dict:
        return {
            "rounds": self.round,
            "live": self.live_count,
            "peak_live": self.peak_live,
        }
