"""Simulated 64-bit address space, tagged-pointer codec, and shadow tag store.

Nothing here touches host memory: loads and stores are modeled purely as
key/lock comparisons against the shadow map.  Pointers carry an 8-bit tag in
bits 56-63; bits 0-55 locate a byte in the simulated space.
"""

from __future__ import annotations

from bisect import bisect_right, insort
from dataclasses import dataclass, field

from .errors import AlignmentError, OverlapError, UnknownRangeError

TAG_SHIFT = 56
ADDR_MASK = (1 << TAG_SHIFT) - 1
PAGE_SIZE = 4096
GRANULE = 16


def tag_of(addr: int) -> int:
    """Extract the key stored in the pointer's upper byte."""
    return (addr >> TAG_SHIFT) & 0xFF


def untag(addr: int) -> int:
    """Clear bits 56-63, leaving the bare location."""
    return addr & ADDR_MASK


def tag_with(addr: int, tag: int) -> int:
    """Overwrite the pointer tag; the location bits are untouched."""
    return untag(addr) | ((tag & 0xFF) << TAG_SHIFT)


def page_aligned(value: int) -> bool:
    return value % PAGE_SIZE == 0


@dataclass
class Reservation:
    """One disjoint page-aligned range plus its per-page residency state."""

    base: int
    size: int
    # page indices (relative to base) currently returned to the kernel
    released: set = field(default_factory=set)
    owner: object = None

    @property
    def end(self) -> int:
        return self.base + self.size

    @property
    def pages(self) -> int:
        return self.size // PAGE_SIZE

    @property
    def resident_pages(self) -> int:
        return self.pages - len(self.released)


class AddressSpace:
    """Ordered set of disjoint page-aligned reservations with residency counts.

    Models the mmap/munmap effects of cluster placement and release; one
    mutator at a time, queries freely shareable.
    """

    def __init__(self):
        self._bases: list[int] = []          # sorted, parallel to _by_base
        self._by_base: dict[int, Reservation] = {}
        self.resident_pages = 0

    def __len__(self):
        return len(self._bases)

    def reservations(self):
        return [self._by_base[b] for b in self._bases]

    def _neighbor_overlaps(self, base: int, size: int) -> bool:
        i = bisect_right(self._bases, base)
        if i > 0 and self._by_base[self._bases[i - 1]].end > base:
            return True
        if i < len(self._bases) and self._bases[i] < base + size:
            return True
        return False

    def reserve(self, base: int, size: int, owner=None) -> Reservation:
        if not (page_aligned(base) and page_aligned(size)) or size <= 0:
            raise AlignmentError(f"reserve({base:#x}, {size:#x}) not page aligned")
        if self._neighbor_overlaps(base, size):
            raise OverlapError(f"[{base:#x}, {base + size:#x}) intersects a reservation")
        res = Reservation(base, size, owner=owner)
        insort(self._bases, base)
        self._by_base[base] = res
        self.resident_pages += res.pages
        return res

    def find(self, addr: int) -> Reservation | None:
        """Reservation containing the (untagged) byte address, if any."""
        i = bisect_right(self._bases, addr)
        if i == 0:
            return None
        res = self._by_base[self._bases[i - 1]]
        return res if addr < res.end else None

    def _covering(self, base: int, size: int) -> Reservation:
        if not (page_aligned(base) and page_aligned(size)) or size <= 0:
            raise AlignmentError(f"release({base:#x}, {size:#x}) not page aligned")
        res = self.find(base)
        if res is None or base + size > res.end:
            raise UnknownRangeError(f"[{base:#x}, {base + size:#x}) is not reserved")
        return res

    def release(self, base: int, size: int) -> int:
        """Return pages of a reserved range to the kernel.

        Releasing an entire reservation removes it (the range becomes
        reservable again); releasing a page-aligned sub-range only drops the
        pages from residency accounting, keeping the reservation. Returns the
        number of pages that actually left residency.
        """
        res = self._covering(base, size)
        if base == res.base and size == res.size:
            self._bases.remove(base)
            del self._by_base[base]
            self.resident_pages -= res.resident_pages
            return res.resident_pages
        first = (base - res.base) // PAGE_SIZE
        dropped = 0
        for p in range(first, first + size // PAGE_SIZE):
            if p not in res.released:
                res.released.add(p)
                dropped += 1
        self.resident_pages -= dropped
        return dropped

    def mark_resident(self, base: int, size: int) -> int:
        """Fault previously released pages of a reservation back in."""
        res = self._covering(base, size)
        first = (base - res.base) // PAGE_SIZE
        regained = 0
        for p in range(first, first + size // PAGE_SIZE):
            if p in res.released:
                res.released.discard(p)
                regained += 1
        self.resident_pages += regained
        return regained


@dataclass(frozen=True)
class TagFault:
    """First key/lock mismatch found by an access check."""

    granule: int   # granule index (byte offset / 16) of the mismatch
    key: int       # tag carried by the pointer
    lock: int      # tag stored in shadow for that granule


# Shadow bytes are stored in fixed-size blocks keyed by granule-block index,
# so bulk writes are slice assignments instead of per-granule dict updates.
_BLOCK_GRANULES = 4096


class ShadowMap:
    """Sparse map from 16-byte granule index to its 8-bit lock tag.

    Absent entries read as tag 0. Granule size and tag width are construction
    parameters so the 4-bit baseline models can share the machinery.
    """

    def __init__(self, granule: int = GRANULE, tag_bits: int = 8):
        assert 1 <= tag_bits <= 8
        self.granule = granule
        self.tag_bits = tag_bits
        self._blocks: dict[int, bytearray] = {}

    def read(self, granule_index: int) -> int:
        block = self._blocks.get(granule_index // _BLOCK_GRANULES)
        if block is None:
            return 0
        return block[granule_index % _BLOCK_GRANULES]

    def write(self, start: int, length: int, tag: int) -> None:
        """Set the lock of every granule in [start, start+length) to ``tag``."""
        if start % self.granule or length % self.granule:
            raise AlignmentError(
                f"shadow write [{start:#x}, +{length:#x}) not granule aligned")
        if not 0 <= tag < (1 << self.tag_bits):
            raise ValueError(f"tag {tag:#x} exceeds {self.tag_bits}-bit space")
        g = start // self.granule
        end = g + length // self.granule
        while g < end:
            bix, off = divmod(g, _BLOCK_GRANULES)
            block = self._blocks.get(bix)
            if block is None:
                block = self._blocks[bix] = bytearray(_BLOCK_GRANULES)
            n = min(end - g, _BLOCK_GRANULES - off)
            block[off:off + n] = bytes([tag]) * n
            g += n

    def check_access(self, addr: int, length: int) -> TagFault | None:
        """Key/lock check over every granule overlapped by the access.

        Returns None when all locks equal the pointer key, else a TagFault
        for the first mismatching granule. Pure: identical state gives
        identical results; a mismatch is a result, not an exception.
        """
        assert length >= 1
        key = tag_of(addr)
        base = untag(addr)
        first = base // self.granule
        last = (base + length - 1) // self.granule
        for g in range(first, last + 1):
            lock = self.read(g)
            if lock != key:
                return TagFault(granule=g, key=key, lock=lock)
        return None


def check_access(shadow: ShadowMap, addr: int, length: int) -> TagFault | None:
    return shadow.check_access(addr, length)
