"""Shared independent oracles for the allocator property suites.

Everything here deliberately re-derives state from the model's public
surface (returned addresses, reservations) instead of trusting internal
bookkeeping, so the fuzz suites cross-check rather than echo the allocator.
"""

from bisect import bisect_left, insort

from clustertag.addressing import tag_of, untag
from clustertag.allocator import ClusterTagAllocator
from clustertag.layout import LARGE_REGION_ID, region_of


def brute_force_resident_pages(space):
    pages = set()
    for res in space.reservations():
        for p in range(res.pages):
            if p not in res.released:
                pages.add(res.base + p * 4096)
    return len(pages)


def spatial_reference(positions_by_tag):
    """O(n^2) nearest-above scan; independent of sorting-based paths."""
    out = {}
    for _tag, positions in positions_by_tag.items():
        for p in positions:
            best = None
            for q in positions:
                if q > p and (best is None or q < best):
                    best = q
            if best is not None:
                out[best - p] = out.get(best - p, 0) + 1
    return out


def temporal_reference(history):
    out = {}
    for (_pos, _tag), rounds in history.items():
        for t in rounds:
            best = None
            for u in rounds:
                if u > t and (best is None or u < best):
                    best = u
            if best is not None:
                out[best - t] = out.get(best - t, 0) + 1
    return out


class FuzzOracle:
    """Incremental invariant checker driven purely by allocate/free results.

    Maintains its own interval set and per-(class, tag) position index so
    that after every event it can assert:

    * no two live chunks overlap,
    * same-tag live chunks of one class stay >= 256 * chunk_size apart,
    * the owning region id is recoverable from every address,
    * the touched cluster's tag multiset stays duplicate free,
    * every pool respects its density cap.
    """

    def __init__(self, model: ClusterTagAllocator):
        self.model = model
        self.intervals = []             # sorted (base, end)
        self.by_class_tag = {}          # (class_index, tag) -> sorted bases
        self.meta = {}                  # base -> (class_index, tag, size)

    def after_alloc(self, addr, requested):
        model = self.model
        base = untag(addr)
        tag = tag_of(addr)
        cls = model.table.size_class_of(requested)
        if cls is None:
            size = (requested + 4095) // 4096 * 4096
            assert region_of(addr) == LARGE_REGION_ID
            key = None
        else:
            size = cls.chunk_size
            assert region_of(addr) == model.table[cls.index].region_id
            assert base % 16 == 0
            key = (cls.index, tag)
            self._check_tag_distance(key, base, cls.chunk_size)
            insort(self.by_class_tag.setdefault(key, []), base)
        self._check_overlap(base, size)
        insort(self.intervals, (base, base + size))
        self.meta[base] = (key, size)
        self._check_touched_cluster(base)

    def after_free(self, addr):
        base = untag(addr)
        key, size = self.meta.pop(base)
        i = bisect_left(self.intervals, (base, base + size))
        assert self.intervals[i][0] == base
        self.intervals.pop(i)
        if key is not None:
            lst = self.by_class_tag[key]
            lst.pop(bisect_left(lst, base))
            self._check_touched_cluster(base)

    def _check_overlap(self, base, size):
        i = bisect_left(self.intervals, (base, 0))
        if i > 0:
            assert self.intervals[i - 1][1] <= base, "live chunks overlap"
        if i < len(self.intervals):
            assert base + size <= self.intervals[i][0], "live chunks overlap"

    def _check_tag_distance(self, key, base, chunk_size):
        lst = self.by_class_tag.get(key)
        if not lst:
            return
        i = bisect_left(lst, base)
        floor = 256 * chunk_size
        if i > 0:
            assert base - lst[i - 1] >= floor, "same-tag chunks too close"
        if i < len(lst):
            assert lst[i] - base >= floor, "same-tag chunks too close"

    def _check_touched_cluster(self, base):
        res = self.model.space.find(base)
        if res is not None and hasattr(res.owner, "tag_multiset_ok"):
            assert res.owner.tag_multiset_ok(), "intra-cluster tag duplicate"

    def check_global(self):
        """Full sweep: pool caps, residency conservation, distance floors."""
        for region in self.model.regions.values():
            for pool in region.pools:
                assert pool.used_bytes <= pool.capacity, "pool density cap broken"
            for cluster in region.clusters:
                assert cluster.tag_multiset_ok()
        assert self.model.space.resident_pages == \
            brute_force_resident_pages(self.model.space)
        for (class_index, _tag), bases in self.by_class_tag.items():
            chunk = self.model.table[class_index].chunk_size
            for a, b in zip(bases, bases[1:]):
                assert b - a >= 256 * chunk


def run_fuzz(model, rng, events, *, oracle=None, check_every=2000,
             min_size=0x10, max_size=0x18000, free_prob=0.5):
    """Random malloc/free fuzz with the oracle asserting after every event."""
    import math

    oracle = oracle or FuzzOracle(model)
    live = []
    lo, hi = math.log(min_size), math.log(max_size)
    for n in range(events):
        if live and rng.random() < free_prob:
            i = int(rng.integers(len(live)))
            live[i], live[-1] = live[-1], live[i]
            addr = live.pop()
            model.deallocate(addr)
            oracle.after_free(addr)
        else:
            size = int(math.exp(rng.uniform(lo, hi)))
            addr = model.allocate(size)
            oracle.after_alloc(addr, size)
            live.append(addr)
        if (n + 1) % check_every == 0:
            oracle.check_global()
    oracle.check_global()
    return live
