import numpy as np
import pytest
from scipy import stats

from clustertag.addressing import GRANULE, tag_of, untag
from clustertag.baselines import (
    FIXED_TEMPORAL, RANDOM, RANDOM_HEADER, STAGGERED, STICKY,
    BaselineAllocator, StrategyModel,
)
from clustertag.config import RunConfig
from clustertag.errors import TagMismatchError
from clustertag.metrics import objectives, spatial_distances, temporal_distances


def model_for(kind, tag_bits=4, seed=5, **kw):
    return BaselineAllocator(RunConfig(seed=seed, strategy=kind,
                                       tag_bits=tag_bits, **kw))


class TestAssignSpatial:
    def test_sticky_cycles_every_16(self, rng):
        m = StrategyModel(STICKY, tag_bits=4)
        assert [m.assign_spatial(i, rng) for i in range(18)] == \
            list(range(16)) + [0, 1]

    def test_staggered_parity_groups_disjoint(self, rng):
        m = StrategyModel(STAGGERED, tag_bits=4)
        even = {m.assign_spatial(2 * i, rng) for i in range(500)}
        odd = {m.assign_spatial(2 * i + 1, rng) for i in range(500)}
        assert even == set(range(8))
        assert odd == set(range(8, 16))

    def test_staggered_adjacent_never_equal(self, rng):
        m = StrategyModel(STAGGERED, tag_bits=4)
        draws = [m.assign_spatial(i, rng) for i in range(2000)]
        assert all(a != b for a, b in zip(draws, draws[1:]))

    def test_random_adjacent_equal_frequency(self):
        # adjacent-equal rate over 1e6 pairs ~ 1/256, exact binomial 99% CI
        rng = np.random.default_rng(31)
        m = StrategyModel(RANDOM, tag_bits=8)
        draws = np.array([m.assign_spatial(i, rng) for i in range(10**6 + 1)])
        equal = int((draws[:-1] == draws[1:]).sum())
        n = 10**6
        lo = stats.binom.ppf(0.005, n, 1 / 256)
        hi = stats.binom.ppf(0.995, n, 1 / 256)
        assert lo <= equal <= hi

    def test_header_strategy_avoids_tag_zero(self, rng):
        m = StrategyModel(RANDOM_HEADER, tag_bits=4)
        assert all(m.assign_spatial(i, rng) != 0 for i in range(2000))


class TestAssignTemporal:
    def test_fixed_wraparound(self, rng):
        m = StrategyModel(FIXED_TEMPORAL, tag_bits=4)
        assert m.assign_temporal(15, rng) == 0
        assert m.assign_temporal(3, rng) == 4

    def test_sticky_keeps_tag(self, rng):
        m = StrategyModel(STICKY, tag_bits=4)
        assert all(m.assign_temporal(t, rng) == t for t in range(16))

    def test_random_repeat_frequency(self):
        rng = np.random.default_rng(77)
        m = StrategyModel(RANDOM, tag_bits=8)
        prev = 7
        repeats = 0
        n = 10**6
        for _ in range(n):
            nxt = m.assign_temporal(prev, rng)
            repeats += nxt == prev
            prev = nxt
        lo = stats.binom.ppf(0.005, n, 1 / 256)
        hi = stats.binom.ppf(0.995, n, 1 / 256)
        assert lo <= repeats <= hi

    def test_staggered_stays_in_group_excludes_prev(self, rng):
        m = StrategyModel(STAGGERED, tag_bits=4)
        for prev in (3, 12):
            group = set(range(8)) if prev < 8 else set(range(8, 16))
            draws = {m.assign_temporal(prev, rng) for _ in range(300)}
            assert prev not in draws
            assert draws == group - {prev}


class TestTableOneObjectives:
    """Minima and averages of the comparison table, via the metrics path."""

    def test_fixed_temporal_gap_exactly_16(self):
        m = model_for(FIXED_TEMPORAL)
        addr = m.allocate(0x20)
        for _ in range(40):
            m.deallocate(addr)
            addr = m.allocate(0x20)
        dist = temporal_distances(m.history)
        report = objectives(dist)
        assert report.f1_min == 16 == report.f2_avg  # wrap period = 2^TS
        assert report.f3_entropy_bits == 0.0

    def test_sticky_spatial_gap_exactly_16(self):
        m = model_for(STICKY)
        for _ in range(200):
            m.allocate(0x20)
        dist = spatial_distances(m.snapshot()[0])
        report = objectives(dist)
        assert report.f1_min == 16 == report.f2_avg
        assert report.f3_entropy_bits == 0.0  # fully predictable

    def test_sticky_temporal_gap_is_one(self):
        m = model_for(STICKY)
        addr = m.allocate(0x20)
        for _ in range(10):
            m.deallocate(addr)
            addr = m.allocate(0x20)
        assert objectives(temporal_distances(m.history)).f1_min == 1

    def test_staggered_spatial_min_two(self):
        m = model_for(STAGGERED, seed=9)
        for _ in range(3000):
            m.allocate(0x20)
        report = objectives(spatial_distances(m.snapshot()[0]))
        assert report.f1_min == 2

    def test_random_spatial_average_near_tag_space(self):
        m = model_for(RANDOM, tag_bits=8, seed=13, record_history=False)
        for _ in range(120_000):
            m.allocate(0x20)
        report = objectives(spatial_distances(m.snapshot()[0]))
        assert report.f1_min == 1
        assert abs(report.f2_avg - 256) < 8


class TestArenaBehavior:
    def test_lifo_reuse(self):
        m = model_for(RANDOM, tag_bits=8)
        a = m.allocate(0x40)
        m.deallocate(a)
        b = m.allocate(0x40)
        assert untag(b) == untag(a)

    def test_header_granule_separates_chunks(self):
        m = model_for(RANDOM_HEADER, tag_bits=8)
        a = m.allocate(0x20)
        b = m.allocate(0x20)
        assert untag(b) - untag(a) == 0x20 + GRANULE
        # walking off the end of a hits b's tag-0 header: always caught
        fault = m.check_access(a + 0x20, 1)
        assert fault is not None and fault.lock == 0

    def test_free_keeps_lock_for_sticky(self):
        m = model_for(STICKY)
        a = m.allocate(0x20)
        m.deallocate(a)
        assert m.check_access(a, 1) is None  # stale key still matches

    def test_free_relocks_for_fixed_temporal(self):
        m = model_for(FIXED_TEMPORAL)
        a = m.allocate(0x20)
        m.deallocate(a)
        fault = m.check_access(a, 1)
        assert fault is not None
        assert fault.lock == (tag_of(a) + 1) % 16

    def test_double_free_tag_checked(self):
        m = model_for(FIXED_TEMPORAL)
        a = m.allocate(0x20)
        m.deallocate(a)
        with pytest.raises(TagMismatchError):
            m.deallocate(a)  # lock moved on, key is stale

        sticky = model_for(STICKY)
        b = sticky.allocate(0x20)
        sticky.deallocate(b)
        sticky.deallocate(b)  # silently missed: lock never changed
