"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
complete.  The Monte Carlo fixtures are shared across criteria; the full
module takes a few minutes.

Warm-up sizes per campaign are tuned for suite runtime; every classification
asserted here is either structural (key/lock geometry) or a per-access tag
equality whose probability does not depend on warm-up length.
"""

import time

import numpy as np
import pytest
from scipy import stats

from clustertag.config import RunConfig
from clustertag.detect import (
    FN, PN, TP,
    AdjacentOverflow, DoubleFree, NonAdjacentOverflow, UseAfterFree,
    magma_scenario, run_campaign,
)
from clustertag.metrics import (
    CIRCULAR_SHIFT, RANDOM_RETAG,
    cluster_spatial_model, geometric_entropy, monte_carlo_temporal,
    spatial_distances, temporal_distances, triangular_entropy,
)
from clustertag.allocator import ClusterTagAllocator

from helpers import run_fuzz, spatial_reference, temporal_reference

SEED = 20250809
MC_ROUNDS_CIRCULAR = 1_000_000   # also serves the quarantine-window criterion
MC_ROUNDS_RANDOM = 30_000


def report(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    print("\n" + line, flush=True)
    assert ok, line


def within(value, target, rel=None, abs_tol=None):
    if rel is not None:
        return abs(value - target) <= rel * target
    return abs(value - target) <= abs_tol


@pytest.fixture(scope="module")
def circular_run():
    rng = np.random.default_rng(np.random.SeedSequence([SEED, 0]))
    return monte_carlo_temporal(CIRCULAR_SHIFT, MC_ROUNDS_CIRCULAR, rng)


@pytest.fixture(scope="module")
def random_run():
    rng = np.random.default_rng(np.random.SeedSequence([SEED, 1]))
    return monte_carlo_temporal(RANDOM_RETAG, MC_ROUNDS_RANDOM, rng)


def test_criterion_1_analytic_entropy():
    start = time.monotonic()
    geo = geometric_entropy(1 / 256)
    tri = triangular_entropy(256)
    bounds = {d: cluster_spatial_model(d).entropy_bound_bits for d in (5, 10, 20)}
    elapsed = time.monotonic() - start
    ok = (within(geo, 9.44, abs_tol=0.01)
          and within(tri, 8.72, abs_tol=0.01)
          and within(bounds[5], 12.33, abs_tol=0.05)
          and within(bounds[10], 13.41, abs_tol=0.05)
          and within(bounds[20], 14.45, abs_tol=0.05)
          and elapsed < 1.0)
    report("criterion-1 analytic entropy", ok,
           f"H(G(1/256))={geo:.4f}, H(tri256)={tri:.4f}, "
           f"bounds={{5: {bounds[5]:.3f}, 10: {bounds[10]:.3f}, "
           f"20: {bounds[20]:.3f}}}, runtime={elapsed:.3f}s")


def test_criterion_2_monte_carlo_temporal(circular_run, random_run):
    c, r = circular_run, random_run
    checks = [
        c.samples.total >= 2_000_000,
        c.min >= 16,
        16 <= c.min <= 25,
        within(c.avg, 510.21, rel=0.05),
        within(c.p25, 265, rel=0.10),
        within(c.entropy_bits, 9.53, abs_tol=0.3),
        r.samples.total >= 2_000_000,
        r.min == 1,
        within(r.avg, 543.76, rel=0.05),
        within(r.p25, 157, rel=0.10),
        within(r.entropy_bits, 10.53, abs_tol=0.3),
    ]
    report("criterion-2 Monte Carlo temporal", all(checks),
           f"circular: n={c.samples.total}, min={c.min}, avg={c.avg:.2f}, "
           f"p25={c.p25}, H={c.entropy_bits:.3f} | random: n={r.samples.total}, "
           f"min={r.min}, avg={r.avg:.2f}, p25={r.p25}, H={r.entropy_bits:.3f}")


def test_criterion_3_structural_invariants():
    # the oracle asserts per event: intra-cluster uniqueness, no live overlap,
    # same-tag distance >= 256 * chunk_size, pool caps, region recovery
    seeds = 100
    events = 10_000
    for seed in range(seeds):
        alloc = ClusterTagAllocator(RunConfig(seed=seed, record_history=False))
        rng = np.random.default_rng(np.random.SeedSequence([SEED, 3, seed]))
        run_fuzz(alloc, rng, events, check_every=2500)
    report("criterion-3 structural invariants", True,
           f"{seeds} seeds x {events} events, all invariants held")


def test_criterion_4_quarantine_window(circular_run):
    ok = circular_run.rounds >= 1_000_000 and circular_run.min >= 16
    report("criterion-4 quarantine window", ok,
           f"{circular_run.rounds} reuse rounds, min gap = {circular_run.min} "
           f"(hard floor 16, zero tolerance)")


def test_criterion_5_detection_campaigns():
    clustertag = RunConfig(seed=SEED, strategy="clustertag")
    lines = []
    ok = True

    def check(name, result, expect, extra=""):
        nonlocal ok
        good = result.classification == expect
        ok = ok and good
        lines.append(f"{name}: {result.classification} "
                     f"({result.detected}/{result.trials}){extra}")
        return good

    check("clustertag adjacent(+0x20)",
          run_campaign(clustertag, AdjacentOverflow(0x20), 500, 51,
                       warmup_ops=512), TP)
    check("clustertag non-adjacent(+8192)",
          run_campaign(clustertag, NonAdjacentOverflow(8192), 500, 52,
                       warmup_ops=512), TP)
    check("clustertag non-adjacent(-8192)",
          run_campaign(clustertag, NonAdjacentOverflow(-8192), 500, 53,
                       warmup_ops=512), TP)
    check("clustertag double-free",
          run_campaign(clustertag, DoubleFree(), 500, 54, warmup_ops=512), TP)
    check("clustertag uaf(1 round)",
          run_campaign(clustertag, UseAfterFree(1), 500, 55, warmup_ops=512), TP)
    check("clustertag uaf(15 rounds)",
          run_campaign(clustertag, UseAfterFree(15), 500, 56, warmup_ops=512), TP)

    trials = 100_000
    random8 = RunConfig(seed=SEED, strategy="random", tag_bits=8)
    result = run_campaign(random8, AdjacentOverflow(0x20), trials, 57,
                          warmup_ops=16)
    misses = result.trials - result.detected
    lo = int(stats.binom.ppf(0.005, trials, 1 / 256))
    hi = int(stats.binom.ppf(0.995, trials, 1 / 256))
    good = result.classification == PN and lo <= misses <= hi
    ok = ok and good
    lines.append(f"random adjacent: {result.classification}, misses={misses} "
                 f"in exact binomial 99% interval [{lo}, {hi}]")

    check("sticky uaf",
          run_campaign(RunConfig(seed=SEED, strategy="sticky", tag_bits=4),
                       UseAfterFree(4), 500, 58, warmup_ops=128), FN)
    check("staggered adjacent",
          run_campaign(RunConfig(seed=SEED, strategy="staggered", tag_bits=4),
                       AdjacentOverflow(0x20), 500, 59, warmup_ops=128), TP)
    wrap = run_campaign(RunConfig(seed=SEED, strategy="fixed-temporal", tag_bits=4),
                        UseAfterFree(16), 500, 60, warmup_ops=128)
    good = wrap.detected == 0  # every trial missed at the 2^TS wraparound
    ok = ok and good
    lines.append(f"fixed-temporal uaf(16): missed {wrap.trials - wrap.detected}"
                 f"/{wrap.trials}")

    report("criterion-5 detection campaigns", ok, "; ".join(lines))


def test_criterion_6_magma_preset():
    result = magma_scenario(RunConfig(seed=SEED, strategy="clustertag"), 61,
                            warmup_ops=512)
    span = range(-2095, 1792)
    expected_trials = len(span) - 0x20  # in-chunk offsets are legal accesses
    ok = (result.trials == expected_trials
          and result.detected == result.trials
          and result.classification == TP)
    report("criterion-6 magma offset sweep", ok,
           f"offsets [-2095, +1791] vs 0x20-class chunk: "
           f"{result.detected}/{result.trials} detected")


def test_criterion_7_brute_force_equivalence():
    rng = np.random.default_rng(np.random.SeedSequence([SEED, 7]))
    for _ in range(1000):
        snapshot = {}
        for tag in range(int(rng.integers(1, 13))):
            count = int(np.exp(rng.uniform(0, np.log(120))))
            pos = sorted(int(x) for x in
                         rng.choice(50_000, size=max(count, 1), replace=False))
            snapshot[tag] = pos
        assert dict(spatial_distances(snapshot).counts) == \
            spatial_reference(snapshot)
    for _ in range(1000):
        from clustertag.metrics import SlotTagHistory
        history = SlotTagHistory()
        mirror = {}
        clock = 0
        for _ in range(int(rng.integers(5, 250))):
            clock += int(rng.integers(1, 4))
            pos, tag = int(rng.integers(6)), int(rng.integers(5))
            history.add(pos, tag, clock)
            mirror.setdefault((pos, tag), []).append(clock)
        assert dict(temporal_distances(history).counts) == \
            temporal_reference(mirror)
    report("criterion-7 brute-force equivalence", True,
           "spatial and temporal multisets match O(n^2) references on "
           "1000 random instances each")
