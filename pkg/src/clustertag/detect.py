"""Synthetic vulnerability-injection campaigns.

Each trial builds a fresh, re-seeded allocator model, applies a randomized
warm-up workload, plants a victim allocation, performs one injected violation
(out-of-bounds access, stale access, or double free), and reports whether the
key/lock machinery caught it.  Repeating a trial under varied seeds yields
the three-way classification: TP (caught every time), FN (never caught), PN
(caught in some trials, missed in others).

Overflow accesses are modeled as single one-granule reads at victim + offset.
``UseAfterFree.realloc_rounds`` counts tag-recycling rounds of the victim's
reuse unit: cluster rotations for the clustered model, slot reuses for the
flat baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .addressing import untag
from .allocator import ClusterTagAllocator
from .config import RunConfig
from .errors import MemoryFault
from .models import build_model
from .workload import random_ops

PLANT_LIMIT = 8192
CHURN_LIMIT = 400_000
MAGMA_OFFSETS = range(-2095, 1792)   # byte reach seen around the CVE's struct


@dataclass(frozen=True)
class AdjacentOverflow:
    """Off-by-N access just past (offset > 0) or before (< 0) the chunk."""

    offset: int

    def __post_init__(self):
        assert self.offset != 0

    label = "adjacent-overflow"

    @property
    def parameter(self):
        return self.offset


@dataclass(frozen=True)
class NonAdjacentOverflow:
    """Wild access ``offset`` bytes from the victim base, beyond neighbors."""

    offset: int

    def __post_init__(self):
        assert self.offset != 0

    label = "non-adjacent-overflow"

    @property
    def parameter(self):
        return self.offset


@dataclass(frozen=True)
class UseAfterFree:
    realloc_rounds: int = 1

    label = "use-after-free"

    @property
    def parameter(self):
        return self.realloc_rounds


@dataclass(frozen=True)
class DoubleFree:
    label = "double-free"
    parameter = 0


TP, FN, PN = "TP", "FN", "PN"


@dataclass
class CampaignResult:
    trials: int
    detected: int

    @property
    def classification(self) -> str:
        if self.detected == self.trials:
            return TP
        if self.detected == 0:
            return FN
        return PN

    @property
    def miss_rate(self) -> float:
        if self.trials == 0:
            return 0.0
        return 1.0 - self.detected / self.trials


def _trial_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _fresh_model(config: RunConfig, seed: int):
    cfg = replace(config, seed=_trial_seed(seed, 0), record_history=False)
    model = build_model(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    return model, rng


def _stride(model, class_index: int) -> int:
    if isinstance(model, ClusterTagAllocator):
        return model.table[class_index].chunk_size
    return model._arena(class_index).stride


def _plant_pair(model, size: int, want_next: bool) -> int:
    """Allocate until two slot-adjacent chunks are both live; return the victim.

    The victim is the lower chunk when the access walks forward (want_next),
    else the higher one, so the stepped-onto neighbor slot is live.
    """
    cls = model.table.size_class_of(size)
    stride = _stride(model, cls.index)
    seen: dict[int, int] = {}
    for _ in range(PLANT_LIMIT):
        addr = model.allocate(size)
        base = untag(addr)
        seen[base] = addr
        if base + stride in seen:
            return addr if want_next else seen[base + stride]
        if base - stride in seen:
            return seen[base - stride] if want_next else addr
    raise AssertionError("could not plant an adjacent live pair")


def _plant_dense(model, size: int, reach: int) -> int:
    """Allocate a batch spanning ``reach`` bytes; the victim is the median chunk."""
    cls = model.table.size_class_of(size)
    chunk = model.table[cls.index].chunk_size
    want = 2 * (reach // chunk + 2)
    allocs = {untag(a): a for a in (model.allocate(size) for _ in range(want))}
    mid = sorted(allocs)[len(allocs) // 2]
    return allocs[mid]


def _churn_reuse(model, victim_addr: int, size: int, rounds: int) -> None:
    """Advance the victim's reuse unit by ``rounds`` tag-recycling rounds."""
    if rounds <= 0:
        return
    if isinstance(model, ClusterTagAllocator):
        res = model.space.find(untag(victim_addr))
        cluster = res.owner if res is not None else None
        if cluster is None:
            return  # the cluster was already released; the range is unmapped
        region = model._region(cluster.size_class.index)
        start = cluster.reuse_rounds
        for _ in range(CHURN_LIMIT):
            if cluster.reuse_rounds - start >= rounds:
                return
            if cluster not in region.clusters:
                return  # fully released mid-churn; stale range is unmapped
            model.deallocate(model.allocate(size))
        raise AssertionError("reuse churn did not reach the requested rounds")
    # flat arenas reuse LIFO, so the victim slot comes straight back
    for i in range(rounds):
        addr = model.allocate(size)
        assert untag(addr) == untag(victim_addr), "LIFO reuse expectation broken"
        if i != rounds - 1:
            model.deallocate(addr)


@dataclass(frozen=True)
class Scenario:
    """Named violation spec for campaign files and the bundled presets."""

    name: str
    violation: object
    trials: int = 500
    victim_size: int = 0x18


# One scenario per CWE family exercised by the harness (overreads behave
# like overwrites here: both are modeled as a checked one-granule access).
DEFAULT_SCENARIOS = (
    Scenario("heap-buffer-overflow-122", AdjacentOverflow(0x20)),
    Scenario("buffer-underwrite-124", AdjacentOverflow(-0x10)),
    Scenario("buffer-overread-126", AdjacentOverflow(0x20)),
    Scenario("buffer-underread-127", AdjacentOverflow(-0x10)),
    Scenario("double-free-415", DoubleFree()),
    Scenario("use-after-free-416", UseAfterFree(4)),
)


def run_trial(config: RunConfig, violation, seed: int, *,
              victim_size: int = 0x18, warmup_ops: int | None = None) -> bool:
    """One injected violation against a fresh warmed-up model; True = detected."""
    model, rng = _fresh_model(config, seed)
    random_ops(model, rng, config.warmup_ops if warmup_ops is None else warmup_ops)

    if isinstance(violation, AdjacentOverflow):
        victim = _plant_pair(model, victim_size, want_next=violation.offset > 0)
        return model.check_access(victim + violation.offset, 1) is not None

    if isinstance(violation, NonAdjacentOverflow):
        victim = _plant_dense(model, victim_size, abs(violation.offset))
        return model.check_access(victim + violation.offset, 1) is not None

    if isinstance(violation, UseAfterFree):
        victim = model.allocate(victim_size)
        model.deallocate(victim)
        _churn_reuse(model, victim, victim_size, violation.realloc_rounds)
        return model.check_access(victim, 1) is not None

    if isinstance(violation, DoubleFree):
        victim = model.allocate(victim_size)
        model.deallocate(victim)
        try:
            model.deallocate(victim)
        except MemoryFault:
            return True
        return False

    raise TypeError(f"unknown violation {violation!r}")


def run_campaign(config: RunConfig, violation, trials: int, seed: int, *,
                 victim_size: int = 0x18, warmup_ops: int | None = None) -> CampaignResult:
    """Aggregate repeated trials into the TP/FN/PN classification."""
    assert trials >= 1
    detected = sum(
        run_trial(config, violation, _trial_seed(seed, 2 + i),
                  victim_size=victim_size, warmup_ops=warmup_ops)
        for i in range(trials))
    return CampaignResult(trials=trials, detected=detected)


def magma_scenario(config: RunConfig, seed: int, *, offsets=MAGMA_OFFSETS,
                   victim_size: int = 0x18, repeats: int = 1,
                   warmup_ops: int | None = None) -> CampaignResult:
    """Sweep out-of-bounds offsets around one small chunk; one check per offset.

    Offsets landing inside the victim chunk are skipped: those are legal
    accesses, not violations.
    """
    trials = detected = 0
    reach = max(abs(min(offsets)), abs(max(offsets)))
    for rep in range(repeats):
        model, rng = _fresh_model(config, _trial_seed(seed, 1000 + rep))
        random_ops(model, rng, config.warmup_ops if warmup_ops is None else warmup_ops)
        cls = model.table.size_class_of(victim_size)
        chunk = model.table[cls.index].chunk_size
        victim = _plant_dense(model, victim_size, reach)
        for off in offsets:
            if 0 <= off < chunk:
                continue
            trials += 1
            if model.check_access(victim + off, 1) is not None:
                detected += 1
    return CampaignResult(trials=trials, detected=detected)
